"""Exception hierarchy shared by the library, the CLI and the HTTP service."""
from __future__ import annotations


class LogtallyError(Exception):
    """Base class for every error raised on purpose by logtally."""


class InvalidInputError(LogtallyError, ValueError):
    """Bad arguments, dimension mismatches or an invalid configuration."""


class DecodeError(LogtallyError):
    """Image bytes that Pillow cannot decode (truncated, wrong format, empty)."""


class GenerationFailedError(LogtallyError):
    """Synthetic scene or perturbation could not satisfy its constraints."""
