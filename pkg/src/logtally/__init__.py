"""logtally: count wood logs in segmented pile photos and score the counts."""
from __future__ import annotations

__version__ = '0.3.0'

from .errors import DecodeError, GenerationFailedError, InvalidInputError, LogtallyError  # noqa: E402
from .pipeline import PipelineConfig, run_count, run_eval  # noqa: E402

__all__ = [
    '__version__', 'LogtallyError', 'InvalidInputError', 'DecodeError', 'GenerationFailedError',
    'PipelineConfig', 'run_count', 'run_eval',
]
