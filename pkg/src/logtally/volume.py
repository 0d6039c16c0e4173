"""Log and pile volume from segmented faces.

Each log is a cylinder: face radius times itself times pi times depth. The
pile is the sum over logs. Radii come from the equivalent-circle radius of
each component scaled by a pixels-per-meter calibration; depth is supplied by
the user since one photo cannot observe it.
"""
from __future__ import annotations
from dataclasses import dataclass
import math

from .components import ComponentStats
from .errors import InvalidInputError


@dataclass(frozen=True)
class ScaleCalibration:
    pixels_per_meter: float

    def __post_init__(self):
        if not self.pixels_per_meter > 0:
            raise InvalidInputError(f'pixels_per_meter must be > 0, got {self.pixels_per_meter}')


@dataclass(frozen=True)
class LogDims:
    radius: float  # meters
    depth: float  # meters

    def __post_init__(self):
        if not self.radius > 0 or not self.depth > 0:
            raise InvalidInputError(f'log radius and depth must be > 0, got {self.radius}, {self.depth}')


@dataclass(frozen=True)
class PileVolume:
    total: float
    per_log: tuple[float, ...]
    log_count: int

    def to_dict(self) -> dict:
        return {'total_m3': self.total, 'log_count': self.log_count, 'per_log_m3': list(self.per_log)}


def log_volume(d: LogDims) -> float:
    return math.pi * d.radius * d.radius * d.depth


def pile_volume(logs: list[LogDims]) -> PileVolume:
    if not logs:
        raise InvalidInputError('pile_volume needs at least one log')
    per_log = tuple(log_volume(d) for d in logs)
    return PileVolume(total=math.fsum(per_log), per_log=per_log, log_count=len(per_log))


def dims_from_components(stats: list[ComponentStats], cal: ScaleCalibration,
                         depth_m: float) -> list[LogDims]:
    if not depth_m > 0:
        raise InvalidInputError(f'depth must be > 0, got {depth_m}')
    return [LogDims(radius=s.equivalent_radius / cal.pixels_per_meter, depth=depth_m)
            for s in stats if s.area > 0]
