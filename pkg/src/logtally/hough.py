"""Circular Hough transform over binary masks.

Boundary pixels vote for every (center, radius) whose circle passes within
half a pixel of the pixel's outer edge. A boundary pixel's center sits half a
pixel inside the object edge, so the voting band for radius ``r`` is
``r - 1 <= distance <= r``. Votes are normalized by the ideal perimeter
``2*pi*r`` and the survivors go through greedy center-distance suppression.
"""
from __future__ import annotations
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import fft, ndimage

from .errors import InvalidInputError
from .morphology import footprint
from .raster import BinaryMask, GrayImage

# radius range fixed by the counting experiments on the log dataset
R_MIN = 5
R_MAX = 60
GRAY_CORE_THRESHOLD = 127


@dataclass(frozen=True)
class HoughParams:
    r_min: int = R_MIN
    r_max: int = R_MAX
    vote_threshold: float = 0.4
    nms_min_center_dist: float | None = None  # None means r_min
    radius_step: int = 1

    def __post_init__(self):
        if not 0 < self.r_min <= self.r_max:
            raise InvalidInputError(f'need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}')
        if not 0 < self.vote_threshold <= 1:
            raise InvalidInputError(f'vote_threshold must lie in (0, 1], got {self.vote_threshold}')
        if self.nms_min_center_dist is not None and self.nms_min_center_dist < 0:
            raise InvalidInputError('nms_min_center_dist must be >= 0')
        if int(self.radius_step) < 1:
            raise InvalidInputError(f'radius_step must be >= 1, got {self.radius_step}')

    @property
    def nms_distance(self) -> float:
        return float(self.r_min if self.nms_min_center_dist is None else self.nms_min_center_dist)

    def radii(self) -> list[int]:
        return list(range(int(self.r_min), int(self.r_max) + 1, int(self.radius_step)))

    def to_dict(self) -> dict:
        return {
            'r_min': self.r_min, 'r_max': self.r_max, 'vote_threshold': self.vote_threshold,
            'nms_min_center_dist': self.nms_distance, 'radius_step': self.radius_step,
        }


@dataclass(frozen=True)
class Circle:
    center: tuple[int, int]
    radius: int
    score: float

    def to_dict(self) -> dict:
        return {'center': list(self.center), 'radius': self.radius, 'score': self.score}


def _boundary(mask: np.ndarray) -> np.ndarray:
    inner = ndimage.binary_erosion(mask, structure=footprint('cross3'), border_value=0)
    return mask & ~inner


def boundary_pixels(mask: BinaryMask) -> list[tuple[int, int]]:
    """Foreground pixels with a background (or out-of-frame) 4-neighbour."""
    return [(int(r), int(c)) for r, c in np.argwhere(_boundary(mask.data))]


@lru_cache(maxsize=256)
def _ring(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    d = np.hypot(yy, xx)
    return ((d >= radius - 1 - 1e-9) & (d <= radius + 1e-9)).astype(np.float64)


@lru_cache(maxsize=128)
def _ring_spectrum(radius: int, shape: tuple[int, int]) -> np.ndarray:
    return fft.rfft2(_ring(radius), shape)


def _accumulate(edges: np.ndarray, radii: list[int]):
    """Yield ``(radius, votes)`` with votes indexed by candidate center."""
    h, w = edges.shape
    pad = max(radii)
    shape = (fft.next_fast_len(h + 2 * pad, real=True), fft.next_fast_len(w + 2 * pad, real=True))
    spectrum = fft.rfft2(edges.astype(np.float64), shape)
    for r in radii:
        full = fft.irfft2(spectrum * _ring_spectrum(r, shape), shape)
        yield r, np.rint(full[r:r + h, r:r + w])


def _suppress(rows, cols, radii, scores, min_dist: float) -> list[Circle]:
    order = np.lexsort((cols, rows, radii, -scores))
    kept: list[Circle] = []
    kr = np.empty(0)
    kc = np.empty(0)
    d2 = min_dist * min_dist
    for idx in order:
        r, c = rows[idx], cols[idx]
        if kept and min_dist > 0 and np.any((kr - r) ** 2 + (kc - c) ** 2 < d2):
            continue
        kept.append(Circle((int(r), int(c)), int(radii[idx]), float(scores[idx])))
        kr = np.append(kr, r)
        kc = np.append(kc, c)
    return kept


def _detect(mask: np.ndarray, radii: list[int], params: HoughParams) -> list[Circle]:
    edges = _boundary(mask)
    if not edges.any():
        return []
    rows, cols, rads, scores = [], [], [], []
    for r, votes in _accumulate(edges, radii):
        score = votes / (2.0 * math.pi * r)
        rr, cc = np.nonzero(score >= params.vote_threshold - 1e-12)
        if rr.size:
            rows.append(rr)
            cols.append(cc)
            rads.append(np.full(rr.size, r))
            scores.append(score[rr, cc])
    if not rows:
        return []
    return _suppress(np.concatenate(rows), np.concatenate(cols), np.concatenate(rads),
                     np.concatenate(scores), params.nms_distance)


def detect_circles(mask: BinaryMask, params: HoughParams | None = None) -> list[Circle]:
    params = params or HoughParams()
    return _detect(mask.data, params.radii(), params)


def detect_centroids_fixed_radius(img: GrayImage, r_fixed: int,
                                  params: HoughParams | None = None) -> list[Circle]:
    """Single-radius accumulator over the bright cores of a gray-gradient image."""
    params = params or HoughParams()
    if not params.r_min <= r_fixed <= params.r_max:
        raise InvalidInputError(f'r_fixed {r_fixed} outside [{params.r_min}, {params.r_max}]')
    return _detect(img.data > GRAY_CORE_THRESHOLD, [int(r_fixed)], params)
