"""Binary and grayscale morphology used before and after counting.

Out-of-frame pixels are background everywhere in this module, so erosion
shrinks objects touching the image edge.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage
from skimage.morphology import h_maxima, reconstruction

from .errors import InvalidInputError
from .raster import BinaryMask, GrayImage, LabelMap, RgbImage, raster_relabel

StructuringElement = Literal['square3', 'cross3']

# iterations of 3x3 erosion applied to ground truth before training
DEFAULT_EROSION_ITERATIONS = 15
# levels of the ground-truth erosion sweep: 5, 10, ..., 50
SWEEP_LEVELS = tuple(range(5, 55, 5))
DEFAULT_H = 2.0

_FOOTPRINTS = {
    'square3': np.ones((3, 3), dtype=bool),
    'cross3': ndimage.generate_binary_structure(2, 1),
}


def footprint(se: StructuringElement) -> np.ndarray:
    try:
        return _FOOTPRINTS[se]
    except KeyError:
        raise InvalidInputError(f'unknown structuring element: {se!r}') from None


def connectivity_footprint(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return _FOOTPRINTS['cross3']
    if connectivity == 8:
        return _FOOTPRINTS['square3']
    raise InvalidInputError(f'connectivity must be 4 or 8, got {connectivity!r}')


def _check_iterations(iterations: int) -> int:
    k = int(iterations)
    if k < 0:
        raise InvalidInputError(f'iterations must be >= 0, got {iterations}')
    return k


@dataclass(frozen=True, eq=False)
class DistanceField:
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise InvalidInputError(f'DistanceField must be 2-D, got shape {arr.shape}')
        if arr.size and arr.min() < 0:
            raise InvalidInputError('distances must be non-negative')
        arr.flags.writeable = False
        object.__setattr__(self, 'values', arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GroundTruthMode:
    mode: Literal['flat-red', 'red-gradient-capped', 'gray-gradient-full'] = 'flat-red'
    max_diameter: float | None = None

    def __post_init__(self):
        if self.mode not in ('flat-red', 'red-gradient-capped', 'gray-gradient-full'):
            raise InvalidInputError(f'unknown ground-truth mode: {self.mode!r}')
        if self.mode == 'red-gradient-capped':
            if self.max_diameter is None or self.max_diameter <= 0:
                raise InvalidInputError('red-gradient-capped needs max_diameter > 0')


def erode(mask: BinaryMask, se: StructuringElement = 'square3',
          iterations: int = DEFAULT_EROSION_ITERATIONS) -> BinaryMask:
    k = _check_iterations(iterations)
    if k == 0:
        return mask
    # scipy treats iterations=0 as "until stable", hence the early return above
    out = ndimage.binary_erosion(mask.data, structure=footprint(se), iterations=k, border_value=0)
    return BinaryMask(out)


def dilate(mask: BinaryMask, se: StructuringElement = 'square3', iterations: int = 1) -> BinaryMask:
    k = _check_iterations(iterations)
    if k == 0:
        return mask
    out = ndimage.binary_dilation(mask.data, structure=footprint(se), iterations=k, border_value=0)
    return BinaryMask(out)


def _padded_distance(mask: np.ndarray, **kw) -> np.ndarray:
    padded = np.pad(mask, 1, mode='constant', constant_values=False)
    return kw.pop('fn')(padded, **kw)[1:-1, 1:-1]


def edt(mask: BinaryMask) -> DistanceField:
    """Exact Euclidean distance from each foreground pixel to the nearest background."""
    if not mask.data.any():
        return DistanceField(np.zeros(mask.shape))
    return DistanceField(_padded_distance(mask.data, fn=ndimage.distance_transform_edt))


def chebyshev_distance(mask: BinaryMask) -> np.ndarray:
    if not mask.data.any():
        return np.zeros(mask.shape)
    return _padded_distance(mask.data, fn=ndimage.distance_transform_cdt, metric='chessboard').astype(np.float64)


def manhattan_distance(mask: BinaryMask) -> np.ndarray:
    if not mask.data.any():
        return np.zeros(mask.shape)
    return _padded_distance(mask.data, fn=ndimage.distance_transform_cdt, metric='taxicab').astype(np.float64)


def dynamic_erode(mask: BinaryMask, radius: float) -> BinaryMask:
    """Keep the pixels lying strictly farther than ``radius`` from background."""
    if radius < 0:
        raise InvalidInputError(f'radius must be >= 0, got {radius}')
    if radius == 0:
        return mask
    return BinaryMask(edt(mask).values > radius)


def _reconstruct(marker: np.ndarray, mask: np.ndarray, connectivity: int) -> np.ndarray:
    fp = connectivity_footprint(connectivity)
    return reconstruction(marker.astype(np.float64), mask.astype(np.float64),
                          method='dilation', footprint=fp)


def reconstruct(marker: GrayImage, mask: GrayImage, connectivity: int = 8) -> GrayImage:
    """Grayscale reconstruction by dilation of ``marker`` under ``mask``."""
    if marker.data.shape != mask.data.shape:
        raise InvalidInputError(f'dimension mismatch: {marker.data.shape} vs {mask.data.shape}')
    if np.any(marker.data > mask.data):
        raise InvalidInputError('marker exceeds mask')
    out = _reconstruct(marker.data, mask.data, connectivity)
    return GrayImage(np.rint(out).astype(np.uint8))


def h_maxima_centroids(field: DistanceField, h: float = DEFAULT_H,
                       connectivity: int = 8) -> list[tuple[int, int]]:
    """One centroid per regional maximum of ``field`` at least ``h`` deep.

    The maxima are the connected dome tops where ``field - R(field - h)``
    reaches ``h``, so ripples shallower than ``h`` never count and a dome of
    depth exactly ``h`` does. Centroids are area-weighted and rounded half up.
    """
    if h <= 0:
        raise InvalidInputError(f'h must be > 0, got {h}')
    f = field.values
    fg = f > 0
    if not fg.any():
        return []
    peaks = h_maxima(f, h, footprint=connectivity_footprint(connectivity)).astype(bool) & fg
    labels, n = ndimage.label(peaks, structure=connectivity_footprint(connectivity))
    if n == 0:
        return []
    labels, n = raster_relabel(labels)
    index = np.arange(1, n + 1)
    centers = ndimage.center_of_mass(np.ones_like(f), labels, index)
    return [(int(np.floor(r + 0.5)), int(np.floor(c + 0.5))) for r, c in centers]


def _instance_geometry(labels: np.ndarray, n: int):
    rows, cols = np.indices(labels.shape)
    flat = labels.ravel()
    area = np.bincount(flat, minlength=n + 1).astype(np.float64)
    safe = np.where(area > 0, area, 1.0)
    cy = np.bincount(flat, weights=rows.ravel(), minlength=n + 1) / safe
    cx = np.bincount(flat, weights=cols.ravel(), minlength=n + 1) / safe
    return rows, cols, area, cy, cx


def make_ground_truth(instances: LabelMap, mode: GroundTruthMode) -> RgbImage | GrayImage:
    """Render instance labels as flat red, capped red ramp or full gray ramp."""
    lab = instances.labels
    n = instances.component_count
    fg = lab != 0
    if mode.mode == 'flat-red':
        out = np.zeros(lab.shape + (3,), dtype=np.uint8)
        out[fg, 0] = 255
        return RgbImage(out)

    rows, cols, area, cy, cx = _instance_geometry(lab, n)
    r_inst = np.sqrt(area / np.pi)
    if mode.mode == 'red-gradient-capped':
        r_use = np.minimum(r_inst, mode.max_diameter / 2.0)
    else:
        r_use = r_inst
    r_use[0] = 1.0
    d = np.hypot(rows - cy[lab], cols - cx[lab])
    ramp = 255.0 * np.maximum(0.0, 1.0 - d / r_use[lab])
    value = np.where(fg, np.floor(ramp + 0.5), 0).astype(np.uint8)
    if mode.mode == 'gray-gradient-full':
        return GrayImage(value)
    out = np.zeros(lab.shape + (3,), dtype=np.uint8)
    out[..., 0] = value
    return RgbImage(out)


def erode_instance_array(labels: np.ndarray, se: StructuringElement, iterations: int) -> np.ndarray:
    """Erode every instance on its own; labels keep their original values."""
    k = _check_iterations(iterations)
    if k == 0:
        return np.array(labels, copy=True)
    fp = ndimage.iterate_structure(footprint(se), k)
    lo = ndimage.minimum_filter(labels, footprint=fp, mode='constant', cval=0)
    hi = ndimage.maximum_filter(labels, footprint=fp, mode='constant', cval=0)
    keep = (labels != 0) & (lo == labels) & (hi == labels)
    return np.where(keep, labels, 0)


def erode_instances(instances: LabelMap, se: StructuringElement = 'square3',
                    iterations: int = DEFAULT_EROSION_ITERATIONS) -> LabelMap:
    out = erode_instance_array(instances.labels, se, iterations)
    return LabelMap(*raster_relabel(out))
