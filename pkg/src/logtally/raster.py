"""Raster grid types, binarization and image I/O.

All grids are row-major numpy arrays addressed as ``(row, col)``, i.e. the
``(i, j)`` order of the binary matrix the counting rule is written in. The
arrays are copied on construction and frozen, so every value type here is
safe to share between threads.
"""
from __future__ import annotations
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import Literal, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, InvalidInputError

PNM_SUFFIXES = {'.pgm', '.ppm', '.pnm'}
IMAGE_SUFFIXES = {'.png'} | PNM_SUFFIXES


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _check_dims(arr: np.ndarray, ndim: int, what: str) -> None:
    if arr.ndim != ndim:
        raise InvalidInputError(f'{what} must be {ndim}-D, got shape {arr.shape}')
    if arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise InvalidInputError(f'{what} has a zero dimension: {arr.shape}')


def _as_uint8(data, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise InvalidInputError(f'{what} values must lie in [0, 255]')
        arr = arr.astype(np.uint8)
    return np.array(arr, dtype=np.uint8, copy=True)


@dataclass(frozen=True, eq=False)
class GrayImage:
    data: np.ndarray

    def __post_init__(self):
        arr = _as_uint8(self.data, 'GrayImage')
        _check_dims(arr, 2, 'GrayImage')
        object.__setattr__(self, 'data', _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class RgbImage:
    data: np.ndarray

    def __post_init__(self):
        arr = _as_uint8(self.data, 'RgbImage')
        _check_dims(arr, 3, 'RgbImage')
        if arr.shape[2] != 3:
            raise InvalidInputError(f'RgbImage needs 3 channels, got {arr.shape[2]}')
        object.__setattr__(self, 'data', _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return isinstance(other, RgbImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=bool, copy=True)
        _check_dims(arr, 2, 'BinaryMask')
        object.__setattr__(self, 'data', _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.data, other.data)


def raster_relabel(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber nonzero labels to 1..K in raster order of first appearance."""
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    keep = values != 0
    values, first = values[keep], first[keep]
    if values.size == 0:
        return np.zeros(labels.shape, dtype=np.int32), 0
    order = np.argsort(first, kind='stable')
    lut = np.zeros(int(values.max()) + 1, dtype=np.int32)
    lut[values[order]] = np.arange(1, values.size + 1, dtype=np.int32)
    return lut[labels], int(values.size)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Instance labels: 0 is background, 1..component_count each occur."""
    labels: np.ndarray
    component_count: int

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.size and arr.min() < 0:
            raise InvalidInputError('labels must be non-negative')
        arr = np.array(arr, dtype=np.int32, copy=True)
        _check_dims(arr, 2, 'LabelMap')
        k = int(self.component_count)
        present = np.bincount(arr.ravel(), minlength=k + 1)
        if present.size != k + 1 or (k and np.any(present[1:] == 0)):
            raise InvalidInputError(f'labels are not the contiguous set 1..{k}')
        object.__setattr__(self, 'labels', _frozen(arr))
        object.__setattr__(self, 'component_count', k)

    @classmethod
    def from_array(cls, labels: np.ndarray) -> 'LabelMap':
        """Build from arbitrary non-negative labels, renumbering in raster order."""
        arr = np.asarray(labels)
        if arr.size and arr.min() < 0:
            raise InvalidInputError('labels must be non-negative')
        relabeled, k = raster_relabel(arr.astype(np.int64))
        return cls(relabeled, k)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def support(self) -> BinaryMask:
        return BinaryMask(self.labels != 0)

    def __eq__(self, other):
        return (isinstance(other, LabelMap) and self.component_count == other.component_count
                and np.array_equal(self.labels, other.labels))


AnyImage = Union[RgbImage, GrayImage]


@dataclass(frozen=True)
class BinarizePolicy:
    mode: Literal['luma', 'red-dominant', 'channel'] = 'red-dominant'
    threshold: int = 127
    channel: int | None = None

    def __post_init__(self):
        if self.mode not in ('luma', 'red-dominant', 'channel'):
            raise InvalidInputError(f'unknown binarize mode: {self.mode!r}')
        if not 0 <= int(self.threshold) <= 255:
            raise InvalidInputError(f'threshold out of range [0, 255]: {self.threshold}')
        if self.mode == 'channel' and self.channel not in (0, 1, 2):
            raise InvalidInputError(f'channel index must be 0, 1 or 2, got {self.channel!r}')

    def to_dict(self) -> dict:
        return {'mode': self.mode, 'threshold': int(self.threshold), 'channel': self.channel}


def _luma(rgb: np.ndarray) -> np.ndarray:
    # integer weights so that (v, v, v) -> v exactly and .5 rounds up
    r = rgb[..., 0].astype(np.int32)
    g = rgb[..., 1].astype(np.int32)
    b = rgb[..., 2].astype(np.int32)
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def to_gray(img: RgbImage) -> GrayImage:
    return GrayImage(_luma(img.data))


def binarize(img: AnyImage, policy: BinarizePolicy | None = None) -> BinaryMask:
    """Foreground iff the policy test strictly exceeds the threshold.

    Gray images carry no hue, so every mode reduces to ``value > threshold``
    on them.
    """
    policy = policy or BinarizePolicy()
    t = int(policy.threshold)
    if isinstance(img, GrayImage):
        return BinaryMask(img.data > t)
    if not isinstance(img, RgbImage):
        raise InvalidInputError(f'cannot binarize {type(img).__name__}')
    d = img.data
    if policy.mode == 'luma':
        return BinaryMask(_luma(d) > t)
    if policy.mode == 'channel':
        return BinaryMask(d[..., policy.channel] > t)
    r, g, b = d[..., 0], d[..., 1], d[..., 2]
    return BinaryMask((r > t) & (r > g) & (r > b))


def render_mask(mask: BinaryMask) -> GrayImage:
    return GrayImage(np.where(mask.data, 255, 0).astype(np.uint8))


def mask_difference(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixels set in exactly one of the two masks."""
    if a.shape != b.shape:
        raise InvalidInputError(f'dimension mismatch: {a.shape} vs {b.shape}')
    return BinaryMask(np.logical_xor(a.data, b.data))


# ---- I/O ----

def _open(source: str | Path | bytes) -> Image.Image:
    try:
        if isinstance(source, (bytes, bytearray, memoryview)):
            if not len(source):
                raise DecodeError('empty image body')
            im = Image.open(BytesIO(bytes(source)))
        else:
            im = Image.open(Path(source))
        im.load()  # force a full decode so truncated files fail here
        return im
    except DecodeError:
        raise
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, Image.DecompressionBombError, OSError, SyntaxError, ValueError) as e:
        raise DecodeError(f'cannot decode image: {e}') from None


def _is_wide(im: Image.Image) -> bool:
    return im.mode in ('I', 'I;16', 'I;16B', 'I;16L', 'I;16N')


def read_image(source: str | Path | bytes) -> AnyImage:
    """Decode PNG or binary PGM/PPM into a GrayImage or RgbImage.

    16-bit grayscale (instance-label files) is read as a mask: every nonzero
    pixel becomes 255.
    """
    im = _open(source)
    if _is_wide(im):
        arr = np.asarray(im)
        return GrayImage(np.where(arr > 0, 255, 0).astype(np.uint8))
    if im.mode in ('L', '1'):
        return GrayImage(np.asarray(im.convert('L')))
    if im.mode == 'LA':
        return GrayImage(np.asarray(im.convert('L')))
    return RgbImage(np.asarray(im.convert('RGB')))


def read_label_array(source: str | Path | bytes) -> np.ndarray | None:
    """Raw integer labels of a 16-bit file, or ``None`` for 8-bit images."""
    im = _open(source)
    if not _is_wide(im):
        return None
    return np.asarray(im).astype(np.int64)


def _to_pil(img) -> Image.Image:
    if isinstance(img, RgbImage):
        return Image.fromarray(np.ascontiguousarray(img.data))
    if isinstance(img, GrayImage):
        return Image.fromarray(np.ascontiguousarray(img.data))
    if isinstance(img, BinaryMask):
        return _to_pil(render_mask(img))
    if isinstance(img, LabelMap):
        if img.component_count > 65535:
            raise InvalidInputError('more than 65535 labels do not fit a 16-bit PNG')
        return Image.fromarray(img.labels.astype(np.uint16))
    raise InvalidInputError(f'cannot encode {type(img).__name__}')


def encode_png(img) -> bytes:
    buf = BytesIO()
    _to_pil(img).save(buf, format='PNG')
    return buf.getvalue()


def write_image(path: str | Path, img) -> Path:
    """PNG by default; ``.pgm``/``.ppm``/``.pnm`` write binary P5/P6."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    pil = _to_pil(img)
    if p.suffix.lower() in PNM_SUFFIXES:
        if isinstance(img, LabelMap):
            raise InvalidInputError('label maps are stored as 16-bit PNG only')
        pil.save(p, format='PPM')
    else:
        pil.save(p, format='PNG')
    return p


def resize_nearest(img, size: tuple[int, int]):
    """Nearest-neighbour resample to ``(height, width)``."""
    h, w = int(size[0]), int(size[1])
    if h <= 0 or w <= 0:
        raise InvalidInputError(f'target size must be positive: {size}')
    if (img.height, img.width) == (h, w):
        return img
    if isinstance(img, LabelMap):
        out = Image.fromarray(img.labels.astype(np.int32)).resize((w, h), Image.Resampling.NEAREST)
        return LabelMap.from_array(np.asarray(out))
    out = np.asarray(_to_pil(img).resize((w, h), Image.Resampling.NEAREST))
    if isinstance(img, BinaryMask):
        return BinaryMask(out > 0)
    return type(img)(out)
