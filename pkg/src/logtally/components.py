"""Connected-component labeling and the per-component summaries.

Counting logs is counting the distinct components of the binary matrix.
Labels come out in raster-scan order of each component's first pixel so the
same mask always yields the same LabelMap.
"""
from __future__ import annotations
from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .morphology import connectivity_footprint
from .raster import BinaryMask, LabelMap, raster_relabel

DEFAULT_CONNECTIVITY = 8
# partial logs at frame edges are dropped below this area when filtering is on
PARTIAL_LOG_MIN_AREA = 60


@dataclass(frozen=True)
class ComponentStats:
    label: int
    area: int
    centroid: tuple[float, float]
    bbox: tuple[int, int, int, int]  # min_row, min_col, max_row, max_col
    equivalent_radius: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d['centroid'] = list(self.centroid)
        d['bbox'] = list(self.bbox)
        return d


def label(mask: BinaryMask, connectivity: int = DEFAULT_CONNECTIVITY) -> LabelMap:
    structure = connectivity_footprint(connectivity)
    raw, n = ndimage.label(mask.data, structure=structure)
    if n == 0:
        return LabelMap(np.zeros(mask.shape, dtype=np.int32), 0)
    return LabelMap(*raster_relabel(raw))


def count_logs(labelmap: LabelMap) -> int:
    return labelmap.component_count


def filter_components(labelmap: LabelMap, min_area: int) -> LabelMap:
    """Drop components smaller than ``min_area`` pixels and renumber the rest."""
    if min_area < 0:
        raise InvalidInputError(f'min_area must be >= 0, got {min_area}')
    if min_area == 0 or labelmap.component_count == 0:
        return labelmap
    areas = np.bincount(labelmap.labels.ravel(), minlength=labelmap.component_count + 1)
    keep = areas >= min_area
    keep[0] = False
    kept = np.where(keep[labelmap.labels], labelmap.labels, 0)
    return LabelMap(*raster_relabel(kept))


def stats(labelmap: LabelMap) -> list[ComponentStats]:
    n = labelmap.component_count
    if n == 0:
        return []
    lab = labelmap.labels
    rows, cols = np.indices(lab.shape)
    flat = lab.ravel()
    area = np.bincount(flat, minlength=n + 1)
    sy = np.bincount(flat, weights=rows.ravel(), minlength=n + 1)
    sx = np.bincount(flat, weights=cols.ravel(), minlength=n + 1)
    boxes = ndimage.find_objects(lab, max_label=n)
    out = []
    for k in range(1, n + 1):
        a = int(area[k])
        sl = boxes[k - 1]
        out.append(ComponentStats(
            label=k,
            area=a,
            centroid=(float(sy[k] / a), float(sx[k] / a)),
            bbox=(sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1),
            equivalent_radius=math.sqrt(a / math.pi),
        ))
    return out
