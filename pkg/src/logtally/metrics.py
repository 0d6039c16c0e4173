"""Pixel metrics, instance matching and the count scores built on top of it.

Matching decides, for every predicted component, which ground-truth logs it
contains: a log is contained when the component covers at least
``coverage_tau`` of the log's pixels. One log inside a component is a correct
identification, two or more make an intersection worth one point per log,
none is noise. Logs contained by no component are errors.
"""
from __future__ import annotations
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError
from .raster import BinaryMask, LabelMap


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ('tp', 'tn', 'fp', 'fn'):
            if int(getattr(self, name)) < 0:
                raise InvalidInputError(f'{name} must be >= 0')

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PixelScores:
    accuracy: float
    precision: float
    recall: float
    f1: float
    kappa: float
    iou: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CountTally:
    ci: int = 0
    e: int = 0
    i: int = 0
    n: int = 0

    def __post_init__(self):
        for name in ('ci', 'e', 'i', 'n'):
            if int(getattr(self, name)) < 0:
                raise InvalidInputError(f'{name} must be >= 0')
        if self.i == 1:
            raise InvalidInputError('an intersection involves at least two logs; i cannot be 1')

    @property
    def total(self) -> int:
        return self.ci + self.e + self.i + self.n

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MatchParams:
    coverage_tau: float = 0.5

    def __post_init__(self):
        if not 0 < float(self.coverage_tau) <= 1:
            raise InvalidInputError(f'coverage_tau must lie in (0, 1], got {self.coverage_tau}')


@dataclass(frozen=True)
class MatchResult:
    tally: CountTally
    # predicted label -> ground-truth labels it was credited with
    assignments: dict[int, tuple[int, ...]] = field(default_factory=dict)
    unmatched_gt: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            'tally': self.tally.to_dict(),
            'assignments': {str(k): list(v) for k, v in sorted(self.assignments.items())},
            'unmatched_gt': list(self.unmatched_gt),
        }


def _same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise InvalidInputError(f'dimension mismatch: {a.shape} vs {b.shape}')


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    _same_shape(pred, gt)
    p, g = pred.data, gt.data
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(p.size) - tp - fp - fn
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def pixel_scores(c: ConfusionCounts) -> PixelScores:
    total = c.total
    if total == 0:
        raise InvalidInputError('cannot score an empty confusion table')
    tp, tn, fp, fn = (float(x) for x in (c.tp, c.tn, c.fp, c.fn))
    n = float(total)
    p_o = (tp + tn) / n
    p_e = ((tp + fn) * (tp + fp) + (fp + tn) * (fn + tn)) / (n * n)
    if p_e >= 1.0:
        kappa = 1.0 if c.fp == 0 and c.fn == 0 else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return PixelScores(
        accuracy=p_o,
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        # same value as 2pr/(p+r), without the intermediate rounding
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        kappa=kappa,
        iou=_ratio(tp, tp + fp + fn),
    )


def iss(t: CountTally) -> float:
    """Share of correct identifications among everything tallied."""
    if t.total == 0:
        raise InvalidInputError('ISS is undefined for an all-zero tally')
    return t.ci / t.total


def accuracy_logs(t: CountTally) -> float:
    den = t.ci + t.e + t.n
    if den == 0:
        raise InvalidInputError('accuracy_logs is undefined when ci + e + n == 0')
    return t.ci / den


def overlap_matrix(pred: LabelMap, gt: LabelMap) -> np.ndarray:
    """``m[c, g]`` = pixels shared by predicted label ``c`` and gt label ``g``."""
    _same_shape(pred, gt)
    kp, kg = pred.component_count, gt.component_count
    idx = pred.labels.astype(np.int64).ravel() * (kg + 1) + gt.labels.astype(np.int64).ravel()
    return np.bincount(idx, minlength=(kp + 1) * (kg + 1)).reshape(kp + 1, kg + 1)


def match_instances(pred: LabelMap, gt: LabelMap, params: MatchParams | None = None) -> MatchResult:
    params = params or MatchParams()
    m = overlap_matrix(pred, gt)
    kp, kg = pred.component_count, gt.component_count
    gt_area = m.sum(axis=0)

    covered = np.zeros((kp + 1, kg + 1), dtype=bool)
    if kp and kg:
        with np.errstate(divide='ignore', invalid='ignore'):
            frac = m[1:, 1:] / np.where(gt_area[1:] > 0, gt_area[1:], 1)[None, :]
        covered[1:, 1:] = frac >= params.coverage_tau - 1e-12

    # each gt log belongs to one component: largest overlap, then lowest label
    owned: dict[int, list[int]] = {c: [] for c in range(1, kp + 1)}
    unmatched: list[int] = []
    for g in range(1, kg + 1):
        cands = np.nonzero(covered[:, g])[0]
        if cands.size == 0:
            unmatched.append(g)
            continue
        best = cands[np.argmax(m[cands, g])]  # argmax keeps the first, i.e. lowest label
        owned[int(best)].append(g)

    ci = i = n = 0
    for c in range(1, kp + 1):
        k = len(owned[c])
        if k == 0:
            n += 1
        elif k == 1:
            ci += 1
        else:
            i += k
    tally = CountTally(ci=ci, e=len(unmatched), i=i, n=n)
    return MatchResult(tally, {c: tuple(v) for c, v in owned.items() if v}, tuple(unmatched))
