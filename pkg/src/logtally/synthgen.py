"""Seeded synthetic log piles with known ground truth.

Scenes are discs packed into a frame with a guaranteed background valley
between them, plus optional noise blobs kept apart from the logs. ``perturb``
turns a scene into a prediction whose tally is known by construction:
bridged groups become intersections, dropped logs become errors and stray
blobs become noise.

Randomness comes from ``numpy.random.default_rng`` seeded through
``SeedSequence`` (PCG64), so a (spec, seed) pair gives the same scene on any
platform.
"""
from __future__ import annotations
from dataclasses import asdict, dataclass, field
from pathlib import Path
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .components import label
from .errors import GenerationFailedError, InvalidInputError
from .ledger import load_json, save_json
from .metrics import CountTally
from .morphology import dilate
from .raster import BinaryMask, LabelMap, write_image

MAX_PLACEMENT_ATTEMPTS = 2000
MAX_ROUGHNESS = 0.2
# background between a noise blob and anything else, in pixels
NOISE_CLEARANCE = 2
CORRIDOR_HALF_WIDTH = 1.5  # 3-px wide bridge


@dataclass(frozen=True)
class SynthSpec:
    width: int
    height: int
    n_logs: int
    radius_range: tuple[int, int] = (8, 20)
    min_gap: int = 3
    seed: int = 0
    noise_blobs: int = 0
    noise_area_range: tuple[int, int] = (6, 30)
    roughness: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'radius_range', tuple(int(v) for v in self.radius_range))
        object.__setattr__(self, 'noise_area_range', tuple(int(v) for v in self.noise_area_range))
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(f'frame must be positive, got {self.width}x{self.height}')
        if self.n_logs < 0 or self.noise_blobs < 0:
            raise InvalidInputError('n_logs and noise_blobs must be >= 0')
        lo, hi = self.radius_range
        if not 1 <= lo <= hi:
            raise InvalidInputError(f'radius_range needs 1 <= r_lo <= r_hi, got {self.radius_range}')
        a_lo, a_hi = self.noise_area_range
        if not 1 <= a_lo <= a_hi:
            raise InvalidInputError(f'noise_area_range needs 1 <= a_lo <= a_hi, got {self.noise_area_range}')
        if self.min_gap < 0:
            raise InvalidInputError(f'min_gap must be >= 0, got {self.min_gap}')
        if not 0.0 <= self.roughness <= MAX_ROUGHNESS:
            raise InvalidInputError(f'roughness must lie in [0, {MAX_ROUGHNESS}], got {self.roughness}')

    @classmethod
    def from_dict(cls, d: dict) -> 'SynthSpec':
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f'unknown SynthSpec fields: {sorted(extra)}')
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidInputError(f'bad SynthSpec: {e}') from None

    @classmethod
    def from_file(cls, path: str | Path) -> 'SynthSpec':
        return cls.from_dict(load_json(path))

    def to_dict(self) -> dict:
        d = asdict(self)
        d['radius_range'] = list(self.radius_range)
        d['noise_area_range'] = list(self.noise_area_range)
        return d


@dataclass(frozen=True)
class SynthScene:
    spec: SynthSpec
    gt_instances: LabelMap
    gt_mask: BinaryMask
    noise_mask: BinaryMask
    manifest: dict

    @property
    def observed_mask(self) -> BinaryMask:
        """What a segmentation would hand the counter: logs plus noise."""
        return BinaryMask(self.gt_mask.data | self.noise_mask.data)

    @property
    def centers(self) -> dict[int, tuple[int, int]]:
        return {e['label']: tuple(e['center']) for e in self.manifest['logs']}


@dataclass(frozen=True)
class PerturbSpec:
    merge_pairs: tuple[tuple[int, int], ...] = ()
    drop_labels: tuple[int, ...] = ()
    extra_noise: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'merge_pairs', tuple((int(a), int(b)) for a, b in self.merge_pairs))
        object.__setattr__(self, 'drop_labels', tuple(int(v) for v in self.drop_labels))
        if self.extra_noise < 0:
            raise InvalidInputError('extra_noise must be >= 0')


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(stream,)))


def _shape_mask(h: int, w: int, center, radius: float, rough: tuple[float, int, float] | None):
    cy, cx = center
    r_out = radius * (1 + (rough[0] if rough else 0.0))
    r0, r1 = max(0, int(math.floor(cy - r_out))), min(h, int(math.ceil(cy + r_out)) + 1)
    c0, c1 = max(0, int(math.floor(cx - r_out))), min(w, int(math.ceil(cx + r_out)) + 1)
    yy, xx = np.mgrid[r0:r1, c0:c1]
    dy, dx = yy - cy, xx - cx
    d = np.hypot(dy, dx)
    if rough:
        amp, freq, phase = rough
        limit = radius * (1 + amp * np.sin(freq * np.arctan2(dy, dx) + phase))
    else:
        limit = radius
    return (slice(r0, r1), slice(c0, c1)), d <= limit + 1e-9


def _place_logs(spec: SynthSpec, rng: np.random.Generator):
    h, w = spec.height, spec.width
    placed: list[tuple[int, int, int, float]] = []  # row, col, radius, outer radius
    lo, hi = spec.radius_range
    for k in range(spec.n_logs):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            r = int(rng.integers(lo, hi + 1))
            outer = r * (1 + spec.roughness)
            m = int(math.ceil(outer))
            if 2 * m + 1 > h or 2 * m + 1 > w:
                continue
            cy = int(rng.integers(m, h - m))
            cx = int(rng.integers(m, w - m))
            if all(math.hypot(cy - py, cx - px) >= outer + po + spec.min_gap + 2
                   for py, px, _, po in placed):
                placed.append((cy, cx, r, outer))
                break
        else:
            raise GenerationFailedError(
                f'could not place log {k + 1} of {spec.n_logs} with min_gap={spec.min_gap} '
                f'in {w}x{h} after {MAX_PLACEMENT_ATTEMPTS} attempts')
    return placed


def _blob_mask(shape, forbidden: np.ndarray, rng: np.random.Generator,
               area_range: tuple[int, int], what: str) -> np.ndarray:
    h, w = shape
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        area = int(rng.integers(area_range[0], area_range[1] + 1))
        rho = max(0.5, math.sqrt(area / math.pi))
        m = int(math.ceil(rho))
        if 2 * m + 1 > h or 2 * m + 1 > w:
            break
        cy = int(rng.integers(m, h - m))
        cx = int(rng.integers(m, w - m))
        (rs, cs), disc = _shape_mask(h, w, (cy, cx), rho, None)
        if not np.any(forbidden[rs, cs] & disc):
            out = np.zeros(shape, dtype=bool)
            out[rs, cs] = disc
            return out
    raise GenerationFailedError(
        f'could not place {what} with {NOISE_CLEARANCE}-px clearance after {MAX_PLACEMENT_ATTEMPTS} attempts')


def _clearance(mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return mask
    return dilate(BinaryMask(mask), 'square3', NOISE_CLEARANCE).data


def _blob_entry(blob: np.ndarray) -> dict:
    rows, cols = np.nonzero(blob)
    return {'area': int(rows.size),
            'bbox': [int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())]}


def generate(spec: SynthSpec) -> SynthScene:
    rng = _rng(spec.seed)
    h, w = spec.height, spec.width
    placed = _place_logs(spec, rng)

    labels = np.zeros((h, w), dtype=np.int32)
    logs = []
    for k, (cy, cx, r, _) in enumerate(placed, start=1):
        rough = None
        if spec.roughness > 0:
            rough = (spec.roughness, int(rng.integers(3, 8)), float(rng.uniform(0, 2 * math.pi)))
        (rs, cs), disc = _shape_mask(h, w, (cy, cx), r, rough)
        labels[rs, cs][disc] = k
        logs.append({'label': k, 'center': [cy, cx], 'radius': r, 'area': int(np.count_nonzero(disc))})

    gt = labels != 0
    noise = np.zeros((h, w), dtype=bool)
    blobs = []
    for j in range(spec.noise_blobs):
        blob = _blob_mask((h, w), _clearance(gt | noise), rng, spec.noise_area_range, f'noise blob {j + 1}')
        noise |= blob
        blobs.append(_blob_entry(blob))

    manifest = {'spec': spec.to_dict(), 'logs': logs, 'noise': blobs}
    return SynthScene(spec=spec, gt_instances=LabelMap(labels, len(placed)), gt_mask=BinaryMask(gt),
                      noise_mask=BinaryMask(noise), manifest=manifest)


def _corridor(shape, a, b) -> np.ndarray:
    """Pixels within half a corridor width of the segment from ``a`` to ``b``."""
    (ay, ax), (by, bx) = a, b
    pad = int(math.ceil(CORRIDOR_HALF_WIDTH))
    r0, r1 = max(0, min(ay, by) - pad), min(shape[0], max(ay, by) + pad + 1)
    c0, c1 = max(0, min(ax, bx) - pad), min(shape[1], max(ax, bx) + pad + 1)
    yy, xx = np.mgrid[r0:r1, c0:c1].astype(np.float64)
    vy, vx = by - ay, bx - ax
    seg = vy * vy + vx * vx
    t = np.clip(((yy - ay) * vy + (xx - ax) * vx) / seg, 0.0, 1.0) if seg else np.zeros_like(yy)
    d = np.hypot(yy - (ay + t * vy), xx - (ax + t * vx))
    out = np.zeros(shape, dtype=bool)
    out[r0:r1, c0:c1] = d <= CORRIDOR_HALF_WIDTH + 1e-9
    return out


def _merge_groups(pairs, k: int) -> list[list[int]]:
    if not pairs:
        return []
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    graph = coo_matrix((np.ones(len(pairs)), (a, b)), shape=(k + 1, k + 1))
    _, comp = connected_components(graph, directed=False)
    involved = sorted(set(a.tolist()) | set(b.tolist()))
    groups: dict[int, list[int]] = {}
    for v in involved:
        groups.setdefault(int(comp[v]), []).append(v)
    return sorted(groups.values())


def _validate(scene: SynthScene, p: PerturbSpec) -> None:
    k = scene.gt_instances.component_count
    refs = [v for pair in p.merge_pairs for v in pair] + list(p.drop_labels)
    bad = sorted({v for v in refs if not 1 <= v <= k})
    if bad:
        raise InvalidInputError(f'labels not in scene (1..{k}): {bad}')
    same = [pair for pair in p.merge_pairs if pair[0] == pair[1]]
    if same:
        raise InvalidInputError(f'merge pairs must name two distinct logs: {same}')
    both = sorted(set(p.drop_labels) & {v for pair in p.merge_pairs for v in pair})
    if both:
        raise InvalidInputError(f'labels both dropped and merged: {both}')


def perturb(scene: SynthScene, p: PerturbSpec) -> tuple[LabelMap, CountTally]:
    """Prediction with a tally known by construction.

    Noise blobs already in the scene are part of the prediction and count as
    noise alongside ``extra_noise``.
    """
    _validate(scene, p)
    gt = scene.gt_instances.labels
    shape = gt.shape
    k = scene.gt_instances.component_count
    centers = scene.centers
    groups = _merge_groups(p.merge_pairs, k)

    group_of = {v: gi for gi, g in enumerate(groups) for v in g}
    pred = (gt != 0) & ~np.isin(gt, list(p.drop_labels))
    pred |= scene.noise_mask.data
    bridges = [np.zeros(shape, dtype=bool) for _ in groups]
    for a, b in p.merge_pairs:
        gi = group_of[a]
        corridor = _corridor(shape, centers[a], centers[b])
        own = np.isin(gt, groups[gi])
        others = (gt != 0) & ~own
        others |= scene.noise_mask.data
        for gj, other in enumerate(bridges):
            if gj != gi:
                others |= other
        if np.any(corridor & ~own & _clearance(others)):
            raise GenerationFailedError(
                f'bridge {a}-{b} passes within {NOISE_CLEARANCE} px of another object')
        bridges[gi] |= corridor & ~own
    for bridge in bridges:
        pred |= bridge

    rng = _rng(p.seed, stream=1)
    occupied = pred | (gt != 0)
    for j in range(p.extra_noise):
        blob = _blob_mask(shape, _clearance(occupied), rng, scene.spec.noise_area_range, f'extra noise blob {j + 1}')
        pred |= blob
        occupied |= blob

    merged = sum(len(g) for g in groups)
    expected = CountTally(
        ci=k - merged - len(set(p.drop_labels)),
        e=len(set(p.drop_labels)),
        i=merged,
        n=len(scene.manifest['noise']) + p.extra_noise,
    )
    return label(BinaryMask(pred)), expected


def export_scene(scene: SynthScene, out_dir: str | Path, stem: str) -> dict[str, Path]:
    """Write mask, 16-bit instance labels and manifest under ``out_dir``.

    Layout: ``masks/<stem>.png``, ``instances/<stem>.png``,
    ``manifests/<stem>.json``; ``masks`` and ``instances`` pair up by stem
    for ``run_eval``.
    """
    out = Path(out_dir)
    paths = {
        'mask': write_image(out / 'masks' / f'{stem}.png', scene.observed_mask),
        'instances': write_image(out / 'instances' / f'{stem}.png', scene.gt_instances),
    }
    manifest_path = out / 'manifests' / f'{stem}.json'
    save_json(manifest_path, scene.manifest)
    paths['manifest'] = manifest_path
    return paths
