"""Counting and evaluation pipeline.

``run_count`` goes ingest -> binarize -> optional erosion -> label -> filter
-> count -> annotate -> report. ``run_eval`` replays a directory of
predictions against instance ground truth and produces the per-image table
of pixel scores and count tallies. The remaining helpers (erosion sweep,
counter benchmark, ground-truth preprocessing) drive the same stages over a
different axis.
"""
from __future__ import annotations
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
import colorsys, csv, io, json, os, statistics, time

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from tqdm import tqdm

from . import components, ledger
from .config import Settings
from .errors import InvalidInputError, LogtallyError
from .hough import HoughParams, detect_circles
from .metrics import CountTally, MatchParams, accuracy_logs, confusion, iss, match_instances, pixel_scores
from .morphology import (SWEEP_LEVELS, GroundTruthMode, dynamic_erode, edt, erode,
                         erode_instance_array, erode_instances, h_maxima_centroids, make_ground_truth)
from .raster import (IMAGE_SUFFIXES, AnyImage, BinarizePolicy, BinaryMask, GrayImage, LabelMap,
                     RgbImage, binarize, mask_difference, read_image, read_label_array, resize_nearest, write_image)

COUNTERS = ('cc', 'hough', 'centroids')
COUNTER_ALIASES = {
    'cc': 'cc', 'connected-components': 'cc',
    'hough': 'hough', 'cht': 'hough',
    'centroids': 'centroids', 'reconstruction-centroids': 'centroids',
}
OVERLAY_SUFFIX = '.overlay.png'
DEFAULT_MAX_DIAMETER = 40
PREPROCESS_MODES = {
    'flat': 'flat-red',
    'red-gradient': 'red-gradient-capped',
    'gray-gradient': 'gray-gradient-full',
    'erode': None,
}


def _counter(name: str) -> str:
    try:
        return COUNTER_ALIASES[str(name)]
    except KeyError:
        raise InvalidInputError(f'unknown counter {name!r}; choose one of {", ".join(COUNTERS)}') from None


@dataclass(frozen=True)
class PipelineConfig:
    binarize: BinarizePolicy = field(default_factory=BinarizePolicy)
    erosion_enabled: bool = False
    erosion_se: str = 'square3'
    erosion_iterations: int = 15
    dynamic_radius: float | None = None
    connectivity: int = components.DEFAULT_CONNECTIVITY
    min_area: int = 0
    counter: str = 'cc'
    overlay: bool = False
    resize_to: tuple[int, int] | None = None
    h: float = 2.0
    hough: HoughParams = field(default_factory=HoughParams)

    def __post_init__(self):
        object.__setattr__(self, 'counter', _counter(self.counter))
        if self.connectivity not in (4, 8):
            raise InvalidInputError(f'connectivity must be 4 or 8, got {self.connectivity}')
        if self.min_area < 0:
            raise InvalidInputError(f'min_area must be >= 0, got {self.min_area}')
        if self.erosion_se not in ('square3', 'cross3'):
            raise InvalidInputError(f'unknown structuring element: {self.erosion_se!r}')
        if self.erosion_iterations < 0:
            raise InvalidInputError('erosion iterations must be >= 0')
        if self.dynamic_radius is not None and self.dynamic_radius < 0:
            raise InvalidInputError('dynamic radius must be >= 0')
        if self.resize_to is not None:
            size = tuple(int(v) for v in self.resize_to)
            if len(size) != 2 or min(size) <= 0:
                raise InvalidInputError(f'resize_to must be (height, width), got {self.resize_to}')
            object.__setattr__(self, 'resize_to', size)

    @classmethod
    def from_settings(cls, settings: Settings | None = None, **overrides) -> 'PipelineConfig':
        """Build from the ``pipeline``/``hough`` config sections; non-None overrides win."""
        settings = settings or Settings()
        p = settings.section('pipeline')
        hg = settings.section('hough')
        b = p.get('binarize', {})
        er = p.get('erosion', {})
        o = {k: v for k, v in overrides.items() if v is not None}

        erosion_enabled = bool(er.get('enabled', False))
        if 'erosion_iterations' in o or 'dynamic_radius' in o:
            erosion_enabled = True
        hough = HoughParams(
            r_min=int(o.get('r_min', hg.get('r_min', 5))),
            r_max=int(o.get('r_max', hg.get('r_max', 60))),
            vote_threshold=float(o.get('vote_threshold', hg.get('vote_threshold', 0.4))),
            nms_min_center_dist=hg.get('nms_min_center_dist'),
            radius_step=int(hg.get('radius_step', 1)),
        )
        resize = o.get('resize_to', p.get('resize_to'))
        return cls(
            binarize=BinarizePolicy(
                mode=o.get('binarize_mode', b.get('mode', 'red-dominant')),
                threshold=int(o.get('threshold', b.get('threshold', 127))),
                channel=o.get('channel', b.get('channel')),
            ),
            erosion_enabled=bool(o.get('erosion_enabled', erosion_enabled)),
            erosion_se=o.get('erosion_se', er.get('se', 'square3')),
            erosion_iterations=int(o.get('erosion_iterations', er.get('iterations', 15))),
            dynamic_radius=o.get('dynamic_radius', er.get('dynamic_radius')),
            connectivity=int(o.get('connectivity', p.get('connectivity', 8))),
            min_area=int(o.get('min_area', p.get('min_area', 0))),
            counter=o.get('counter', p.get('counter', 'cc')),
            overlay=bool(o.get('overlay', p.get('overlay', False))),
            resize_to=tuple(resize) if resize else None,
            h=float(o.get('h', p.get('h', 2.0))),
            hough=hough,
        )

    def to_dict(self) -> dict:
        return {
            'binarize': self.binarize.to_dict(),
            'erosion': {
                'enabled': self.erosion_enabled, 'se': self.erosion_se,
                'iterations': self.erosion_iterations, 'dynamic_radius': self.dynamic_radius,
            },
            'connectivity': self.connectivity,
            'min_area': self.min_area,
            'counter': self.counter,
            'resize_to': list(self.resize_to) if self.resize_to else None,
            'h': self.h,
            'hough': self.hough.to_dict(),
        }


@dataclass
class CountReport:
    source: str
    count: int
    counter: str
    components: list[dict]
    config: dict
    timing_ms: dict[str, float] = field(default_factory=dict)
    overlay: RgbImage | None = field(default=None, repr=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            'source': self.source,
            'counter': self.counter,
            'count': self.count,
            'components': self.components,
            'config': self.config,
        }
        if include_timing:
            d['timing_ms'] = dict(self.timing_ms)
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), ensure_ascii=False, indent=2) + '\n'


class _Stopwatch:
    def __init__(self):
        self.ms: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.ms[stage] = round((now - self._t) * 1000.0, 3)
        self._t = now


def _decode(source) -> tuple[AnyImage, str]:
    if isinstance(source, (RgbImage, GrayImage)):
        return source, 'image'
    if isinstance(source, (bytes, bytearray, memoryview)):
        return read_image(bytes(source)), 'upload'
    p = Path(source)
    return read_image(p), p.stem


def segment(img: AnyImage, cfg: PipelineConfig) -> tuple[BinaryMask, LabelMap]:
    """Binarize, optionally erode, label and filter; the counter-independent part."""
    mask = binarize(img, cfg.binarize)
    if cfg.erosion_enabled:
        if cfg.dynamic_radius is not None:
            mask = dynamic_erode(mask, cfg.dynamic_radius)
        else:
            mask = erode(mask, cfg.erosion_se, cfg.erosion_iterations)
    labels = components.label(mask, cfg.connectivity)
    if cfg.min_area:
        labels = components.filter_components(labels, cfg.min_area)
        mask = labels.support()
    return mask, labels


def run_count(source, cfg: PipelineConfig | None = None, source_id: str | None = None) -> CountReport:
    cfg = cfg or PipelineConfig()
    watch = _Stopwatch()
    img, default_id = _decode(source)
    if cfg.resize_to:
        img = resize_nearest(img, cfg.resize_to)
    watch.lap('decode')
    mask, labels = segment(img, cfg)
    watch.lap('segment')

    overlay = None
    if cfg.counter == 'cc':
        found = [s.to_dict() for s in components.stats(labels)]
        watch.lap('count')
        if cfg.overlay:
            overlay = render_overlay(img, labels)
    elif cfg.counter == 'centroids':
        points = h_maxima_centroids(edt(mask), h=cfg.h, connectivity=cfg.connectivity)
        found = [{'centroid': [r, c]} for r, c in points]
        watch.lap('count')
        if cfg.overlay:
            overlay = render_markers(img, [(p, 2) for p in points])
    else:
        circles = detect_circles(mask, cfg.hough)
        found = [c.to_dict() for c in circles]
        watch.lap('count')
        if cfg.overlay:
            overlay = render_markers(img, [(c.center, c.radius) for c in circles])
    if overlay is not None:
        watch.lap('overlay')

    report = CountReport(
        source=source_id or default_id,
        count=len(found),
        counter=cfg.counter,
        components=found,
        config=cfg.to_dict(),
        timing_ms=watch.ms,
        overlay=overlay,
    )
    ledger.log('count_done', source=report.source, counter=report.counter, count=report.count,
               timing_ms=report.timing_ms)
    return report


def overlay_path_for(image_path: str | Path) -> Path:
    p = Path(image_path)
    return p.with_name(p.stem + OVERLAY_SUFFIX)


# ---- overlays ----

def palette(label: int) -> tuple[int, int, int]:
    """Deterministic, well-spread colour per label (golden-ratio hue walk)."""
    hue = (label * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 1.0)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def _as_rgb(base: AnyImage) -> np.ndarray:
    if isinstance(base, GrayImage):
        return np.repeat(base.data[..., None], 3, axis=2)
    if isinstance(base, RgbImage):
        return np.array(base.data, copy=True)
    raise InvalidInputError(f'cannot overlay on {type(base).__name__}')


def _text_mask(shape, items) -> np.ndarray:
    canvas = Image.new('L', (shape[1], shape[0]), 0)
    draw = ImageDraw.Draw(canvas)
    draw.fontmode = '1'  # no antialiasing: text pixels are fully on or off
    font = ImageFont.load_default()
    for text, (row, col) in items:
        x0, y0, x1, y1 = draw.textbbox((0, 0), text, font=font)
        draw.text((col - (x0 + x1) // 2, row - (y0 + y1) // 2), text, fill=255, font=font)
    return np.asarray(canvas) > 0


def render_overlay(base: AnyImage, labels: LabelMap) -> RgbImage:
    """Tint every component 50% with its palette colour and number it.

    Index digits are drawn in white and clipped to the component itself, so
    background pixels come out unchanged.
    """
    rgb = _as_rgb(base)
    if rgb.shape[:2] != labels.shape:
        raise InvalidInputError(f'dimension mismatch: {rgb.shape[:2]} vs {labels.shape}')
    n = labels.component_count
    if n == 0:
        return RgbImage(rgb)
    lut = np.zeros((n + 1, 3), dtype=np.uint16)
    for k in range(1, n + 1):
        lut[k] = palette(k)
    lab = labels.labels
    fg = lab != 0
    tinted = (rgb.astype(np.uint16) + lut[lab] + 1) // 2
    out = np.where(fg[..., None], tinted, rgb).astype(np.uint8)

    items = [(str(s.label), (int(round(s.centroid[0])), int(round(s.centroid[1]))))
             for s in components.stats(labels)]
    text = _text_mask(lab.shape, items) & fg
    out[text] = 255
    return RgbImage(out)


def render_markers(base: AnyImage, markers: list[tuple[tuple[int, int], int]]) -> RgbImage:
    """Circle outlines (or dots) for the Hough and centroid counters."""
    im = Image.fromarray(_as_rgb(base))
    draw = ImageDraw.Draw(im)
    for k, ((row, col), radius) in enumerate(markers, start=1):
        colour = palette(k)
        draw.ellipse((col - radius, row - radius, col + radius, row + radius), outline=colour, width=1)
        draw.point((col, row), fill=colour)
    return RgbImage(np.asarray(im))


# ---- evaluation ----

EVAL_KEYS = ('id', 'accuracy', 'f1', 'kappa', 'iou', 'expected_logs', 'output',
             'ci', 'e', 'i', 'n', 'iss', 'accuracy_logs')
CSV_HEADERS = ('Image', 'Accuracy_pixel', 'F1 Score', 'Kappa', 'IoU', 'Expected Number of Logs',
               'Output', 'Correctly Identified (CI)', 'Errors (E)', 'Intersecting Logs (I)',
               'Noise (N)', 'ISS (%)', 'Accuracy_logs')
MEAN_KEYS = ('accuracy', 'f1', 'kappa', 'iou', 'iss', 'accuracy_logs')
TOTAL_KEYS = ('expected_logs', 'output', 'ci', 'e', 'i', 'n')


@dataclass(frozen=True)
class EvalRow:
    id: str
    accuracy: float
    f1: float
    kappa: float
    iou: float
    expected_logs: int
    output: int
    tally: CountTally
    iss: float | None
    accuracy_logs: float | None

    def to_dict(self) -> dict:
        return {
            'id': self.id, 'accuracy': self.accuracy, 'f1': self.f1, 'kappa': self.kappa,
            'iou': self.iou, 'expected_logs': self.expected_logs, 'output': self.output,
            'ci': self.tally.ci, 'e': self.tally.e, 'i': self.tally.i, 'n': self.tally.n,
            'iss': self.iss, 'accuracy_logs': self.accuracy_logs,
        }


@dataclass
class EvalReport:
    rows: list[EvalRow]
    errors: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.id)
        self.errors = sorted(self.errors, key=lambda e: e['id'])

    @property
    def aggregate(self) -> dict:
        agg: dict = {'images': len(self.rows)}
        for key in MEAN_KEYS:
            vals = [getattr(r, key) for r in self.rows if getattr(r, key) is not None]
            agg[key] = statistics.fmean(vals) if vals else None
        for key in TOTAL_KEYS:
            agg[f'{key}_total'] = sum(r.to_dict()[key] for r in self.rows)
        return agg

    def to_dict(self) -> dict:
        return {'rows': [r.to_dict() for r in self.rows], 'aggregate': self.aggregate, 'errors': self.errors}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + '\n'


def load_instances(source, policy: BinarizePolicy | None = None) -> LabelMap:
    """Instance labels from a 16-bit label PNG, or from labelling an 8-bit mask."""
    raw = read_label_array(source)
    if raw is not None:
        return LabelMap.from_array(raw)
    return components.label(binarize(read_image(source), policy), 8)


def evaluate_pair(pred_source, gt_source, match: MatchParams | None = None,
                  cfg: PipelineConfig | None = None, row_id: str = 'pair') -> EvalRow:
    match = match or MatchParams()
    cfg = cfg or PipelineConfig()
    pred_img = read_image(pred_source)
    gt = load_instances(gt_source, cfg.binarize)
    if cfg.resize_to:
        pred_img = resize_nearest(pred_img, cfg.resize_to)
        gt = resize_nearest(gt, cfg.resize_to)
    if (pred_img.height, pred_img.width) != gt.shape:
        raise InvalidInputError(f'dimension mismatch: {(pred_img.height, pred_img.width)} vs {gt.shape}')
    pred_mask, pred_labels = segment(pred_img, cfg)
    scores = pixel_scores(confusion(pred_mask, gt.support()))
    tally = match_instances(pred_labels, gt, match).tally
    return EvalRow(
        id=row_id,
        accuracy=scores.accuracy, f1=scores.f1, kappa=scores.kappa, iou=scores.iou,
        expected_logs=gt.component_count,
        output=pred_labels.component_count,
        tally=tally,
        iss=iss(tally) if tally.total else None,
        accuracy_logs=accuracy_logs(tally) if tally.ci + tally.e + tally.n else None,
    )


def _images_by_stem(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise InvalidInputError(f'not a directory: {directory}')
    return {p.stem: p for p in sorted(directory.iterdir())
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES and not p.name.endswith(OVERLAY_SUFFIX)}


def _eval_task(task) -> tuple[str, EvalRow | None, str | None]:
    stem, pred_path, gt_path, match, cfg = task
    try:
        return stem, evaluate_pair(pred_path, gt_path, match, cfg, row_id=stem), None
    except (LogtallyError, OSError) as e:
        return stem, None, str(e)


def run_eval(pred_dir: str | Path, gt_dir: str | Path, match: MatchParams | None = None,
             cfg: PipelineConfig | None = None, jobs: int | None = None,
             progress: bool = False) -> EvalReport:
    """Score every prediction against the ground truth of the same stem.

    Unpaired stems and failing pairs land in ``errors``; the run carries on.
    """
    match = match or MatchParams()
    cfg = cfg or PipelineConfig()
    preds = _images_by_stem(Path(pred_dir))
    gts = _images_by_stem(Path(gt_dir))
    errors = [{'id': s, 'error': 'no ground truth with this stem'} for s in sorted(set(preds) - set(gts))]
    errors += [{'id': s, 'error': 'no prediction with this stem'} for s in sorted(set(gts) - set(preds))]
    tasks = [(s, preds[s], gts[s], match, cfg) for s in sorted(set(preds) & set(gts))]

    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(tqdm(pool.map(_eval_task, tasks), total=len(tasks), desc='eval',
                                disable=not progress))
    else:
        results = [_eval_task(t) for t in tqdm(tasks, desc='eval', disable=not progress)]

    rows = []
    for stem, row, err in results:
        if row is None:
            errors.append({'id': stem, 'error': err})
            ledger.log('eval_row', id=stem, error=err)
        else:
            rows.append(row)
            ledger.log('eval_row', **row.to_dict())
    report = EvalReport(rows, errors)
    ledger.log('eval_done', pred_dir=str(pred_dir), gt_dir=str(gt_dir), images=len(report.rows),
               errors=len(report.errors), aggregate=report.aggregate)
    return report


def _fmt(key: str, value) -> str:
    if value is None:
        return ''
    if key == 'id':
        return str(value)
    if key == 'iss':
        return f'{value * 100:.4f}'
    if isinstance(value, float):
        return f'{value:.6f}'
    return str(value)


def format_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(CSV_HEADERS)
    for row in report.rows:
        d = row.to_dict()
        w.writerow([_fmt(k, d[k]) for k in EVAL_KEYS])
    return buf.getvalue()


def write_csv(report: EvalReport, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(format_csv(report), encoding='utf-8', newline='')
    return p


def _parse_row(cells: list[str]) -> EvalRow:
    d = dict(zip(EVAL_KEYS, cells))
    opt = lambda s: float(s) if s != '' else None  # noqa: E731
    pct = opt(d['iss'])
    return EvalRow(
        id=d['id'],
        accuracy=float(d['accuracy']), f1=float(d['f1']), kappa=float(d['kappa']), iou=float(d['iou']),
        expected_logs=int(d['expected_logs']), output=int(d['output']),
        tally=CountTally(int(d['ci']), int(d['e']), int(d['i']), int(d['n'])),
        iss=None if pct is None else pct / 100.0,
        accuracy_logs=opt(d['accuracy_logs']),
    )


def read_csv(path: str | Path) -> EvalReport:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADERS:
            raise InvalidInputError(f'not an evaluation CSV: {path}')
        try:
            rows = [_parse_row(cells) for cells in reader if cells]
        except (KeyError, ValueError) as e:
            raise InvalidInputError(f'malformed evaluation CSV {path}: {e}') from None
    return EvalReport(rows)


# ---- erosion sweep, benchmark, preprocessing ----

@dataclass(frozen=True)
class SweepRow:
    level: int
    expected: int
    output: int
    removed_pixels: int
    tally: CountTally
    iss: float | None

    def to_dict(self) -> dict:
        d = asdict(self)
        d['tally'] = self.tally.to_dict()
        return d


def erosion_sweep(gt: LabelMap, levels=SWEEP_LEVELS, se: str = 'square3',
                  match: MatchParams | None = None, connectivity: int = 8) -> list[SweepRow]:
    """Erode the ground-truth support at each level and tally what survives.

    The reference at level k is every log eroded on its own; logs that vanish
    there are errors, so deleting small logs shows up next to the removed
    intersections. ``removed_pixels`` counts what the erosion took away from
    the support.
    """
    match = match or MatchParams()
    mask = gt.support()
    out = []
    for k in levels:
        eroded = erode(mask, se, k)
        pred = components.label(eroded, connectivity)
        ref = LabelMap.from_array(erode_instance_array(gt.labels, se, k))
        t = match_instances(pred, ref, match).tally
        t = CountTally(t.ci, t.e + gt.component_count - ref.component_count, t.i, t.n)
        out.append(SweepRow(level=int(k), expected=gt.component_count, output=pred.component_count,
                            removed_pixels=mask_difference(mask, eroded).count(), tally=t,
                            iss=iss(t) if t.total else None))
    return out


def benchmark_counters(mask: BinaryMask, repeats: int = 20,
                       cfg: PipelineConfig | None = None) -> dict[str, float]:
    """Median wall-clock milliseconds of each counter on ``mask``."""
    if repeats < 1:
        raise InvalidInputError('repeats must be >= 1')
    cfg = cfg or PipelineConfig()
    runs = {
        'cc': lambda: components.label(mask, cfg.connectivity).component_count,
        'centroids': lambda: len(h_maxima_centroids(edt(mask), cfg.h, cfg.connectivity)),
        'hough': lambda: len(detect_circles(mask, cfg.hough)),
    }
    out = {}
    for name, fn in runs.items():
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            samples.append((time.perf_counter() - t0) * 1000.0)
        out[name] = statistics.median(samples)
    return out


def preprocess_dir(in_dir: str | Path, out_dir: str | Path, mode: str, iterations: int = 15,
                   se: str = 'square3', max_diameter: float = DEFAULT_MAX_DIAMETER,
                   policy: BinarizePolicy | None = None) -> list[Path]:
    """Rewrite every instance ground truth in ``in_dir`` for training.

    Gradient and flat modes write 8-bit renderings; ``erode`` writes 16-bit
    instance labels with each log eroded on its own.
    """
    if mode not in PREPROCESS_MODES:
        raise InvalidInputError(f'unknown preprocess mode {mode!r}; choose one of {", ".join(PREPROCESS_MODES)}')
    src = _images_by_stem(Path(in_dir))
    gt_mode = None
    if PREPROCESS_MODES[mode]:
        gt_mode = GroundTruthMode(PREPROCESS_MODES[mode],
                                  max_diameter if mode == 'red-gradient' else None)
    written = []
    for stem, path in src.items():
        inst = load_instances(path, policy)
        if gt_mode is None:
            result = erode_instances(inst, se, iterations)
        else:
            result = make_ground_truth(inst, gt_mode)
        out = write_image(Path(out_dir) / f'{stem}.png', result)
        written.append(out)
        ledger.log('preprocess_file', source=str(path), output=str(out), mode=mode,
                   instances=inst.component_count)
    return written
