"""Command-line entry point: ``logtally <subcommand> ...``.

JSON results go to stdout, progress and errors to stderr. Exit codes:
0 success, 1 runtime error, 2 usage error, 3 evaluation finished with
errored rows.
"""
from __future__ import annotations
from pathlib import Path
import argparse, json, sys

from . import ledger
from .config import Settings
from .errors import InvalidInputError, LogtallyError
from .hough import HoughParams, detect_centroids_fixed_radius, detect_circles
from .components import ComponentStats
from .metrics import MatchParams
from .morphology import SWEEP_LEVELS
from .pipeline import (DEFAULT_MAX_DIAMETER, PREPROCESS_MODES, PipelineConfig, benchmark_counters,
                       erosion_sweep, load_instances, overlay_path_for, preprocess_dir, run_count,
                       run_eval, write_csv)
from .raster import GrayImage, binarize, read_image, to_gray, write_image
from .synthgen import SynthSpec, export_scene, generate
from .volume import ScaleCalibration, dims_from_components, pile_volume

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False, indent=2) + '\n')


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument('--config', help='YAML settings file (default: configs/logtally.yaml)')
    p.add_argument('--min-area', type=int, help='drop components smaller than N pixels')
    p.add_argument('--connectivity', type=int, choices=(4, 8))
    p.add_argument('--binarize', dest='binarize_mode', choices=('luma', 'red-dominant', 'channel'))
    p.add_argument('--threshold', type=int)
    p.add_argument('--erode', dest='erosion_iterations', type=int, help='erode the mask N iterations before labelling')
    p.add_argument('--dynamic-radius', type=float, help='keep pixels farther than R from background')


def _settings(args) -> Settings:
    settings = Settings(getattr(args, 'config', None))
    ledger.configure(settings.ledger_path())
    return settings


def _config(args, settings: Settings, **extra) -> PipelineConfig:
    keys = ('min_area', 'connectivity', 'binarize_mode', 'threshold', 'erosion_iterations', 'dynamic_radius')
    return PipelineConfig.from_settings(settings, **{k: getattr(args, k, None) for k in keys}, **extra)


def cmd_count(args) -> int:
    settings = _settings(args)
    cfg = _config(args, settings, counter=args.counter, overlay=True if args.overlay else None)
    report = run_count(Path(args.image), cfg)
    text = report.to_json(include_timing=args.timing)
    sys.stdout.write(text)
    if args.json:
        out = Path(args.json)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding='utf-8')
    if report.overlay is not None:
        dest = write_image(args.overlay or overlay_path_for(args.image), report.overlay)
        ledger.say('Count', f'overlay -> {dest}')
    ledger.say('Count', f'{report.source}: {report.count} logs ({report.counter})')
    return EXIT_OK


def cmd_eval(args) -> int:
    settings = _settings(args)
    cfg = _config(args, settings)
    tau = args.tau if args.tau is not None else settings.section('match').get('coverage_tau', 0.5)
    jobs = args.jobs if args.jobs is not None else settings.section('eval').get('jobs')
    report = run_eval(args.pred, args.gt, MatchParams(float(tau)), cfg, jobs=jobs, progress=True)
    text = report.to_json()
    sys.stdout.write(text)
    if args.json:
        out = Path(args.json)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding='utf-8')
    if args.csv:
        write_csv(report, args.csv)
    agg = report.aggregate
    ledger.say('Eval', f"{agg['images']} images, mean iss={agg['iss']}, {len(report.errors)} errors")
    return EXIT_PARTIAL if report.errors else EXIT_OK


def cmd_preprocess(args) -> int:
    written = preprocess_dir(args.in_dir, args.out_dir, args.mode, iterations=args.iters, se=args.se,
                             max_diameter=args.max_diameter)
    _emit({'mode': args.mode, 'written': [str(p) for p in written]})
    ledger.say('Preprocess', f'{len(written)} files -> {args.out_dir}')
    return EXIT_OK


def cmd_hough(args) -> int:
    settings = _settings(args)
    hg = settings.section('hough')
    params = HoughParams(
        r_min=args.rmin if args.rmin is not None else hg.get('r_min', 5),
        r_max=args.rmax if args.rmax is not None else hg.get('r_max', 60),
        vote_threshold=args.vote_threshold if args.vote_threshold is not None else hg.get('vote_threshold', 0.4),
        nms_min_center_dist=hg.get('nms_min_center_dist'),
        radius_step=hg.get('radius_step', 1),
    )
    img = read_image(args.image)
    if args.fixed_radius is not None:
        gray = img if isinstance(img, GrayImage) else to_gray(img)
        circles = detect_centroids_fixed_radius(gray, args.fixed_radius, params)
    else:
        circles = detect_circles(binarize(img), params)
    _emit({'source': Path(args.image).stem, 'count': len(circles),
           'circles': [c.to_dict() for c in circles], 'params': params.to_dict()})
    return EXIT_OK


def _stats_from_report(report: dict) -> list[ComponentStats]:
    if report.get('counter', 'cc') != 'cc':
        raise InvalidInputError('volume needs a count report made with the cc counter')
    try:
        return [ComponentStats(label=c['label'], area=c['area'], centroid=tuple(c['centroid']),
                               bbox=tuple(c['bbox']), equivalent_radius=c['equivalent_radius'])
                for c in report['components']]
    except (KeyError, TypeError) as e:
        raise InvalidInputError(f'malformed count report: {e}') from None


def cmd_volume(args) -> int:
    report = ledger.load_json(args.report)
    dims = dims_from_components(_stats_from_report(report), ScaleCalibration(args.px_per_meter), args.depth)
    pile = pile_volume(dims)
    _emit({'source': report.get('source'), **pile.to_dict()})
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec.from_file(args.spec)
    scene = generate(spec)
    stem = args.stem or Path(args.spec).stem
    paths = export_scene(scene, args.out, stem)
    ledger.log('synth_done', spec=spec.to_dict(), out=str(args.out), logs=scene.gt_instances.component_count)
    _emit({'stem': stem, 'logs': scene.gt_instances.component_count,
           'noise': len(scene.manifest['noise']), 'paths': {k: str(v) for k, v in paths.items()}})
    return EXIT_OK


def cmd_sweep(args) -> int:
    levels = tuple(int(v) for v in args.levels.split(',')) if args.levels else SWEEP_LEVELS
    if any(v < 0 for v in levels):
        raise InvalidInputError('sweep levels must be >= 0')
    gt = load_instances(args.gt)
    rows = erosion_sweep(gt, levels, se=args.se, match=MatchParams(args.tau))
    _emit({'source': Path(args.gt).stem, 'rows': [r.to_dict() for r in rows]})
    return EXIT_OK


def cmd_bench(args) -> int:
    settings = _settings(args)
    cfg = _config(args, settings)
    mask = binarize(read_image(args.image), cfg.binarize)
    _emit({'source': Path(args.image).stem, 'repeats': args.repeats,
           'median_ms': benchmark_counters(mask, args.repeats, cfg)})
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app

    settings = _settings(args)
    port = args.port if args.port is not None else settings.port
    host = args.host or settings.cfg['service']['host']
    ledger.say('Serve', f'listening on http://{host}:{port}')
    uvicorn.run(create_app(settings), host=host, port=port, log_level='warning')
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog='logtally', description='Count wood logs in segmentation masks')
    sub = ap.add_subparsers(dest='command', required=True)

    p = sub.add_parser('count', help='count logs in one mask image')
    p.add_argument('image')
    _pipeline_flags(p)
    p.add_argument('--counter', choices=('cc', 'hough', 'centroids'))
    p.add_argument('--overlay', metavar='OUT', help='write the annotated overlay PNG here')
    p.add_argument('--json', metavar='OUT', help='also write the report to this file')
    p.add_argument('--timing', action='store_true', help='include per-stage timings')
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser('eval', help='score predictions against instance ground truth')
    p.add_argument('--pred', required=True)
    p.add_argument('--gt', required=True)
    _pipeline_flags(p)
    p.add_argument('--tau', type=float, help='coverage fraction for a log to count as contained')
    p.add_argument('--csv', metavar='OUT')
    p.add_argument('--json', metavar='OUT')
    p.add_argument('--jobs', type=int, help='worker processes (default: logical CPUs)')
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser('preprocess', help='rewrite instance ground truth for training')
    p.add_argument('--mode', required=True, choices=tuple(PREPROCESS_MODES))
    p.add_argument('--iters', type=int, default=15)
    p.add_argument('--se', choices=('square3', 'cross3'), default='square3')
    p.add_argument('--max-diameter', type=float, default=DEFAULT_MAX_DIAMETER)
    p.add_argument('--in', dest='in_dir', required=True)
    p.add_argument('--out', dest='out_dir', required=True)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser('hough', help='circular Hough transform on a mask')
    p.add_argument('image')
    p.add_argument('--config')
    p.add_argument('--rmin', type=int)
    p.add_argument('--rmax', type=int)
    p.add_argument('--vote-threshold', type=float)
    p.add_argument('--fixed-radius', type=int, help='single radius over the bright cores of a gradient image')
    p.set_defaults(fn=cmd_hough)

    p = sub.add_parser('volume', help='pile volume from a count report')
    p.add_argument('--report', required=True)
    p.add_argument('--px-per-meter', type=float, required=True)
    p.add_argument('--depth', type=float, required=True, help='log depth in meters')
    p.set_defaults(fn=cmd_volume)

    p = sub.add_parser('synth', help='generate a synthetic pile from a JSON spec')
    p.add_argument('--spec', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--stem')
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser('sweep', help='tally ground truth under increasing erosion')
    p.add_argument('--gt', required=True)
    p.add_argument('--levels', help='comma-separated iteration counts (default 5,10,...,50)')
    p.add_argument('--se', choices=('square3', 'cross3'), default='square3')
    p.add_argument('--tau', type=float, default=0.5)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser('bench', help='median runtime of each counter')
    p.add_argument('image')
    _pipeline_flags(p)
    p.add_argument('--repeats', type=int, default=20)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser('serve', help='run the HTTP counting service')
    p.add_argument('--config')
    p.add_argument('--host')
    p.add_argument('--port', type=int)
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (LogtallyError, OSError) as e:
        print(f'Error: {e}', file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
