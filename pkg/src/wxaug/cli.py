"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 detector failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .adapter import BATCH, PER_IMAGE, ExternalDetector, read_frame_list
from .augment import (
    AugmentationChain,
    DimConfig,
    DropletConfig,
    LatencyStats,
    apply_chain,
    load_chain,
    measure_latency,
)
from .calibrate import (
    DEFAULT_GRID,
    DEFAULT_REPEATS,
    DIM,
    DROPLETS,
    SEVERITY_TABLE,
    build_severity_mapping,
    curve_from_csv,
    curve_to_csv,
    fit_monotone,
    invert_curve,
    run_sweep,
    runs_to_jsonl,
    CONDITION_FOR_KIND,
    MappingRow,
    SeverityMapping,
)
from .dataset import DatasetManifest, ManifestEntry, generate_toy_dataset
from .errors import DataError, DetectorFailedError, SweepError, WxaugError
from .evaluate import ALL_POINT, ELEVEN_POINT, dump_detections_jsonl, load_detections, mean_average_precision
from .frames import read_ppm, write_ppm
from .toyworld import ToyDetector, ToyDetectorParams, toy_detect
from .wire import StreamServer, serve_stdio

log = logging.getLogger("wxaug")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DETECTOR = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_global(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="base seed (overrides the chain file)")
    p.add_argument("--config", type=Path, default=d(None), metavar="CHAIN_JSON", help="augmentation chain file")
    p.add_argument("--jobs", type=int, default=d(1), metavar="N", help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _grid(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _unit(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"value must lie in [0, 1], got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wxaug", description="Weather degradation of camera frames and mAP calibration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def add(name, **kw):
        p = sub.add_parser(name, **kw)
        _add_global(p, suppress=True)
        return p

    def chain_flags(p):
        p.add_argument("--dim", type=_unit, metavar="K_DIM", help="add a dimming stage")
        p.add_argument("--droplets", type=_unit, metavar="K_DROPLET", help="add a droplet stage")

    p = add("augment", help="augment every image of a dataset")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    chain_flags(p)
    p.set_defaults(func=cmd_augment)

    p = add("stream", help="augment a WXA1 frame stream (stdio or TCP)")
    p.add_argument("--port", type=int, help="listen on TCP instead of stdio")
    p.add_argument("--host", default="127.0.0.1")
    chain_flags(p)
    p.set_defaults(func=cmd_stream)

    p = add("eval", help="compute mAP of detections against a dataset's ground truth")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--detections", type=Path, required=True, help="detections JSON Lines")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--interpolation", choices=(ALL_POINT, ELEVEN_POINT), default=ALL_POINT)
    p.add_argument("--out", type=Path, help="also write the result JSON here")
    p.set_defaults(func=cmd_eval)

    p = add("sweep", help="sweep one control parameter and write a calibration curve")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--kind", choices=(DROPLETS, DIM), required=True)
    p.add_argument("--grid", type=_grid, default=list(DEFAULT_GRID), help="comma-separated values")
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", type=Path, help="curve CSV (default: stdout)")
    p.add_argument("--log", type=Path, help="per-run JSON Lines log")
    p.add_argument("--detector-cmd", help="external detector command template (default: toy detector)")
    p.add_argument("--detector-mode", choices=(PER_IMAGE, BATCH), default=PER_IMAGE)
    p.set_defaults(func=cmd_sweep)

    p = add("invert", help="map target mAP values to parameter values")
    p.add_argument("--curve", type=Path, required=True, help="curve CSV")
    p.add_argument("--kind", choices=(DROPLETS, DIM), required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--target", type=float, help="a single target mAP")
    g.add_argument("--severity-table", action="store_true", help="use the built-in severity table")
    p.add_argument("--no-fit", action="store_true", help="skip isotonic fitting")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_invert)

    p = add("toyworld", help="synthetic cone scenes and the toy detector")
    tw = p.add_subparsers(dest="toy_command", parser_class=_Parser, metavar="ACTION")
    tw.required = True
    q = tw.add_parser("generate", help="write a toy dataset")
    _add_global(q, suppress=True)
    q.add_argument("--out", type=Path, required=True)
    q.add_argument("--n", type=int, default=20, help="number of images")
    q.add_argument("--size", type=_size, default=(672, 376))
    q.add_argument("--cones", type=int, default=8)
    q.add_argument("--cone-min", type=int, default=24)
    q.add_argument("--cone-max", type=int, default=64)
    q.set_defaults(func=cmd_toy_generate)
    q = tw.add_parser("detect", help="run the toy detector, print detection JSON Lines")
    _add_global(q, suppress=True)
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", type=Path)
    src.add_argument("--image", type=Path, help="one PPM file")
    src.add_argument("--list", type=Path, help="batch list file of '<image_id>\\t<path>' lines")
    q.add_argument("--image-id", help="id reported for --image (default: file stem)")
    q.add_argument("--saturation-min", type=float, default=ToyDetectorParams.saturation_min)
    q.add_argument("--contrast-min", type=float, default=ToyDetectorParams.contrast_min)
    q.add_argument("--min-area", type=int, default=ToyDetectorParams.min_area)
    q.add_argument("--out", type=Path)
    q.set_defaults(func=cmd_toy_detect)

    p = add("bench", help="time each effect on random frames")
    p.add_argument("--size", type=_size, default=(672, 376))
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--k-dim", type=_unit, default=0.5)
    p.add_argument("--k-droplet", type=_unit, default=0.5)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_bench)
    return parser


def _chain_from_args(args) -> AugmentationChain:
    if args.config is not None:
        chain = load_chain(args.config)
        if args.dim is not None or args.droplets is not None:
            raise UsageError("--config cannot be combined with --dim/--droplets")
    else:
        stages = []
        if args.dim is not None:
            stages.append(DimConfig(args.dim))
        if args.droplets is not None:
            stages.append(DropletConfig(args.droplets))
        chain = AugmentationChain(tuple(stages), 0)
    if args.seed is not None:
        chain = AugmentationChain(chain.stages, args.seed)
    return chain


def _augment_one(job):
    src, dst, frame_id, chain = job
    frame = read_ppm(src, frame_id=frame_id)
    write_ppm(dst, apply_chain(frame, chain))


def cmd_augment(args) -> int:
    chain = _chain_from_args(args)
    manifest = DatasetManifest.load(args.manifest)
    out = args.out
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    jobs, entries = [], []
    for i, e in enumerate(manifest.entries):
        img = f"images/{Path(e.image).name}"
        gt = f"labels/{Path(e.gt).name}"
        jobs.append((manifest.root / e.image, out / img, i, chain))
        shutil.copyfile(manifest.root / e.gt, out / gt)
        entries.append(ManifestEntry(e.image_id, img, gt, e.width, e.height))
    if len({j[1] for j in jobs}) != len(jobs):
        raise DataError("image file names collide in the output directory")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_augment_one, jobs))
    else:
        for job in jobs:
            _augment_one(job)
    DatasetManifest(out, entries, manifest.class_names).save()
    (out / "chain.json").write_text(json.dumps(chain.to_dict(), indent=2) + "\n")
    print(f"augmented {len(entries)} images into {out}", file=sys.stderr)
    return EXIT_OK


def cmd_stream(args) -> int:
    chain = _chain_from_args(args)
    if args.port is None:
        report = serve_stdio(chain)
        s = report.stats
        print(json.dumps({"frames": report.frames, "error": report.error,
                          "latency_ms": s.as_ms()}), file=sys.stderr)
        return EXIT_DATA if report.error else EXIT_OK
    server = StreamServer((args.host, args.port), chain)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        samples = [v for r in server.reports for v in r.latency_us]
        print(json.dumps({"connections": len(server.reports),
                          "latency_ms": LatencyStats.from_samples(samples).as_ms()}), file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    gts = [g for i in range(len(manifest)) for g in manifest.load_gt(i)]
    dets = load_detections(args.detections)
    result = mean_average_precision(dets, gts, args.iou, args.interpolation)
    text = result.to_json(indent=2)
    print(text)
    if args.out:
        args.out.write_text(text + "\n")
    return EXIT_OK


def _detector_from_args(args):
    if args.detector_cmd:
        return ExternalDetector(args.detector_cmd, args.detector_mode)
    return ToyDetector()


def cmd_sweep(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    fixed = None
    if args.config is not None:
        fixed = next((s for s in load_chain(args.config).stages if isinstance(s, DropletConfig)), None)
    curve = run_sweep(manifest, _detector_from_args(args), args.kind, args.grid, args.repeats,
                      args.seed or 0, fixed, args.iou, args.jobs)
    text = curve_to_csv(curve)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.log:
        args.log.write_text(runs_to_jsonl(curve.runs))
    return EXIT_OK


def cmd_invert(args) -> int:
    curve = curve_from_csv(args.curve.read_text(), args.kind)
    if not args.no_fit:
        curve = fit_monotone(curve)
    if args.severity_table:
        mapping = build_severity_mapping(curve, SEVERITY_TABLE)
    else:
        inv = invert_curve(curve, args.target)
        mapping = SeverityMapping(CONDITION_FOR_KIND[args.kind], args.kind, (
            MappingRow(CONDITION_FOR_KIND[args.kind], None, args.target, inv.param,
                       curve.interpolate(inv.param), inv.clamped),))
    for r in mapping.rows:
        if r.clamped:
            print(f"warning: target mAP {r.target_map} is outside the curve range "
                  f"[{curve.means.min():.6f}, {curve.means.max():.6f}]; clamped to {args.kind} = {r.param}",
                  file=sys.stderr)
    text = mapping.to_json(indent=2)
    print(text)
    if args.out:
        args.out.write_text(text + "\n")
    return EXIT_OK


def cmd_toy_generate(args) -> int:
    w, h = args.size
    m = generate_toy_dataset(args.out, args.n, args.seed or 0, width=w, height=h, n_cones=args.cones,
                             cone_min=args.cone_min, cone_max=args.cone_max)
    print(f"wrote {len(m)} scenes to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_toy_detect(args) -> int:
    params = ToyDetectorParams(args.saturation_min, args.contrast_min, args.min_area)
    if args.manifest:
        m = DatasetManifest.load(args.manifest)
        items = [(e.image_id, m.root / e.image) for e in m.entries]
    elif args.image:
        items = [(args.image_id or args.image.stem, args.image)]
    else:
        items = read_frame_list(args.list)
    dets = []
    for image_id, path in items:
        dets.extend(toy_detect(read_ppm(path), params, image_id))
    text = dump_detections_jsonl(dets)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    w, h = args.size
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    rows = [
        ("Adherent droplets", "k_droplet", args.k_droplet,
         measure_latency(DropletConfig(args.k_droplet), w, h, args.frames, args.seed or 0)),
        ("Light dimming", "k_dim", args.k_dim,
         measure_latency(DimConfig(args.k_dim), w, h, args.frames, args.seed or 0)),
    ]
    if args.json:
        print(json.dumps({"size": [w, h], "frames": args.frames, "rows": [
            {"effect": e, "parameter": p, "value": v, **s.as_ms()} for e, p, v, s in rows]}, indent=2))
        return EXIT_OK
    print(f"Latency per frame at {w}x{h}, {args.frames} frames (ms)")
    print(f"{'Weather effect':<20}{'Control parameter':<20}{'Value':>7}{'p50':>9}{'p95':>9}{'max':>9}")
    for effect, param, value, s in rows:
        ms = s.as_ms()
        print(f"{effect:<20}{param:<20}{value:>7.2f}{ms['p50']:>9.3f}{ms['p95']:>9.3f}{ms['max']:>9.3f}")
    print(f"{'':<20}{'fog_coef':<20}{DropletConfig().fog_coef:>7.2f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("wxaug: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wxaug: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SweepError as exc:
        print(f"wxaug: {exc}", file=sys.stderr)
        if isinstance(exc.cause, DetectorFailedError):
            if exc.cause.stderr:
                print(exc.cause.stderr.rstrip(), file=sys.stderr)
            return EXIT_DETECTOR
        return EXIT_DATA
    except DetectorFailedError as exc:
        print(f"wxaug: {exc}", file=sys.stderr)
        if exc.stderr:
            print(exc.stderr.rstrip(), file=sys.stderr)
        return EXIT_DETECTOR
    except (DataError, OSError) as exc:
        print(f"wxaug: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WxaugError as exc:
        print(f"wxaug: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
