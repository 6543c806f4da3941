"""Command-line interface.

Subcommands: ``synth``, ``detect``, ``eval``, ``gridsearch``, ``bench`` and
``replay``.  Each run writes ``run.json`` next to its outputs; ``fastrx
replay run.json`` re-executes it and reproduces the output files
bit-exactly.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import rank_sweep, scaling_sweep, loglog_slope, thread_limit, write_records
from .detectors import DEFAULT_BLOCK, DEFAULT_MAX_N, VARIANTS, DetectorConfig, fit_detector
from .errors import RXError
from .evaluation import best_threshold, detection_map, grid_search, roc_auc, roc_curve
from .io import load_mask, load_scene, load_scores, save_map, save_scene, save_scores
from .kernels import median_heuristic_sigma
from .scenes import synth_scene

log = logging.getLogger("fastrx")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sigma(value: str):
    if value == "median":
        return value
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma must be a number or 'median', got {value!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("sigma must be > 0")
    return v


def _int_list(value: str) -> list[int]:
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _sigma_list(value: str) -> list:
    return [_sigma(v) for v in value.split(",") if v]


def _u64(value: str) -> int:
    v = int(value)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _add_scene_args(p, mask_required=False):
    p.add_argument("image", help="scene file (.bsq with .hdr sidecar, or .csv)")
    p.add_argument("--format", choices=("csv", "bsq"), default=None,
                   help="image format (default: from the file suffix)")
    p.add_argument("--dims", default=None, help="HEIGHTxWIDTH for CSV images without a header")
    p.add_argument("--mask", required=mask_required, default=None,
                   help="ground-truth PGM mask (nonzero = anomaly)")


def _add_detector_args(p, with_rank=True):
    p.add_argument("--detector", choices=VARIANTS, required=True)
    p.add_argument("--sigma", type=_sigma, default="median",
                   help="RBF bandwidth or 'median' (median pairwise distance)")
    if with_rank:
        p.add_argument("--rank", type=int, default=None,
                       help="D for rrx/orx, r for srx/nrx")
    p.add_argument("--ridge", type=float, default=None,
                   help="diagonal loading (default 1e-8 * trace / dim)")
    p.add_argument("--pinv-tol", type=float, default=None,
                   help="relative pseudoinverse cutoff for nrx")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--max-n", type=int, default=DEFAULT_MAX_N,
                   help="largest n for which krx may build an n x n kernel")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fastrx", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"fastrx {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scene and mask")
    p.add_argument("--height", type=int, default=100)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--bands", type=int, default=20)
    p.add_argument("--fraction", type=float, default=0.01, help="anomalous pixel fraction")
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--nonlinearity", choices=("none", "mixture"), default="mixture")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--format", choices=("csv", "bsq"), default="bsq")
    p.add_argument("--out", required=True)

    p = sub.add_parser("detect", help="run one detector on a scene")
    _add_scene_args(p)
    _add_detector_args(p)
    p.add_argument("--block-size", type=int, default=DEFAULT_BLOCK)
    p.add_argument("--threshold", type=float, default=None,
                   help="detection-map threshold (default: best Youden J when --mask is given)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="ROC/AUC of a score file against a mask")
    p.add_argument("scores", help="scores .csv or .bsq written by 'detect'")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gridsearch", help="select sigma and rank by AUC")
    _add_scene_args(p, mask_required=True)
    _add_detector_args(p, with_rank=False)
    p.add_argument("--sigmas", type=_sigma_list, default=None,
                   help="comma-separated sigmas ('median' allowed); default: median x {0.25,0.5,1,2}")
    p.add_argument("--ranks", type=_int_list, default=[50, 100, 200, 400, 500])
    p.add_argument("--repeats", type=int, default=20, help="seeds averaged per grid point")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="timing sweeps")
    bsub = p.add_subparsers(dest="sweep", required=True, parser_class=_Parser)
    q = bsub.add_parser("rank", help="time and AUC over a rank sweep")
    _add_scene_args(q, mask_required=True)
    _add_detector_args(q, with_rank=False)
    q.add_argument("--ranks", type=_int_list, default=[50, 100, 200, 400, 500])
    q.add_argument("--repeats", type=int, default=1, help="timed runs per configuration")
    q.add_argument("--runs", type=int, default=20, help="seeds per rank")
    q.add_argument("--threads", type=int, default=1)
    q.add_argument("--out", required=True)
    q = bsub.add_parser("scaling", help="time versus number of pixels")
    _add_detector_args(q)
    q.add_argument("--n-values", type=_int_list, default=[1000, 2000, 4000, 8000])
    q.add_argument("--bands", type=int, default=20)
    q.add_argument("--repeats", type=int, default=3)
    q.add_argument("--threads", type=int, default=1)
    q.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run a command from its run.json")
    p.add_argument("record")
    p.add_argument("--out", default=None, help="write into this directory instead")
    return parser


# ------------------------------------------------------------------ helpers


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_provenance(out: Path, argv, args, extra: dict) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    record = {
        "command": args.command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "params": params,
        "fastrx_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        **extra,
    }
    (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def _config(args, X, rank=None) -> DetectorConfig:
    sigma = args.sigma
    if args.detector != "rx" and sigma == "median":
        sigma = median_heuristic_sigma(X, seed=args.seed).sigma
    return DetectorConfig(args.detector, sigma=None if sigma == "median" else sigma,
                          rank=rank if rank is not None else getattr(args, "rank", None),
                          ridge=args.ridge, pinv_tol=args.pinv_tol, seed=args.seed,
                          max_n=args.max_n)


def _scene(args):
    return load_scene(args.image, args.format, args.dims, args.mask)


# ----------------------------------------------------------------- commands


def cmd_synth(args, argv):
    out = _outdir(args.out)
    bundle = synth_scene(args.height, args.width, args.bands, args.fraction, args.separation,
                         args.nonlinearity, args.seed)
    paths = save_scene(bundle, out, args.format)
    _write_provenance(out, argv, args, {"outputs": {k: str(v) for k, v in paths.items()},
                                        "provenance": bundle.provenance})
    print(f"wrote {paths['image']} and {paths['mask']}")


def cmd_detect(args, argv):
    scene = _scene(args)
    cfg = _config(args, scene.image.values)
    out = _outdir(args.out)
    with thread_limit(args.threads):
        det = fit_detector(cfg, scene.image.values)
        field = det.score(scene.image, args.block_size)
    save_scores(field, out / "scores.csv")
    save_scores(field, out / "scores.bsq")
    extra = {"sigma_resolved": cfg.sigma, "outputs": ["scores.csv", "scores.bsq"]}
    threshold = args.threshold
    if scene.truth is not None:
        rep = roc_auc(field, scene.truth)
        extra["auc"] = rep.auc
        print(f"AUC {rep.auc:.6f}")
        if threshold is None:
            threshold = best_threshold(field, scene.truth)
    if threshold is not None:
        save_map(detection_map(field, threshold), out / "map.pgm")
        extra["threshold"] = threshold
        extra["outputs"].append("map.pgm")
    _write_provenance(out, argv, args, extra)
    print(f"{cfg.detector}: scored {len(field)} pixels -> {out / 'scores.csv'}")


def cmd_eval(args, argv):
    field = load_scores(args.scores)
    truth = load_mask(args.mask, field.shape)
    rep = roc_auc(field, truth)
    fpr, tpr, thr = roc_curve(field, truth)
    out = _outdir(args.out)
    with open(out / "roc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr", "threshold"])
        for a, b, t in zip(fpr, tpr, thr):
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{t:.9g}"])
    thr_best = best_threshold(field, truth)
    _write_provenance(out, argv, args, {"auc": rep.auc, "best_threshold": thr_best,
                                        "outputs": ["roc.csv"]})
    print(f"AUC {rep.auc:.6f}")


def cmd_gridsearch(args, argv):
    scene = _scene(args)
    X = scene.image.values
    base = _config(args, X, rank=1)
    if args.detector != "rx":
        med = median_heuristic_sigma(X, seed=args.seed).sigma
        if args.sigmas:
            sigmas = [med if s == "median" else s for s in args.sigmas]
        else:
            sigmas = [med * f for f in (0.25, 0.5, 1.0, 2.0)]
    else:
        sigmas = [None]
    seeds = [args.seed + i for i in range(args.repeats)]
    with thread_limit(args.threads):
        result = grid_search(base, sigmas, args.ranks, X, scene.truth, seeds)
    out = _outdir(args.out)
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector", "sigma", "rank", "auc", "runs", "error"])
        for p in result.points:
            w.writerow([args.detector, "" if p.sigma is None else f"{p.sigma:.9g}",
                        "" if p.rank is None else p.rank, f"{p.auc:.9g}", len(p.aucs),
                        p.error or ""])
    best = result.best
    _write_provenance(out, argv, args, {"best": {"sigma": best.sigma, "rank": best.rank,
                                                 "auc": best.auc}, "outputs": ["grid.csv"]})
    print(f"best sigma={best.sigma} rank={best.rank} AUC={best.auc:.6f}")


def cmd_bench(args, argv):
    out = _outdir(args.out)
    extra = {"outputs": ["bench.csv"]}
    if args.sweep == "rank":
        scene = _scene(args)
        X = scene.image.values
        cfg = _config(args, X, rank=1)
        seeds = [args.seed + i for i in range(args.runs)]
        recs = rank_sweep(cfg, args.ranks, X, scene.truth, seeds, args.repeats, args.threads)
    else:
        if args.detector in ("srx", "rrx", "orx", "nrx") and args.rank is None:
            raise UsageError(f"--rank is required for {args.detector}")
        sigma = None if args.sigma == "median" else args.sigma
        cfg = DetectorConfig(args.detector, sigma=sigma, rank=args.rank, ridge=args.ridge,
                             pinv_tol=args.pinv_tol, seed=args.seed, max_n=args.max_n)
        recs = scaling_sweep(cfg, args.n_values, args.bands, args.seed, args.repeats,
                             args.threads)
        slope = loglog_slope([r.n for r in recs], [r.score_s for r in recs])
        extra["score_time_slope"] = slope
        print(f"log-log slope of score time vs n: {slope:.3f}")
    write_records(recs, out / "bench.csv")
    _write_provenance(out, argv, args, extra)
    print(f"wrote {len(recs)} rows to {out / 'bench.csv'}")


def cmd_replay(args, argv):
    record = json.loads(Path(args.record).read_text())
    old = list(record["argv"])
    if args.out is not None:
        if "--out" not in old:
            raise UsageError("recorded command has no --out to replace")
        old[old.index("--out") + 1] = os.path.abspath(args.out)
    # relative paths in the record are relative to the original directory
    here = os.getcwd()
    os.chdir(record.get("cwd", here))
    try:
        return main(old)
    finally:
        os.chdir(here)


COMMANDS = {"synth": cmd_synth, "detect": cmd_detect, "eval": cmd_eval,
            "gridsearch": cmd_gridsearch, "bench": cmd_bench, "replay": cmd_replay}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "detect" and args.detector in ("srx", "rrx", "orx", "nrx") \
                and args.rank is None:
            raise UsageError(f"--rank is required for {args.detector}")
        code = COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fastrx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RXError as exc:
        print(f"fastrx: {type(exc).__name__} [{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"fastrx: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
