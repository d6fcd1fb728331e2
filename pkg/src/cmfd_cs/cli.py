"""Command-line interface: ``cmfd-cs {detect,tune,textures,synth,bench}``.

Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 invalid config.
The log level comes from ``--log-level`` or the ``CMFD_LOG`` environment
variable (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .bench import PRESETS, run_bench, synth_corpus, write_textures
from .config import config_to_dict, load_config
from .cuckoo import write_trace_csv
from .errors import CmfdError, ConfigError, NumericalError
from .images import load_grayscale
from .matching import DetectionParams, save_pairs_json
from .pipeline import DetectionReport, StageError, detect_auto, elemental_detect

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

log = logging.getLogger("cmfd_cs")


def _detect(args, auto: bool, emit_trace: bool) -> int:
    image = Path(args.image)
    img = load_grayscale(image)  # fails before anything is written
    params = DetectionParams.parse(args.params) if args.params else None
    cs, det = load_config(args.config, seed=args.seed)

    started = time.perf_counter()
    if auto or params is None:
        report = detect_auto(img, cs, det)
        mode = "auto"
    else:
        result = elemental_detect(img, params, det)
        report = DetectionReport(
            best_params=params,
            fitness=result.fitness,
            map=result.map,
            detected=det.decide(result.fitness),
            evals_used=0,
            wall_time=time.perf_counter() - started,
            matches=result.matches,
        )
        mode = "fixed"

    out = Path(args.out) if args.out else Path(f"{image.stem}_cmfd")
    out.mkdir(parents=True, exist_ok=True)
    payload = {"image": str(image), "mode": mode, **report.to_dict(), "config": config_to_dict(cs, det)}
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    report.map.save_mask(out / "mask.png")
    report.map.save_overlay(out / "overlay.png", img, alpha=args.alpha)
    if emit_trace and report.trace:
        write_trace_csv(out / "trace.csv", report.trace)
    if args.emit_pairs and report.matches is not None:
        save_pairs_json(out / "pairs.json", report.matches)

    p = report.best_params
    print(
        f"detected={str(report.detected).lower()} p_match={report.fitness.p_match:.4f} "
        f"tmb={report.fitness.tmb} mmb={report.fitness.mmb} R={p.R} D={p.D:.3f} T={p.T:.4f} "
        f"evals={report.evals_used} out={out}"
    )
    return EXIT_OK


def cmd_detect(args) -> int:
    return _detect(args, auto=args.auto, emit_trace=args.emit_trace)


def cmd_tune(args) -> int:
    args.params = None
    return _detect(args, auto=True, emit_trace=True)


def cmd_textures(args) -> int:
    paths = write_textures(args.out, args.count, args.size, args.seed)
    print(f"wrote {len(paths)} textures to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    manifest = synth_corpus(
        args.source_dir, args.out, args.preset, args.seed, args.min_size, args.max_size, args.limit
    )
    n_forged = sum(e["forged"] for e in manifest["entries"])
    print(
        f"wrote {n_forged} forged and {len(manifest['entries']) - n_forged} authentic images "
        f"from {manifest['n_sources']} sources to {args.out}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    cs, det = load_config(args.config)
    summary = run_bench(args.corpus, args.out, args.seed, cs, det, args.jobs)
    o = summary["overall"]
    print(
        f"images={summary['n_images']} precision={o['precision']:.4f} recall={o['recall']:.4f} "
        f"mean_iou={o['mean_iou']:.4f} authentic_flagged={summary['authentic_flagged']} out={args.out}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmfd-cs", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default=None, help="overrides CMFD_LOG")
    sub = parser.add_subparsers(dest="command", required=True)

    def detect_args(p, with_mode: bool):
        p.add_argument("image")
        if with_mode:
            mode = p.add_mutually_exclusive_group()
            mode.add_argument("--params", help='fixed parameters, e.g. "R=8,D=16,T=0.6"')
            mode.add_argument("--auto", action="store_true", help="tune with Cuckoo Search (default)")
            p.add_argument("--emit-trace", action="store_true", help="write the optimizer trace CSV")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory (default: <image stem>_cmfd)")
        p.add_argument("--alpha", type=float, default=0.5, help="overlay opacity")
        p.add_argument("--emit-pairs", action="store_true", help="write matched pairs as JSON")

    p = sub.add_parser("detect", help="detect copy-move forgery in one image")
    detect_args(p, with_mode=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("tune", help="alias for detect --auto --emit-trace")
    detect_args(p, with_mode=False)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("textures", help="write seeded synthetic source textures")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_textures)

    p = sub.add_parser("synth", help="synthesize a ground-truthed forgery corpus")
    p.add_argument("source_dir")
    p.add_argument("--preset", choices=sorted(PRESETS), default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--min-size", type=int, default=48)
    p.add_argument("--max-size", type=int, default=64)
    p.add_argument("--limit", type=int, default=None, help="use only the first N sources")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="run detection over a corpus and score it")
    p.add_argument("corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return EXIT_INPUT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.environ.get("CMFD_LOG") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (CmfdError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
