"""Batch command-line interface.

Every subcommand reads the shared JSON config (flag > file > default),
validates its inputs up front, writes outputs plus a provenance manifest
into --out-dir, and exits 0 on success, 2 on validation failures, and 3 on
runtime failures, printing one machine-readable error line to stderr.

The environment variable BEAMSEG_THREADS caps compiled-kernel threads;
BEAMSEG_FORCE_FALLBACK=1 selects the pure-Python kernels.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .storage import FormatError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _parse_pair(text: str, sep: str, what: str):
    parts = text.split(sep)
    if len(parts) != 2:
        raise ConfigError(f"{what} must look like A{sep}B, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{what} values must be numeric: {text!r}") from exc


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "grid", None):
        az, el = _parse_pair(args.grid, "x", "--grid")
        o["grid"] = {"az_step_deg": az, "el_step_deg": el}
    if getattr(args, "band", None):
        lo, hi = _parse_pair(args.band, ":", "--band")
        o["band"] = {"lo_hz": lo, "hi_hz": hi}
    if getattr(args, "nbands", None) is not None:
        o.setdefault("band", {})["n_bands"] = args.nbands
    if getattr(args, "threshold", None) is not None:
        o["postprocess"] = {"threshold": args.threshold}
    train: dict = {}
    if getattr(args, "alpha", None) is not None:
        train["alpha"] = args.alpha
    if getattr(args, "beta", None) is not None:
        train["beta"] = args.beta
    if getattr(args, "lr", None) is not None:
        train["learning_rate"] = args.lr
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    if train:
        o["train"] = train
    return o


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=Path, default=None,
                        help="JSON config file")
    shared.add_argument("--seed", type=int, default=None)
    shared.add_argument("--out-dir", type=Path, required=True,
                        help="directory for outputs and manifests")
    shared.add_argument("--grid", default=None, metavar="AZxEL",
                        help="grid steps in degrees, e.g. 4x4")
    shared.add_argument("--band", default=None, metavar="LO:HI",
                        help="feature band edges in Hz, e.g. 200:2200")
    shared.add_argument("--nbands", type=int, default=None)
    shared.add_argument("--threshold", type=float, default=None)
    shared.add_argument("--alpha", type=float, default=None)
    shared.add_argument("--beta", type=float, default=None)
    shared.add_argument("--lr", type=float, default=None)
    shared.add_argument("--epochs", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="beamseg",
        description="acoustic source localization pipeline: delay-and-sum "
                    "beamforming feeding a segmentation network",
        epilog="env: BEAMSEG_THREADS caps kernel threads; "
               "BEAMSEG_FORCE_FALLBACK=1 forces the pure-Python kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[shared],
                   help="render the configured synthetic scene")

    p = sub.add_parser("beamform", parents=[shared],
                       help="energy maps and argmax track from a WAV")
    p.add_argument("--wav", type=Path, required=True)

    p = sub.add_parser("featurize", parents=[shared],
                       help="polar band-power images from a WAV")
    p.add_argument("--wav", type=Path, required=True)

    p = sub.add_parser("label", parents=[shared],
                       help="supervision masks from ground truth")
    p.add_argument("--truth", type=Path, required=True)

    p = sub.add_parser("train", parents=[shared],
                       help="fit the segmentation network")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--masks", type=Path, required=True)

    p = sub.add_parser("infer", parents=[shared],
                       help="probability maps and direction estimates")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("eval", parents=[shared],
                       help="track metrics from estimates and truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--name", default="report",
                   help="basename for the report files")

    p = sub.add_parser("plot", parents=[shared],
                       help="PNG heatmaps with truth/estimate markers")
    p.add_argument("--frame", type=int, default=0)

    p = sub.add_parser("pipeline", parents=[shared],
                       help="all stages from one config")
    p.add_argument("--benchmark", action="store_true",
                   help="long-flight comparison against the argmax "
                        "baseline instead of the stage chain")
    return parser


def _require_files(*paths) -> None:
    for p in paths:
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _dispatch(args, cfg: dict) -> None:
    from . import pipeline as pl

    out = Path(args.out_dir)
    if args.command == "simulate":
        pl.stage_simulate(cfg, out)
    elif args.command == "beamform":
        _require_files(args.wav)
        pl.stage_beamform(cfg, args.wav, out)
    elif args.command == "featurize":
        _require_files(args.wav)
        pl.stage_featurize(cfg, args.wav, out)
    elif args.command == "label":
        _require_files(args.truth)
        pl.stage_label(cfg, args.truth, out)
    elif args.command == "train":
        _require_files(args.features, args.masks)
        pl.stage_train(cfg, args.features, args.masks, out)
    elif args.command == "infer":
        _require_files(args.features, args.checkpoint)
        pl.stage_infer(cfg, args.features, args.checkpoint, out)
    elif args.command == "eval":
        _require_files(args.pred, args.truth)
        pl.stage_eval(cfg, args.pred, args.truth, out, report_name=args.name)
    elif args.command == "plot":
        pl.stage_plot(cfg, out, frame=args.frame)
    elif args.command == "pipeline":
        if args.benchmark:
            report = pl.run_benchmark(cfg, out,
                                      log=lambda m: print(m, flush=True))
            print(json.dumps(report["relational"]))
        else:
            pl.run_pipeline(cfg, out, log=lambda m: print(m, flush=True))
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {args.command!r}")


def _fail(command: str, exc: Exception, code: int) -> int:
    line = {"error": type(exc).__name__, "message": str(exc),
            "command": command, "exit_code": code}
    print(json.dumps(line), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        _dispatch(args, cfg)
    except (ConfigError, FormatError, FileNotFoundError, ValueError) as exc:
        return _fail(args.command, exc, EXIT_VALIDATION)
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        return _fail(args.command, exc, EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
