"""Command-line interface.

Subcommands mirror the pipeline stages (synth, prep, train, detect,
cross-eval, report) plus a one-shot ``pipeline`` command chaining them all.
Exit codes: 0 success, 1 validation/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import pipeline as pl
from .autodiff import NonFiniteError
from .scada import SchemaError
from .training import TrainingDiverged

CONFIG_ENV_VAR = "WINDWATCH_CONFIG"
DEFAULT_OUT = "windwatch_run"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windwatch",
        description="Wind-farm power forecasting and deterioration detection.")
    parser.add_argument("--config", type=Path, default=None,
                        help=f"run config JSON (default: ${CONFIG_ENV_VAR})")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    parser.add_argument("--out", type=Path, default=None,
                        help=f"output root directory (default: {DEFAULT_OUT})")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate the synthetic farm dataset")
    sub.add_parser("prep", help="resample, screen, engineer features, fix splits")

    p_train = sub.add_parser("train", help="train per-turbine models")
    p_train.add_argument("--turbine", type=int, default=None)
    p_train.add_argument("--kind", choices=["lstm", "fnn", "both"], default="both")

    p_detect = sub.add_parser("detect", help="derive cutoffs and label test windows")
    p_detect.add_argument("--turbine", type=int, default=None)
    p_detect.add_argument("--mode", choices=["rmse", "rmspe", "mixed"],
                          default="mixed", help="headline mode for console output")
    p_detect.add_argument("--start", default=None, help="RFC3339 range start")
    p_detect.add_argument("--end", default=None, help="RFC3339 range end")

    sub.add_parser("cross-eval", help="evaluate every model on every turbine")
    sub.add_parser("report", help="emit the plot-ready data bundle")
    sub.add_parser("pipeline", help="run all stages in order")
    return parser


def load_run_config(args) -> pl.RunConfig:
    out_root = args.out if args.out is not None else Path(DEFAULT_OUT)
    config_path = args.config
    if config_path is None and os.environ.get(CONFIG_ENV_VAR):
        config_path = Path(os.environ[CONFIG_ENV_VAR])
    if config_path is not None:
        cfg = pl.RunConfig.from_json(config_path, out_root)
        if args.seed is not None:
            # keep the configured farm layout but re-seed the stochastics
            cfg.seed = args.seed
            cfg.farm = dataclasses.replace(cfg.farm, weather_seed=args.seed)
    else:
        seed = args.seed if args.seed is not None else 42
        cfg = pl.RunConfig(out_root=out_root, seed=seed)
    return cfg


def _check_turbine(cfg: pl.RunConfig, turbine: int | None) -> list[int] | None:
    if turbine is None:
        return None
    if turbine not in cfg.farm.turbine_ids:
        raise ValueError(f"unknown turbine id {turbine}; "
                         f"farm has {cfg.farm.turbine_ids}")
    return [turbine]


def run_command(args) -> int:
    cfg = load_run_config(args)
    if args.command == "synth":
        pl.write_manifest(cfg)
        pl.stage_synth(cfg)
    elif args.command == "prep":
        pl.stage_prep(cfg)
    elif args.command == "train":
        kinds = ("lstm", "fnn") if args.kind == "both" else (args.kind,)
        pl.stage_train(cfg, _check_turbine(cfg, args.turbine), kinds)
    elif args.command == "detect":
        reports = pl.stage_detect(cfg, _check_turbine(cfg, args.turbine),
                                  start=args.start, end=args.end)
        for tid, report in sorted(reports.items()):
            print(f"turbine {tid}: {args.mode} weighted F1 = "
                  f"{report.weighted_f1(args.mode):.3f}")
    elif args.command == "cross-eval":
        pl.stage_crosseval(cfg)
    elif args.command == "report":
        pl.stage_report(cfg)
    elif args.command == "pipeline":
        pl.run_pipeline(cfg)
    else:  # pragma: no cover
        raise ValueError(f"unhandled command {args.command!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for
        # numerical failures here
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return run_command(args)
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, SchemaError, FileNotFoundError, NotADirectoryError,
            PermissionError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry() -> None:  # console_scripts hook
    sys.exit(main())


if __name__ == "__main__":
    entry()
