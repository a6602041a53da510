"""Command-line front end.

Subcommands: gen-data, run, check-theory, figure-data. Exit codes:
0 success, 1 configuration error, 2 runtime/numeric error, 3 theory-check
failure. Experiment settings come from a flat key=value config file (see
the README for the grammar) overridable with command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .data import SynthSpec, gen_synth, save_csv, save_meta
from .errors import ConfigError, FlowcpError
from .experiments import (
    ExperimentConfig,
    config_defaults_text,
    figure_data,
    run_experiment,
)
from .theory import run_theory_checks

_TUPLE_FIELDS = {"families": str, "alphas": float, "fractions": float,
                 "hidden_dims": int}
_OPTIONAL_FIELDS = {"learning_rate": float, "batch_size": int}


def parse_config_file(path: str) -> dict:
    """Parse the flat key=value grammar: one pair per line, '#' comments."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            raw[key.strip()] = value.strip()
    return raw


def build_experiment_config(raw: dict) -> ExperimentConfig:
    """Coerce raw string settings onto ExperimentConfig, naming bad fields."""
    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _TUPLE_FIELDS:
                elem = _TUPLE_FIELDS[key]
                kwargs[key] = tuple(elem(v.strip()) for v in value.split(",") if v.strip())
            elif key in _OPTIONAL_FIELDS:
                kwargs[key] = _OPTIONAL_FIELDS[key](value) if value else None
            elif isinstance(value, str):
                default = getattr(ExperimentConfig(), key)
                if isinstance(default, bool):
                    kwargs[key] = value.lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    kwargs[key] = int(value)
                elif isinstance(default, float):
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowcp",
                     description="Conformal regression with trained conformity transforms")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("kind", choices=["toy", "cos", "squared", "inverse", "linear"])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi", type=float, default=5.0)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("run", help="full train/calibrate/evaluate pipeline")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--alpha", type=float, action="append",
                   help="override alphas (repeatable)")
    p.add_argument("--family", action="append",
                   help="override families (repeatable)")
    p.add_argument("--print-defaults", action="store_true",
                   help="print the default config and exit")

    p = sub.add_parser("check-theory", help="run the validity verification suite")
    p.add_argument("--out", help="write the report to this path")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--perturbation-trials", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("figure-data", help="emit the two-regime example data")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--exponent", type=int, default=1, choices=[1, 2])
    p.add_argument("--gamma", type=float, default=0.01)
    return parser


def _cmd_gen_data(args) -> int:
    spec = SynthSpec(kind=args.kind, n=args.n, seed=args.seed, xi=args.xi)
    ds = gen_synth(spec)
    save_csv(ds, args.out)
    save_meta(ds.meta, args.out + ".meta")
    print(f"wrote {ds.n} rows to {args.out}")
    return 0


def _cmd_run(args) -> int:
    if args.print_defaults:
        sys.stdout.write(config_defaults_text())
        return 0
    raw = parse_config_file(args.config) if args.config else {}
    cfg = build_experiment_config(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.alpha:
        cfg.alphas = tuple(args.alpha)
    if args.family:
        cfg.families = tuple(args.family)
    cfg.validate()
    result = run_experiment(cfg)
    for (family, alpha), report in sorted(result.reports.items()):
        print(f"{family:9s} alpha={alpha}: coverage {report.coverage:.3f} "
              f"({report.std('coverage'):.3f})  size {report.avg_size:.3f} "
              f"({report.std('avg_size'):.3f})  wsc {report.wsc:.3f} "
              f"({report.std('wsc'):.3f})")
    print(f"reports written to {cfg.out_dir}")
    return 0


def _cmd_check_theory(args) -> int:
    report = run_theory_checks(n_trials=args.trials,
                               perturbation_trials=args.perturbation_trials,
                               seed=args.seed)
    lines = report.lines()
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0 if report.passed else 3


def _cmd_figure_data(args) -> int:
    thresholds = figure_data(args.out, seed=args.seed, alpha=args.alpha,
                             exponent=args.exponent, gamma=args.gamma)
    print(f"wrote {args.out}; thresholds: " +
          ", ".join(f"{k}={v:.4f}" for k, v in thresholds.items()))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check-theory":
            return _cmd_check_theory(args)
        if args.command == "figure-data":
            return _cmd_figure_data(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (FlowcpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
