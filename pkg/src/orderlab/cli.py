"""Command line front end.

Subcommands:

- train:   run a config (benign unless it has an attack section)
- attack:  like train but refuses configs without an attack section
- bob:     backdoor campaign (trigger + schedule + objective sections)
- bop:     single-point flip campaign (bop_target section)
- sweep:   cartesian grid over a base config (--grid JSON)
- compare: delta report between two metrics CSVs
- theory:  write the standing theory table as CSV

Exit codes: 0 success, 2 config/validation problems, 3 numeric failure
at runtime.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .errors import ConfigError, DimensionError, FormatError, LayoutError, NumericError, PlanError
from .metrics import MetricsLog

_VALIDATION_ERRORS = (ConfigError, PlanError, FormatError, DimensionError, LayoutError)
_NUMERIC_ERRORS = (NumericError, FloatingPointError, np.linalg.LinAlgError)


def _load_config(path, seed=None, name=None):
    with open(path) as fh:
        cfg = json.load(fh)
    if seed is not None:
        cfg["seed"] = seed
    if name is not None:
        cfg["name"] = name
    return cfg


def _add_common(p):
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", default=None, help="directory for metrics CSVs")
    p.add_argument("--data-dir", default=None, help="dataset cache directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="orderlab")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("train", "attack", "bob", "bop"):
        _add_common(sub.add_parser(name))

    sweep = sub.add_parser("sweep")
    _add_common(sweep)
    sweep.add_argument("--grid", required=True, help="JSON file mapping axes to value lists")
    sweep.add_argument("--workers", type=int, default=1)

    cmp_p = sub.add_parser("compare")
    cmp_p.add_argument("baseline", help="baseline metrics CSV")
    cmp_p.add_argument("attacked", help="attacked metrics CSV")
    cmp_p.add_argument("--after-epoch", type=int, default=None,
                       help="also report recovery time after this epoch")
    cmp_p.add_argument("--out", default=None, help="write the report as JSON here")

    th = sub.add_parser("theory")
    th.add_argument("--out", required=True, help="directory for theory.csv")
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--trials", type=int, default=200_000)

    return parser


def _cmd_run(args, runner):
    cfg = _load_config(args.config, args.seed)
    log, _extras = runner(cfg, out_dir=args.out, data_dir=args.data_dir)
    last_test = [r for r in log.rows if r["split"] == "test"]
    if last_test:
        r = last_test[-1]
        acc = "" if r["accuracy"] is None else f" acc {r['accuracy']:.4f}"
        print(f"{r['run_id']}: final test loss {r['loss']:.6g}{acc}")
    return 0


def _cmd_sweep(args):
    cfg = _load_config(args.config, args.seed)
    with open(args.grid) as fh:
        grid = json.load(fh)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    rows = harness.run_sweep(cfg, grid, workers=args.workers,
                             out_dir=out_dir, data_dir=args.data_dir)
    print(f"{len(rows)} sweep cells -> {os.path.join(out_dir, 'sweep.csv')}")
    return 0


def _cmd_compare(args):
    base = MetricsLog.from_csv(args.baseline)
    attacked = MetricsLog.from_csv(args.attacked)
    report = harness.compare_arms(base, attacked, after_epoch=args.after_epoch)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_theory(args):
    os.makedirs(args.out, exist_ok=True)
    rows = harness.theory_battery(seed=args.seed, trials=args.trials)
    path = harness.write_theory_csv(rows, os.path.join(args.out, "theory.csv"))
    print(f"{len(rows)} quantities -> {path}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_run(args, harness.run_experiment)
        if args.command == "attack":
            cfg = _load_config(args.config, args.seed)
            harness.validate_config(cfg, require_attack=True)
            return _cmd_run(args, harness.run_experiment)
        if args.command == "bob":
            return _cmd_run(args, harness.run_bob_experiment)
        if args.command == "bop":
            return _cmd_run(args, harness.run_bop_experiment)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "theory":
            return _cmd_theory(args)
    except ConfigError as exc:
        print("config problems:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except _VALIDATION_ERRORS as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
