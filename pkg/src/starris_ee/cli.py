"""Command-line entry point: ``starris-ee {run,sweep,plotdata,validate,config}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict

from . import config as cfgmod
from .ao import Method
from .harness import SweepAxis, SweepSpec, emit_csv, emit_plotdata, read_csv, run_trial, sweep
from .validation import ascent_suite, minorization_suite

# CLI flag -> config key; every flag overrides the config file
_OVERRIDES = {
    "n_bs": int, "n_u": int, "n_users": int, "n_ris": int, "n_streams": int,
    "noise_power": float, "ricean_factor": float, "blockage_db": float, "layout_seed": int,
    "blocklength": float, "epsilon": float, "p_static": float, "beta": float, "p_budget": float,
    "weight": float, "rate_floor": float, "max_outer": int, "tol_outer": float, "solver": str,
    "workers": int,
}


def _add_common(p):
    p.add_argument("--config", help="YAML file with flat configuration keys")
    g = p.add_argument_group("overrides")
    for key, typ in _OVERRIDES.items():
        g.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)


def _load(args):
    cfg = cfgmod.load_config(args.config)
    over = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    return cfgmod.merge(cfg, over)


def _cmd_run(args):
    cfg = _load(args)
    rec = run_trial(cfgmod.build_scenario(cfg), cfgmod.build_params(cfg), args.method, args.seed)
    for k, v in asdict(rec).items():
        print(f"{k}: {v}")
    return 1 if rec.error else 0


def _cmd_sweep(args):
    cfg = _load(args)
    if args.trials is not None:
        cfg["n_trials"] = args.trials
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    spec = SweepSpec(SweepAxis(args.axis), tuple(args.values), tuple(args.methods),
                     int(cfg["n_trials"]), int(cfg["base_seed"]))
    table = sweep(spec, cfgmod.build_scenario(cfg), cfgmod.build_params(cfg),
                  workers=int(cfg["workers"]))
    emit_csv(table, args.out, include_wall_clock=args.wall_clock)
    errors = [r for r in table if r.error]
    for r in errors:
        print(f"error: {r.error}", file=sys.stderr)
    print(f"wrote {len(table)} rows to {args.out}")
    return 1 if errors else 0


def _cmd_plotdata(args):
    table = read_csv(args.input)
    group = tuple(s.strip() for s in args.group_by.split(",") if s.strip())
    aggs = emit_plotdata(table, group, args.out)
    print(f"wrote {len(aggs)} groups to {args.out}")
    return 0


def _cmd_validate(args):
    suites = [
        minorization_suite(args.instances, args.samples, seed=args.seed),
        ascent_suite(args.runs, seed=args.seed),
    ]
    text = []
    for s in suites:
        print(s.summary())
        text.append(s.summary())
        text.extend(s.lines)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write("\n".join(text) + "\n")
    return 0 if all(s.passed for s in suites) else 1


def _cmd_config(args):
    sys.stdout.write(cfgmod.dump_config())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="starris-ee", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    methods = [m.value for m in Method]

    p = sub.add_parser("run", help="optimize one channel draw and print the record")
    _add_common(p)
    p.add_argument("--method", choices=methods, default=Method.STAR_ES.value)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over one parameter axis")
    _add_common(p)
    p.add_argument("--axis", choices=[a.value for a in SweepAxis], required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--methods", choices=methods, nargs="+", default=methods)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help="base seed; trial t uses seed + t")
    p.add_argument("--out", required=True)
    p.add_argument("--wall-clock", action="store_true",
                   help="add a wall-clock column (output no longer byte-reproducible)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plotdata", help="mean / standard error per group of a sweep CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--group-by", default="axis,method")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plotdata)

    p = sub.add_parser("validate", help="minorization and ascent self-checks")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the full report to this file")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("config", help="configuration helpers")
    csub = p.add_subparsers(dest="action", required=True)
    c = csub.add_parser("print-default", help="print the default configuration file")
    c.set_defaults(func=_cmd_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
