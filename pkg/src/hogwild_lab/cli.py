"""Command line entry point: ``hogwild-lab {run,stats,bounds,race}``.

Exit codes: 0 success, 2 configuration error, 3 every seed diverged.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import harness as H
from . import schedules as S
from . import theory
from .data import ParseError, load

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def parse_grid(text: str) -> np.ndarray:
    """``a,b,c`` or ``geom:start:stop:num`` or ``lin:start:stop:num``."""
    try:
        if text.startswith(("geom:", "lin:")):
            kind, a, b, num = text.split(":")
            fn = np.geomspace if kind == "geom" else np.linspace
            return fn(float(a), float(b), int(num))
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise H.ConfigError(f"bad grid {text!r}") from None


def parse_params(items) -> dict:
    out = {}
    for item in items or []:
        k, v = H.parse_override(item)
        out[k] = v
    return out


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def cmd_run(args) -> int:
    if args.config:
        cfg_map = H.tomli.loads(open(args.config, encoding="utf-8").read())
    else:
        cfg_map = {}
    for item in args.override or []:
        k, v = H.parse_override(item)
        cfg_map[k] = v
    if args.seeds:
        cfg_map["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
    if args.out:
        cfg_map["out"] = args.out
    cfg = H.RunConfig.from_mapping(cfg_map)
    if args.dump_config:
        sys.stdout.write(cfg.to_toml())
        return EXIT_OK
    configs = H.fraction_sweep(cfg) if args.sweep == "fractions" else [cfg]
    for c in configs:
        agg = H.run_config(c)
        out = c.out or "."
        if len(configs) > 1:
            out = f"{out}/v_{c.v:.4f}"
        paths = H.write_outputs(c, agg, out)
        if agg.diverged:
            print(f"diverged seeds: {agg.diverged}", file=sys.stderr)
        print(paths[0])
    return EXIT_OK


def cmd_stats(args) -> int:
    ds = load(args.dataset, args.dim)
    st = theory.sparsity_stats(ds, args.D)
    w = _writer()
    w.writerow(["n", "dim", "D", "delta_bar", "delta_bar_D", "mean_support", "collision"])
    w.writerow([ds.n, ds.dim, st.D, st.delta_bar, format(st.delta_bar_D, ".17g"),
                format(st.mean_support, ".17g"), format(st.collision, ".17g")])
    return EXIT_OK


def cmd_bounds(args) -> int:
    grid = parse_grid(args.grid)
    params = parse_params(args.param)
    if args.family not in theory.BOUND_FAMILIES:
        raise H.ConfigError(f"unknown bound family {args.family!r}")
    try:
        curve = theory.BoundCurve(args.family, params)
        vals = curve(grid)
    except KeyError as e:
        raise H.ConfigError(f"bound family {args.family} needs parameter {e}") from None
    w = _writer()
    w.writerow(["t", "bound"])
    for t, b in zip(grid, np.atleast_1d(vals)):
        w.writerow([format(t, ".17g"), format(b, ".17g")])
    return EXIT_OK


def cmd_race(args) -> int:
    grid = parse_grid(args.grid)
    qs = [float(q) for q in args.schedules.split(",")]
    try:
        scheds = {f"q={q:g}": S.power_schedule(q, args.L) for q in qs}
    except S.ScheduleError as e:
        raise H.ConfigError(str(e)) from None
    res = theory.schedule_race(scheds, grid, args.mu)
    names = list(scheds)
    w = _writer()
    w.writerow(["t"] + [f"C[{n}]" for n in names] + ["winner"])
    for j, t in enumerate(res["t"]):
        w.writerow([format(t, ".17g")] + [format(res["C"][n][j], ".17g") for n in names]
                   + [res["winner"][j]])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hogwild-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a config over its seeds and write CSVs")
    r.add_argument("--config")
    r.add_argument("--out")
    r.add_argument("--seeds", help="comma-separated seed list")
    r.add_argument("--override", action="append", metavar="KEY=VAL")
    r.add_argument("--sweep", choices=["fractions"])
    r.add_argument("--dump-config", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("stats", help="sparsity statistics of a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--D", type=int, default=1)
    s.add_argument("--dim", type=int)
    s.set_defaults(func=cmd_stats)

    b = sub.add_parser("bounds", help="evaluate a bound curve on a grid")
    b.add_argument("--family", required=True)
    b.add_argument("--grid", required=True)
    b.add_argument("--param", action="append", metavar="KEY=VAL")
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("race", help="compare C(t) of power schedules 1/(K+t)^q")
    c.add_argument("--schedules", required=True, help="comma-separated exponents q")
    c.add_argument("--grid", required=True)
    c.add_argument("--L", type=float, default=1.0)
    c.add_argument("--mu", type=float, default=1.0)
    c.set_defaults(func=cmd_race)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (H.ConfigError, ParseError, H.tomli.TOMLDecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except H.AllSeedsDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
