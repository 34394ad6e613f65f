"""Command line entry point: solve, converge, geomcheck, dump-config."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .harness import geometry_check, run_cell, run_convergence


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("name", "k", "q", "r", "c_gamma", "nu", "form", "startup", "solver", "directory"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "lx", None) is not None:
        overrides["lx_min"], overrides["lx_max"] = args.lx
    if getattr(args, "lt", None) is not None:
        overrides["lt_min"], overrides["lt_max"] = args.lt
    if getattr(args, "skip_plus_layers", False):
        overrides["skip_plus_layers"] = True
    if getattr(args, "vtk", False):
        overrides["vtk"] = True
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _add_common(p):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--problem", dest="name", help="KITE | KITE_G0 | CIRCLE_STATIC")
    p.add_argument("-k", type=int)
    p.add_argument("-q", type=int)
    p.add_argument("-r", type=int)
    p.add_argument("--c-gamma", dest="c_gamma", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--form", choices=["EXPERIMENT", "ANALYSIS"])
    p.add_argument("--startup", choices=["INTERPOLATE", "BOOTSTRAP"])
    p.add_argument("--solver", choices=["DIRECT", "ITERATIVE"])
    p.add_argument("--skip-plus-layers", action="store_true")
    p.add_argument("--out", dest="directory", help="output directory")
    p.add_argument("--vtk", action="store_true", help="write final-state VTK")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eulercut", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single run at one refinement level")
    _add_common(p)
    p.add_argument("--Lx", dest="level_x", type=int, default=1)
    p.add_argument("--Lt", dest="level_t", type=int, default=3)

    p = sub.add_parser("converge", help="grid study over space and time refinements")
    _add_common(p)
    p.add_argument("--Lx", dest="lx", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--Lt", dest="lt", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("geomcheck", help="deformation and quadrature diagnostics on a static circle")
    p.add_argument("--q", dest="q_values", type=int, nargs="+", default=[2, 3])
    p.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4, 5])
    p.add_argument("--out", dest="directory", default=None)

    p = sub.add_parser("dump-config", aliases=["config"], help="print the default configuration")
    p.add_argument("--config", help="print this configuration with defaults filled in")
    p.add_argument("--print-defaults", action="store_true", help="accepted for compatibility; the default action")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("dump-config", "config"):
        cfg = load_config(args.config) if args.config else RunConfig()
        sys.stdout.write(cfg.to_ini())
        return 0

    if args.command == "geomcheck":
        res = geometry_check(tuple(args.q_values), tuple(args.levels))
        cols = list(res["rows"][0].keys())
        writer = csv.DictWriter(sys.stdout, fieldnames=cols)
        writer.writeheader()
        for row in res["rows"]:
            writer.writerow(row)
        ok = True
        for q, rate in res["rates"].items():
            passed = rate >= q + 0.5
            ok &= passed
            print(f"q={q}: residual rate {rate:.2f} (required >= {q + 0.5}) {'PASS' if passed else 'FAIL'}")
        if args.directory:
            Path(args.directory).mkdir(parents=True, exist_ok=True)
            with open(Path(args.directory) / "geomcheck.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                w.writerows(res["rows"])
        return 0 if ok else 1

    cfg = _config(args)
    out = Path(cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "solve":
        cell = run_cell(cfg, args.level_x, args.level_t, out / "log.csv",
                        out / "state.vtk" if cfg.vtk else None)
        if not cell["ok"]:
            print(f"run failed: {cell['error']}", file=sys.stderr)
            return 1
        print(f"Lx={args.level_x} Lt={args.level_t} L2(H1)={cell['l2_h1']:.6e} "
              f"Linf(L2)={cell['linf_l2']:.6e} time={cell['seconds']:.1f}s")
        return 0

    summary = run_convergence(cfg, args.workers, out)
    for norm in ("linf_l2", "l2_h1"):
        print(f"{norm}: spatial EOC {summary[f'eoc_space_{norm}']:.2f}, "
              f"temporal EOC {summary[f'eoc_time_{norm}']:.2f}")
    for c in summary["cells"]:
        if not c["ok"]:
            print(f"cell Lx={c['lx']} Lt={c['lt']} failed: {c['error']}", file=sys.stderr)
    return 0 if summary["all_ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
