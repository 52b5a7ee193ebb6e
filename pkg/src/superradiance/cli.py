"""Command line: ``superradiance run --config FILE`` and ``superradiance sweep --plan PLAN``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 sweep finished with failed points.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from .config import ConfigError, bundled_plans, load_plan, load_run_config
from .cumulants import TruncationWarning
from .exact import CapacityError
from .geometry import GeometryError
from .integrator import IntegrationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3


def _order(s):
    return s if s == "exact" else int(s)


def _common(p):
    p.add_argument("--out-dir", help="output directory (overrides the file)")
    p.add_argument("--order", choices=["2", "3", "exact"], help="truncation order")
    p.add_argument("--hamiltonian", choices=["on", "off"], help="include coherent exchange")
    p.add_argument("--max-exact-n", type=int, help="largest N accepted for exact runs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superradiance", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="single trajectory from a run config")
    run.add_argument("--config", required=True)
    _common(run)
    sweep = sub.add_parser("sweep", help="scaling sweep from a plan file or bundled plan name")
    sweep.add_argument("--plan", required=True)
    sweep.add_argument("--jobs", type=int, default=1)
    _common(sweep)
    sub.add_parser("plans", help="list bundled plans")
    return ap


def _overrides(args) -> dict:
    return {"order": _order(args.order) if args.order else None,
            "include_hamiltonian": None if args.hamiltonian is None else args.hamiltonian == "on",
            "max_exact_n": args.max_exact_n}


def cmd_run(args) -> int:
    from .reduction import DistanceClasses
    from .simulation import simulate

    cfg = load_run_config(args.config, _overrides(args))
    out = Path(args.out_dir or cfg.out_dir)
    array, couplings = cfg.build_couplings()
    reduction = DistanceClasses(array, couplings, cfg.order) if cfg.reduction else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        trace = simulate(couplings, cfg.order, include_hamiltonian=cfg.include_hamiltonian,
                         config=cfg.integrator, reduction=reduction, max_exact_n=cfg.max_exact_n)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trace_{cfg.label()}.csv"
    meta = {"config_hash": cfg.config_hash(), "geometry": cfg.kind, "a_or_theta": cfg.a_or_theta,
            "polarization": cfg.polarization}
    trace.write_csv(path, meta)
    print(f"R_peak={trace.R_peak:.10g} t_peak={trace.t_peak:.10g} reliable={str(trace.reliable).lower()}")
    print(f"trace written to {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .scaling import run_sweep

    plan = load_plan(args.plan, _overrides(args))
    out = Path(args.out_dir or Path("out") / plan.name)

    def progress(done, total, rec):
        print(f"[{done}/{total}] {rec.geometry} {rec.reservoir} {rec.polarization} order={rec.order} "
              f"a={rec.a_or_theta} N={rec.N}: R_peak={rec.R_peak:.6g} "
              f"reliable={str(rec.reliable).lower()} {rec.status}", file=sys.stderr)

    result = run_sweep(plan, jobs=args.jobs, out_dir=out, progress=progress)
    for key, pts in result.alphas.items():
        print(" ".join(str(k) for k in key))
        for p in pts:
            print(f"  N={p.N:5d}  alpha={p.alpha:.4f}  ({p.stencil})")
    print(f"results written to {out}")
    if result.failed:
        for r in result.failed:
            print(f"FAILED N={r.N} {r.geometry} a={r.a_or_theta}: {r.status}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plans":
            print("\n".join(bundled_plans()))
            return EXIT_OK
        return cmd_run(args) if args.command == "run" else cmd_sweep(args)
    except (ConfigError, CapacityError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
