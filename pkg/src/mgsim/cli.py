"""Command-line interface.

Subcommands: run a scenario to CSV, sweep a parameter, reproduce a reference
table, audit the power balance of a CSV. Exit codes: 0 success / assertions
pass, 1 assertion failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import engine, report
from .integrators import StepUnderflowError
from .network import NetworkError
from .output import FLOAT_FMT, read_csv, write_csv
from .scenario import ScenarioError, load_fixture, load_scenario_file

BALANCE_TOL = 1e-3      # declared power-balance invariant


def _load_scenario(arg: str):
    p = Path(arg)
    if p.exists():
        return load_scenario_file(p)
    return load_fixture(arg)


def _fmt(v: float) -> str:
    return FLOAT_FMT.format(v)


def cmd_run(args) -> int:
    scn = _load_scenario(args.scenario)
    if args.dt is not None:
        scn.sim.integrator = replace(scn.sim.integrator, dt=args.dt)
    if args.t_end is not None:
        scn.sim.t_end = args.t_end
    if args.method is not None:
        scn.sim.integrator = replace(scn.sim.integrator, method=args.method)
    ts = engine.run(scn)
    if args.out:
        n = write_csv(ts, args.out)
        print(f"wrote {n} bytes to {args.out}")
    st = engine.steady_state_of(ts)
    print(f"steady state (mean of final 10% of {scn.sim.t_end:g} s):")
    print(f"  f = {st['f_hz']:.6g} Hz, V = {st['v_ll_rms']:.6g} V line-to-line RMS")
    for col in ts.columns:
        if col.startswith("p_"):
            ident = col[2:]
            print(f"  {ident}: P = {st[col]:.6g} W, Q = {st['q_' + ident]:.6g} VAr")
    return 0


def cmd_sweep(args) -> int:
    scn = _load_scenario(args.scenario)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("--values must list at least one number")
    rows = engine.sweep(scn, args.param, values, dynamic=args.dynamic)
    keys = list(rows[0].keys())
    print(",".join(keys))
    for row in rows:
        print(",".join(_fmt(row[k]) for k in keys))
    if args.out:
        text = ",".join(keys) + "\n"
        text += "".join(",".join(_fmt(r[k]) for k in keys) + "\n" for r in rows)
        Path(args.out).write_text(text)
    return 0


def cmd_report(args) -> int:
    scn = _load_scenario(args.scenario) if args.scenario else None
    rows = report.table_sweep(args.table, scn, dynamic=args.dynamic)
    res = report.table_report(args.table, rows)
    print(res.render())
    return 0 if res.passed else 1


def cmd_balance(args) -> int:
    ts = read_csv(args.csv)
    rep = report.balance_report(ts, window_start=args.window)
    print(f"balance audit over t >= {rep.window_start:g} s ({len(rep.times)} samples)")
    print(f"  max relative P residual: {rep.max_p_residual:.3e}")
    print(f"  max relative Q residual: {rep.max_q_residual:.3e}")
    ok = rep.max_p_residual < BALANCE_TOL and rep.max_q_residual < BALANCE_TOL
    print(f"[{'PASS' if ok else 'FAIL'}] residuals < {BALANCE_TOL:g}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mgsim",
        description="Phasor-domain microgrid simulator (droop-controlled "
                    "synchronous generators, grid, loads, wind injection)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario (file path or fixture name)")
    p.add_argument("scenario")
    p.add_argument("--out", help="write the time series CSV here")
    p.add_argument("--dt", type=float, help="override integration step, s")
    p.add_argument("--t-end", type=float, dest="t_end", help="override end time, s")
    p.add_argument("--method", choices=("rk4", "rk23"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="steady state across parameter values")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="path like load.main.r")
    p.add_argument("--values", required=True, help="comma-separated numbers")
    p.add_argument("--dynamic", action="store_true",
                   help="full time-domain run per value instead of the "
                        "algebraic equilibrium")
    p.add_argument("--out", help="write the sweep table CSV here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="reproduce a reference table with pass/fail")
    p.add_argument("table", choices=sorted(report.TABLE_SWEEPS))
    p.add_argument("scenario", nargs="?",
                   help="override the table's bundled fixture")
    p.add_argument("--dynamic", action="store_true", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("balance", help="power-balance audit of a run CSV")
    p.add_argument("csv")
    p.add_argument("--window", type=float, default=None,
                   help="audit samples with t >= this (default 3 s, clamped)")
    p.set_defaults(func=cmd_balance)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NetworkError, StepUnderflowError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
