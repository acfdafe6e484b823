"""Command line entry point: ``gradiv {taylor-green,timing,step,cylinder} ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..linsolve import GMRES_MAXIT, GMRES_RESTART, GMRES_TOL, GmresSettings
from ..mesh import load_mesh
from .export import write_csv
from .problems import TaylorGreenProblem
from .runners import read_grid, run_cylinder, run_step_flow, run_taylor_green, run_timing


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--dt", type=float, default=None, help="time step (default: per experiment)")
    g.add_argument("--tstar", type=float, default=None, help="final time (default: per experiment)")
    g.add_argument("--check-identities", choices=("on", "off"), default="off")
    g.add_argument("--gmres-tol", type=float, default=GMRES_TOL)
    g.add_argument("--gmres-restart", type=int, default=GMRES_RESTART)
    g.add_argument("--gmres-maxit", type=int, default=GMRES_MAXIT)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=Path("."), help="output directory")
    g.add_argument("-v", "--verbose", action="store_true")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    ap = argparse.ArgumentParser(prog="gradiv", description="Modular grad-div stabilized Navier-Stokes benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    tg = sub.add_parser("taylor-green", parents=[common], help="convergence study on the Taylor-Green vortex")
    tg.add_argument("--element", choices=("mini", "th"), default="th")
    tg.add_argument("--scheme", choices=("none", "coupled", "modular", "lagged"), default="modular")
    tg.add_argument("--gamma", type=float, default=1.0)
    tg.add_argument("--beta", type=float, default=0.2)
    tg.add_argument("--m-list", type=_int_list, default=[16, 24, 32])
    tg.add_argument("--step1-solver", choices=("direct", "gmres"), default="direct")

    tm = sub.add_parser("timing", parents=[common], help="coupled vs modular solve cost over a (beta, gamma) grid")
    tm.add_argument("--element", choices=("mini", "th"), default="mini")
    tm.add_argument("--grid", type=Path, required=True, help="CSV file of beta,gamma rows")
    tm.add_argument("--m", type=int, default=32)

    st = sub.add_parser("step", parents=[common], help="channel flow over a step")
    st.add_argument("--schemes", default="none,coupled,modular")
    st.add_argument("--gamma", type=float, default=1.0)
    st.add_argument("--beta", type=float, default=0.0)
    st.add_argument("--mesh", type=Path, default=None)

    cy = sub.add_parser("cylinder", parents=[common], help="channel flow past a cylinder")
    cy.add_argument("--schemes", default="none,modular")
    cy.add_argument("--gamma", type=float, default=0.005)
    cy.add_argument("--mesh", type=Path, default=None)
    return ap


def _settings(args) -> GmresSettings:
    return GmresSettings(tol=args.gmres_tol, restart=args.gmres_restart, max_iter=args.gmres_maxit)


def _series_rows(report, key="run") -> list[dict]:
    rows = []
    for label, series in report.series.items():
        rows += [dict({key: label}, **r) for r in series]
    return rows


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    np.random.seed(args.seed)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    identities = args.check_identities == "on"

    if args.command == "taylor-green":
        problem = TaylorGreenProblem(t_final=args.tstar if args.tstar is not None else 1.0)
        rep = run_taylor_green(args.element, args.scheme, args.gamma, args.beta, args.m_list, problem=problem,
                               dt=args.dt, step1_solver=args.step1_solver, gmres=_settings(args),
                               check_identities=identities)
        cols = ["m", "h", "dt", "velocity_inf", "velocity_l2", "div_inf", "div_l2", "pressure_inf", "pressure_l2",
                "failed", "identity_residual", "wall_time"]
        write_csv(out / "errors.csv", rep.rows, cols)
        rate_cols = ["m"] + [c for r in rep.rows[:1] for c in r if c.endswith("_rate")]
        write_csv(out / "rates.csv", rep.rows, rate_cols)
        write_csv(out / "energy.csv", _series_rows(rep, "mesh"))
        for r in rep.rows:
            print(f"m={r['m']:3d}  u_inf={r['velocity_inf']:.3e}  div_inf={r['div_inf']:.3e}  "
                  f"div_l2={r['div_l2']:.3e}  p_l2={r['pressure_l2']:.3e}")
    elif args.command == "timing":
        rep = run_timing(args.element, read_grid(args.grid), m=args.m, dt=args.dt,
                         t_final=args.tstar if args.tstar is not None else 1.0, gmres=_settings(args))
        write_csv(out / "timing.csv", rep.rows)
        for r in rep.rows:
            ct = "F" if r["coupled_failed"] else f"{r['coupled_time']:.2f}"
            print(f"beta={r['beta']:g} gamma={r['gamma']:g}  coupled={ct}  modular={r['modular_time']:.2f}")
    elif args.command in ("step", "cylinder"):
        mesh = load_mesh(args.mesh) if args.mesh else None
        schemes = [s for s in args.schemes.split(",") if s]
        kw = dict(schemes=schemes, gamma=args.gamma, mesh=mesh, gmres=_settings(args), out=out)
        if args.dt is not None:
            kw["dt"] = args.dt
        if args.tstar is not None:
            kw["t_final"] = args.tstar
        if args.command == "step":
            rep = run_step_flow(beta=args.beta, **kw)
        else:
            rep = run_cylinder(**kw)
            write_csv(out / "forces.csv", _series_rows(rep, "scheme"),
                      ["scheme", "t", "c_d", "c_l", "delta_p", "div_norm"])
        write_csv(out / "divnorm.csv", _series_rows(rep, "scheme"), ["scheme", "t", "div_norm"])
        write_csv(out / "energy.csv", _series_rows(rep, "scheme"), ["scheme", "t", "kinetic_energy"])
        summary = [{k: v for k, v in r.items()} for r in rep.rows]
        write_csv(out / f"{args.command}_summary.csv", summary)
        for r in rep.rows:
            print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
