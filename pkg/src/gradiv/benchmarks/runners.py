"""Drivers for the Taylor-Green, timing, step-channel and cylinder studies."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..fem.assembly import assemble_operators
from ..fem.functions import Evaluator, error_norms
from ..fem.space import MixedSpace, element_family
from ..linsolve import GmresSettings
from ..mesh import Mesh, generate_unit_square
from ..stepper import RunConfig, Stepper, scheme_name
from .export import export_fields
from .functionals import drag_lift, pressure_drop
from .problems import TaylorGreenProblem, cylinder_boundary, packaged_mesh, step_boundary

log = logging.getLogger(__name__)

ERROR_COLUMNS = ("velocity_inf", "div_inf", "div_l2", "pressure_l2")


@dataclass
class BenchmarkReport:
    """Rows of a results table plus optional time series keyed by run label."""

    kind: str
    rows: list[dict] = field(default_factory=list)
    series: dict[str, list[dict]] = field(default_factory=dict)
    states: dict[str, object] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]


def convergence_rates(ms: Sequence[int], errors: Sequence[float]) -> list[float]:
    """log(e_i/e_{i+1}) / log(m_{i+1}/m_i) for consecutive entries; NaN for the first."""
    rates = [math.nan]
    for (m1, e1), (m2, e2) in zip(zip(ms, errors), zip(ms[1:], errors[1:])):
        if e1 > 0 and e2 > 0 and math.isfinite(e1) and math.isfinite(e2):
            rates.append(math.log(e1 / e2) / math.log(m2 / m1))
        else:
            rates.append(math.nan)
    return rates


def _gmres(settings: GmresSettings | None) -> GmresSettings:
    return settings or GmresSettings()


# -- Taylor-Green ---------------------------------------------------------------

def taylor_green_config(problem: TaylorGreenProblem, element: str, scheme: str, gamma: float, beta: float,
                        dt: float, t_final: float | None = None, **kw) -> RunConfig:
    return RunConfig(scheme=scheme, nu=problem.nu, dt=dt, t_final=problem.t_final if t_final is None else t_final,
                     beta=beta, gamma=gamma, family=element, boundary=problem.velocity,
                     initial_velocity=problem.velocity, **kw)


def run_taylor_green(element: str, scheme: str, gamma: float, beta: float, m_list: Sequence[int],
                     problem: TaylorGreenProblem | None = None, dt: float | None = None,
                     t_final: float | None = None, step1_solver: str = "direct",
                     gmres: GmresSettings | None = None, check_identities: bool = False) -> BenchmarkReport:
    """Error table over a sequence of meshes; Δt = 1/m unless ``dt`` is given."""
    m_list = list(m_list)
    if m_list != sorted(m_list):
        raise ValueError("m_list must be ascending")
    problem = problem or TaylorGreenProblem()
    report = BenchmarkReport("taylor-green", meta=dict(element=element_family(element), scheme=scheme_name(scheme),
                                                     gamma=gamma, beta=beta))
    for m in m_list:
        step = dt if dt is not None else 1.0 / m
        space = MixedSpace(generate_unit_square(m), element)
        cfg = taylor_green_config(problem, element, scheme, gamma, beta, step, t_final, step1_solver=step1_solver,
                                  gmres=_gmres(gmres), record_history=True, check_identities=check_identities)
        t0 = time.perf_counter()
        res = Stepper(space, cfg).run()
        row = dict(m=m, h=1.0 / m, dt=step, steps=len(res.diagnostics), failed=res.failed)
        if res.failed:
            row.update({c: math.nan for c in ERROR_COLUMNS})
        else:
            e = error_norms(space, res.velocity_history, problem.velocity, step, divergence=problem.divergence,
                            pressure_history=res.pressure_history,
                            pressure=problem.pressure)
            row.update(e.as_dict())
        row["identity_residual"] = max((d.identity_residual for d in res.diagnostics
                                        if not math.isnan(d.identity_residual)), default=math.nan)
        row["wall_time"] = time.perf_counter() - t0
        report.rows.append(row)
        report.series[f"m={m}"] = [dict(d.row(), exact_kinetic_energy=problem.kinetic_energy(d.t))
                                   for d in res.diagnostics]
    ms = [r["m"] for r in report.rows]
    for col in ERROR_COLUMNS:
        for r, rate in zip(report.rows, convergence_rates(ms, [r[col] for r in report.rows])):
            r[f"{col}_rate"] = rate
    return report


# -- timing -------------------------------------------------------------------

def run_timing(element: str, grid: Iterable[tuple[float, float]], m: int = 32, dt: float | None = None,
               t_final: float = 1.0, problem: TaylorGreenProblem | None = None,
               gmres: GmresSettings | None = None, schemes: Sequence[str] = ("coupled", "modular")) -> BenchmarkReport:
    """Coupled vs modular cost on the Taylor-Green problem for each (β, γ).

    Step 1 and the coupled system use GMRES; modular Step 2 uses a cached
    sparse Cholesky-type factorization.  A failed GMRES solve marks the
    cell 'F'.  ``percent_increase`` is 100 (t_coupled − t_modular) / t_modular.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid is empty")
    problem = problem or TaylorGreenProblem()
    dt = dt if dt is not None else 1.0 / m
    space = MixedSpace(generate_unit_square(m), element)
    ops = assemble_operators(space)
    report = BenchmarkReport("timing", meta=dict(element=element_family(element), m=m, dt=dt, t_final=t_final))
    for beta, gamma in grid:
        row = dict(beta=beta, gamma=gamma)
        for scheme in schemes:
            cfg = taylor_green_config(problem, element, scheme, gamma, beta, dt, t_final,
                                      step1_solver="gmres", gmres=_gmres(gmres))
            t0 = time.perf_counter()
            res = Stepper(space, cfg, ops).run()
            wall = time.perf_counter() - t0
            key = scheme_name(scheme)
            row[f"{key}_time"] = wall
            row[f"{key}_iterations"] = res.total_iterations + (res.failure.report.iterations if res.failed else 0)
            row[f"{key}_failed"] = res.failed
            row[f"{key}_steps"] = len(res.diagnostics)
            row[f"{key}_flag"] = "F" if res.failed else ""
        if "coupled" in [scheme_name(s) for s in schemes] and "modular" in [scheme_name(s) for s in schemes]:
            tc, tm = row["coupled_time"], row["modular_time"]
            row["percent_increase"] = math.nan if row["coupled_failed"] else 100.0 * (tc - tm) / tm
        report.rows.append(row)
    return report


def read_grid(path: str | Path) -> list[tuple[float, float]]:
    """β,γ pairs from a CSV file (an optional header row is skipped)."""
    out = []
    for line in Path(path).read_text().splitlines():
        parts = [s.strip() for s in line.split(",") if s.strip()]
        if not parts or line.lstrip().startswith("#"):
            continue
        try:
            beta, gamma = float(parts[0]), float(parts[1])
        except ValueError:
            continue
        out.append((beta, gamma))
    return out


# -- step channel ---------------------------------------------------------------

def relative_l2_difference(space: MixedSpace, a: np.ndarray, b: np.ndarray) -> float:
    """‖|a| − |b|‖ / ‖|b|‖ for two velocity fields (speed comparison)."""
    ev = Evaluator(space)
    fa, fb = ev.velocity(a), ev.velocity(b)
    sa = np.hypot(fa.u1, fa.u2)
    sb = np.hypot(fb.u1, fb.u2)
    return math.sqrt(ev.l2_sq(sa - sb) / ev.l2_sq(sb))


def _run_schemes(space: MixedSpace, configs: dict[str, RunConfig], report: BenchmarkReport,
                 per_step: Callable | None = None, out: Path | None = None, export_name: str = "") -> None:
    ops = assemble_operators(space)
    for label, cfg in configs.items():
        stepper = Stepper(space, cfg, ops)
        series: list[dict] = []

        def callback(state, diag, _series=series, _stepper=stepper):
            row = dict(t=diag.t, div_norm=diag.div_norm, kinetic_energy=diag.kinetic_energy,
                       step1_iterations=diag.step1.iterations if diag.step1 else 0)
            if per_step is not None:
                row.update(per_step(_stepper, state))
            _series.append(row)

        t0 = time.perf_counter()
        res = stepper.run(callback=callback)
        report.series[label] = series
        report.states[label] = res.state
        row = dict(scheme=label, steps=len(res.diagnostics), failed=res.failed,
                   wall_time=time.perf_counter() - t0,
                   final_div_norm=series[-1]["div_norm"] if series else math.nan)
        report.rows.append(row)
        if out is not None and not res.failed:
            export_fields(out / f"{export_name}_{label}.vtk", space, res.state.u, res.state.p,
                          title=f"{export_name} {label} t={res.state.t:g}")
        log.info("%s %s: %d steps in %.1fs", export_name, label, len(res.diagnostics), row["wall_time"])


def _scheme_configs(schemes, base: RunConfig, gamma: float, beta: float) -> dict[str, RunConfig]:
    out = {}
    for s in schemes:
        name = scheme_name(s)
        if name == "none":
            out[name] = replace(base, scheme="none", beta=0.0, gamma=0.0)
        elif name == "lagged":
            out[name] = replace(base, scheme="lagged", beta=0.0, gamma=gamma)
        else:
            out[name] = replace(base, scheme=name, beta=beta, gamma=gamma)
    return out


def run_step_flow(schemes: Sequence[str] = ("none", "coupled", "modular"), gamma: float = 1.0, beta: float = 0.0,
                  t_final: float = 40.0, dt: float = 0.01, mesh: Mesh | None = None, nu: float = 1.0 / 600.0,
                  step1_solver: str = "direct", gmres: GmresSettings | None = None,
                  out: str | Path | None = None) -> BenchmarkReport:
    """Channel flow over a step; records ‖∇·u‖(t) per scheme and exports final fields."""
    mesh = mesh or packaged_mesh("step_coarse")
    space = MixedSpace(mesh, "th")
    base = RunConfig(scheme="none", nu=nu, dt=dt, t_final=t_final, family="th", boundary=step_boundary(),
                     step1_solver=step1_solver, gmres=_gmres(gmres))
    report = BenchmarkReport("step", meta=dict(gamma=gamma, beta=beta, t_final=t_final, dt=dt,
                                               dofs=space.n_velocity + space.n_pressure))
    out_dir = Path(out) if out is not None else None
    _run_schemes(space, _scheme_configs(schemes, base, gamma, beta), report, out=out_dir, export_name="step")
    report.meta["space"] = space
    return report


def run_cylinder(schemes: Sequence[str] = ("none", "modular"), gamma: float = 0.005, beta: float = 0.0,
                 t_final: float = 8.0, dt: float = 0.001, mesh: Mesh | None = None, nu: float = 0.001,
                 step1_solver: str = "direct", gmres: GmresSettings | None = None,
                 out: str | Path | None = None) -> BenchmarkReport:
    """Flow past a cylinder: drag, lift, pressure drop and ‖∇·u‖ over time."""
    mesh = mesh or packaged_mesh("cylinder_coarse")
    space = MixedSpace(mesh, "th")
    base = RunConfig(scheme="none", nu=nu, dt=dt, t_final=t_final, family="th", boundary=cylinder_boundary(),
                     step1_solver=step1_solver, gmres=_gmres(gmres))

    def forces(stepper, state):
        cd, cl = drag_lift(stepper.ops, state, nu, dt)
        return dict(c_d=cd, c_l=cl, delta_p=pressure_drop(space, state.p))

    report = BenchmarkReport("cylinder", meta=dict(gamma=gamma, beta=beta, t_final=t_final, dt=dt,
                                                   dofs=space.n_velocity + space.n_pressure))
    out_dir = Path(out) if out is not None else None
    _run_schemes(space, _scheme_configs(schemes, base, gamma, beta), report, per_step=forces, out=out_dir,
                 export_name="cylinder")
    for row in report.rows:
        s = report.series[row["scheme"]]
        if not s:
            continue
        cd = np.array([r["c_d"] for r in s])
        cl = np.array([r["c_l"] for r in s])
        i, j = int(np.argmax(cd)), int(np.argmax(cl))
        row.update(c_d_max=cd[i], t_c_d_max=s[i]["t"], c_l_max=cl[j], t_c_l_max=s[j]["t"],
                   delta_p_final=s[-1]["delta_p"], div_norm_final=s[-1]["div_norm"])
    report.meta["space"] = space
    return report
