"""Time stepping: linearly implicit BDF1 with optional grad-div stabilization.

Four schemes share Step 1 (the velocity-pressure solve):

``none``     u^{n+1} = û^{n+1}
``coupled``  grad-div terms folded into the velocity-pressure system
``modular``  Step 2: (M + (β+γΔt)G) u^{n+1} = M û^{n+1} + β G u^n
``lagged``   Step 2: (M + γΔt D) u^{n+1} = M û^{n+1} − γΔt X u^n,
             with D block diagonal, i.e. one SPD solve per component.

Every step records energy diagnostics and, optionally, the residual of the
Step-2 energy-splitting identity.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem.assembly import Operators, assemble_operators
from .fem.functions import interpolate_velocity
from .fem.space import MixedSpace
from .linsolve import Factorization, GmresSettings, SaddleTemplate, SolverReport, build_saddle_system, factor_spd
from .mesh import Mesh

log = logging.getLogger(__name__)

SCHEMES = ("none", "coupled", "modular", "lagged")
_SCHEME_ALIASES = {"modular-lagged": "lagged", "non-stabilized": "none", "standard": "coupled",
                   "sparse": "lagged", "modular+sparse": "lagged"}


def scheme_name(name: str) -> str:
    name = _SCHEME_ALIASES.get(name.lower(), name.lower())
    if name not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {SCHEMES}")
    return name


class SolverFailure(RuntimeError):
    """Step 1 (or the coupled solve) did not converge."""

    def __init__(self, step: int, report: SolverReport):
        self.step = step
        self.report = report
        super().__init__(f"solver failed at step {step}: {report.iterations} iterations, "
                         f"relative residual {report.residual:.3e}")


@dataclass
class GradientFlowOptions:
    tau: float | None = None      # pseudo time step; None picks 1.8 / (γ λ_max)
    tol: float = 1e-8
    max_sweeps: int = 100_000


@dataclass
class GradientFlowReport:
    sweeps: int
    converged: bool
    increment: float
    tau: float
    contraction: float


@dataclass
class RunConfig:
    scheme: str = "modular"
    nu: float = 1.0
    dt: float = 0.01
    t_final: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    family: str = "th"
    boundary: dict[int, Callable] | Callable | None = None
    force: Callable | None = None
    initial_velocity: Callable | np.ndarray | None = None
    step1_solver: str = "gmres"
    step2_solver: str = "direct"
    gradient_flow: GradientFlowOptions = field(default_factory=GradientFlowOptions)
    gmres: GmresSettings = field(default_factory=GmresSettings)
    warm_start: bool = True
    convection: bool = True
    check_identities: bool = False
    record_history: bool = False

    def __post_init__(self):
        self.scheme = scheme_name(self.scheme)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.scheme == "lagged" and self.beta != 0:
            raise ValueError("the lagged scheme is defined for beta = 0 only")
        if self.step1_solver not in ("gmres", "direct"):
            raise ValueError(f"step1_solver must be 'gmres' or 'direct', not {self.step1_solver!r}")
        if self.step2_solver not in ("direct", "gradient-flow"):
            raise ValueError(f"step2_solver must be 'direct' or 'gradient-flow', not {self.step2_solver!r}")
        if self.step2_solver == "gradient-flow" and self.beta != 0:
            raise ValueError("gradient-flow Step 2 requires beta = 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class FlowState:
    u: np.ndarray
    p: np.ndarray
    n: int = 0
    t: float = 0.0
    u_hat: np.ndarray | None = None   # Step-1 velocity of the last step
    u_old: np.ndarray | None = None   # velocity at the previous level, needed by force functionals


@dataclass
class StepDiagnostics:
    step: int
    t: float
    kinetic_energy: float
    energy: float                  # scheme-specific stability functional
    dissipation: dict[str, float]
    div_norm: float
    identity_residual: float
    step1: SolverReport | None
    step1_time: float
    step2_time: float
    step2_sweeps: int = 0

    def row(self) -> dict[str, float]:
        out = dict(step=self.step, t=self.t, kinetic_energy=self.kinetic_energy, energy=self.energy,
                   div_norm=self.div_norm, identity_residual=self.identity_residual)
        out.update({f"diss_{k}": v for k, v in self.dissipation.items()})
        out.update(step1_iterations=self.step1.iterations if self.step1 else 0,
                   step1_residual=self.step1.residual if self.step1 else 0.0,
                   step1_time=self.step1_time, step2_time=self.step2_time, step2_sweeps=self.step2_sweeps)
        return out


@dataclass
class RunResult:
    config: RunConfig
    diagnostics: list[StepDiagnostics]
    state: FlowState
    failed: bool = False
    failure: SolverFailure | None = None
    velocity_history: list[tuple[float, np.ndarray]] = field(default_factory=list)
    pressure_history: list[tuple[float, np.ndarray]] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def total_iterations(self) -> int:
        return sum(d.step1.iterations for d in self.diagnostics if d.step1)


class Stepper:
    """Owns the operators, cached factorizations and the schemes' step kernels."""

    def __init__(self, space: MixedSpace, config: RunConfig, operators: Operators | None = None):
        self.space = space
        self.config = config
        self.ops = operators or assemble_operators(space)
        self.template = SaddleTemplate(space, self.ops)
        self._factors: dict[tuple, Factorization] = {}
        self._lambda_max: float | None = None
        blk = self.ops.blocks
        self._mass_s, self._dxx, self._dyy, self._dxy = blk.mass, blk.dxx, blk.dyy, blk.dxy
        self._free_s = np.setdiff1d(np.arange(space.n_scalar), space.boundary_scalar_dofs)
        self._fixed_s = space.boundary_scalar_dofs

    # -- data --------------------------------------------------------------

    def boundary_values(self, t: float) -> np.ndarray:
        """Full velocity vector holding the Dirichlet data at time t (zero elsewhere)."""
        g = np.zeros(self.space.n_velocity)
        bc = self.config.boundary
        if bc is None:
            return g
        ns = self.space.n_scalar
        items = bc.items() if isinstance(bc, dict) else [(None, bc)]
        for tag, func in items:
            dofs = self.space.boundary_scalar_dofs if tag is None else self.space.dirichlet.get(tag)
            if dofs is None or len(dofs) == 0:
                continue
            xy = self.space.dof_coords[dofs]
            v1, v2 = func(xy[:, 0], xy[:, 1], t)
            g[dofs] = np.broadcast_to(v1, len(dofs))
            g[dofs + ns] = np.broadcast_to(v2, len(dofs))
        return g

    def initial_state(self) -> FlowState:
        init = self.config.initial_velocity
        if init is None:
            u = np.zeros(self.space.n_velocity)
        elif callable(init):
            u = interpolate_velocity(self.space, init, 0.0)
        else:
            u = np.array(init, dtype=float)
            if u.shape != (self.space.n_velocity,):
                raise ValueError(f"initial velocity has shape {u.shape}, expected ({self.space.n_velocity},)")
        fixed = self.space.dirichlet_velocity_dofs
        u[fixed] = self.boundary_values(0.0)[fixed]
        return FlowState(u=u, p=np.zeros(self.space.n_pressure), n=0, t=0.0, u_hat=u.copy())

    def load(self, t: float) -> np.ndarray | None:
        if self.config.force is None:
            return None
        return self.ops.assembler.source(self.config.force, t)

    # -- Step 1 and the coupled solve --------------------------------------

    def _saddle_solve(self, state: FlowState, coupled: tuple[float, float] | None):
        cfg = self.config
        t_new = state.t + cfg.dt
        system = build_saddle_system(self.space, self.ops, cfg.nu, cfg.dt, state.u,
                                     state.u if cfg.convection else None,
                                     self.boundary_values(t_new), self.load(t_new),
                                     coupled_graddiv=coupled, template=self.template)
        x0 = None
        if cfg.step1_solver == "gmres" and cfg.warm_start:
            x0 = system.pack(state.u, state.p)
        return system.solve(cfg.step1_solver, cfg.gmres, x0=x0)

    def step1(self, state: FlowState):
        """Velocity-pressure solve without grad-div terms: (û^{n+1}, p^{n+1}, report)."""
        return self._saddle_solve(state, None)

    def coupled_step(self, state: FlowState):
        """One solve with the grad-div terms inside the momentum block."""
        cfg = self.config
        return self._saddle_solve(state, (cfg.beta, cfg.gamma))

    # -- Step 2 ------------------------------------------------------------

    def _factor(self, key: tuple, build: Callable[[], sp.spmatrix]) -> Factorization:
        fac = self._factors.get(key)
        if fac is None:
            fac = self._factors[key] = factor_spd(build(), check_symmetry=False)
        return fac

    def _constrained_solve(self, key, matrix_fn, rhs, fixed_values, free, fixed):
        """Solve A u = rhs on the free dofs with u[fixed] = fixed_values."""
        def build():
            A = matrix_fn().tocsr()
            return A[free][:, free]
        fac = self._factor(key, build)
        A = self._full_matrix(key, matrix_fn)
        u = np.empty(len(rhs))
        u[fixed] = fixed_values
        r = rhs[free]
        if len(fixed):
            r = r - A[free][:, fixed] @ fixed_values
        u[free] = fac.solve(r)
        return u

    def _full_matrix(self, key, matrix_fn):
        cache = self.__dict__.setdefault("_full", {})
        if key not in cache:
            cache[key] = matrix_fn().tocsr()
        return cache[key]

    def modular_matrix(self, dt: float | None = None) -> sp.csr_matrix:
        cfg = self.config
        dt = cfg.dt if dt is None else dt
        return (self.ops.mass + self.ops.graddiv * (cfg.beta + cfg.gamma * dt)).tocsr()

    def step2_modular(self, state: FlowState, u_hat: np.ndarray) -> np.ndarray:
        cfg = self.config
        if cfg.beta == 0.0 and cfg.gamma == 0.0:
            return u_hat.copy()
        rhs = self.ops.mass @ u_hat
        if cfg.beta:
            rhs = rhs + cfg.beta * (self.ops.graddiv @ state.u)
        g = self.boundary_values(state.t + cfg.dt)
        fixed, free = self.space.dirichlet_velocity_dofs, self.space.free_velocity_dofs
        key = ("modular", cfg.dt, cfg.beta, cfg.gamma)
        return self._constrained_solve(key, self.modular_matrix, rhs, g[fixed], free, fixed)

    def step2_lagged(self, state: FlowState, u_hat: np.ndarray) -> np.ndarray:
        """Component-decoupled Step 2: two scalar SPD solves."""
        cfg = self.config
        if cfg.gamma == 0.0:
            return u_hat.copy()
        c = cfg.gamma * cfg.dt
        ns = self.space.n_scalar
        uh1, uh2 = u_hat[:ns], u_hat[ns:]
        un1, un2 = state.u[:ns], state.u[ns:]
        rhs1 = self._mass_s @ uh1 - c * (self._dxy @ un2)
        rhs2 = self._mass_s @ uh2 - c * (self._dxy.T @ un1)
        g = self.boundary_values(state.t + cfg.dt)
        free, fixed = self._free_s, self._fixed_s
        u1 = self._constrained_solve(("lagged-1", cfg.dt, cfg.gamma), lambda: self._mass_s + c * self._dxx,
                                     rhs1, g[:ns][fixed], free, fixed)
        u2 = self._constrained_solve(("lagged-2", cfg.dt, cfg.gamma), lambda: self._mass_s + c * self._dyy,
                                     rhs2, g[ns:][fixed], free, fixed)
        return np.concatenate([u1, u2])

    def lambda_max(self) -> float:
        """Largest eigenvalue of G x = λ M x on the free velocity dofs."""
        if self._lambda_max is None:
            free = self.space.free_velocity_dofs
            G = self.ops.graddiv.tocsr()[free][:, free]
            mfac = self._factor(("mass",), lambda: self.ops.mass.tocsr()[free][:, free])
            op = spla.LinearOperator(G.shape, matvec=lambda x: mfac.solve(G @ x), dtype=float)
            rng = np.random.default_rng(0)
            vals = spla.eigs(op, k=1, which="LR", tol=1e-6, v0=rng.standard_normal(G.shape[0]),
                             return_eigenvectors=False)
            self._lambda_max = float(np.max(vals.real))
        return self._lambda_max

    def step2_gradient_flow(self, state: FlowState, u_hat: np.ndarray):
        """Pseudo-time iteration (1/τ + 1/Δt) M u_{l+1} = M u_l/τ + M û/Δt − γ G u_l.

        Stops when ρ/(1−ρ)·‖u_{l+1} − u_l‖_M ≤ tol·‖u_{l+1}‖_M, ρ being the
        contraction factor of the sweep, which bounds the distance to the
        fixed point by tol.
        """
        cfg = self.config
        opts = cfg.gradient_flow
        gamma, dt = cfg.gamma, cfg.dt
        M, G = self.ops.mass, self.ops.graddiv
        free, fixed = self.space.free_velocity_dofs, self.space.dirichlet_velocity_dofs
        g = self.boundary_values(state.t + dt)[fixed]
        if gamma == 0.0:
            u = u_hat.copy()
            u[fixed] = g
            lam = 0.0
        else:
            lam = self.lambda_max()
        tau = opts.tau if opts.tau is not None else (1.8 / (gamma * lam) if gamma > 0 else dt)
        inv_tau, inv_dt = 1.0 / tau, 1.0 / dt
        c = inv_tau + inv_dt
        rho = max(inv_tau, abs(inv_tau - gamma * lam)) / c
        factor = rho / (1.0 - rho) if rho < 1.0 else 1.0
        mfac = self._factor(("mass",), lambda: M.tocsr()[free][:, free])
        M_fd = self._full_matrix(("mass-full",), lambda: M)[free][:, fixed]
        Mhat = M @ u_hat / dt
        u = u_hat.copy()
        u[fixed] = g
        inc = math.inf
        first = None
        for sweep in range(1, opts.max_sweeps + 1):
            rhs = (M @ u) * inv_tau + Mhat - gamma * (G @ u)
            new = u.copy()
            new[free] = mfac.solve(rhs[free] / c - M_fd @ g)
            d = new - u
            inc = math.sqrt(max(d @ (M @ d), 0.0))
            size = math.sqrt(max(new @ (M @ new), 0.0))
            u = new
            if not np.isfinite(inc):
                return u, GradientFlowReport(sweep, False, inc, tau, rho)
            if factor * inc <= opts.tol * size:
                return u, GradientFlowReport(sweep, True, inc, tau, rho)
            first = inc if first is None else first
            if inc > 1e6 * max(first, 1e-300) and inc > size:
                return u, GradientFlowReport(sweep, False, inc, tau, rho)
        return u, GradientFlowReport(opts.max_sweeps, False, inc, tau, rho)

    # -- diagnostics -------------------------------------------------------

    def _norms(self, u: np.ndarray) -> dict[str, float]:
        ns = self.space.n_scalar
        u1, u2 = u[:ns], u[ns:]
        return dict(u=float(u @ (self.ops.mass @ u)), div=float(u @ (self.ops.graddiv @ u)),
                    u1_x=float(u1 @ (self._dxx @ u1)), u2_y=float(u2 @ (self._dyy @ u2)))

    def energy(self, u: np.ndarray) -> float:
        """Stability functional of the configured scheme."""
        cfg = self.config
        n = self._norms(u)
        if cfg.scheme == "lagged":
            return n["u"] + cfg.gamma * cfg.dt * (n["u1_x"] + n["u2_y"])
        return n["u"] + cfg.beta * n["div"]

    def step2_identity_residual(self, u_old: np.ndarray, u_hat: np.ndarray, u_new: np.ndarray) -> float:
        """Relative residual of the Step-2 energy identity.

        With non-homogeneous Dirichlet data the Step-2 equation is not tested
        on the boundary rows, so their reaction ``2 u_d · r_d`` is added; it
        vanishes for homogeneous data.
        """
        cfg = self.config
        M, G = self.ops.mass, self.ops.graddiv
        ns = self.space.n_scalar
        dt, beta, gamma = cfg.dt, cfg.beta, cfg.gamma
        fixed = self.space.dirichlet_velocity_dofs
        lhs = u_hat @ (M @ u_hat)
        d = u_hat - u_new
        rhs = u_new @ (M @ u_new) + d @ (M @ d)
        if cfg.scheme == "lagged":
            c = gamma * dt
            a1, a2 = u_new[:ns], u_new[ns:]
            o1, o2 = u_old[:ns], u_old[ns:]
            q = lambda x, A, y: float(x @ (A @ y))  # noqa: E731
            rhs += c * (q(a1, self._dxx, a1) - q(o1, self._dxx, o1) + q(a2, self._dyy, a2) - q(o2, self._dyy, o2))
            rhs += c * (q(a1, self._dxx, a1) + 2 * q(a1, self._dxy, o2) + q(o2, self._dyy, o2)
                        + q(a2, self._dyy, a2) + 2 * q(o1, self._dxy, a2) + q(o1, self._dxx, o1))
            r = M @ u_new + c * (self.ops.graddiv_diag @ u_new) - M @ u_hat + c * (self.ops.graddiv_cross @ u_old)
        else:
            dd = u_new - u_old
            rhs += 2 * gamma * dt * (u_new @ (G @ u_new))
            rhs += beta * (u_new @ (G @ u_new) - u_old @ (G @ u_old) + dd @ (G @ dd))
            r = M @ u_new + (beta + gamma * dt) * (G @ u_new) - M @ u_hat - beta * (G @ u_old)
        rhs -= 2.0 * float(u_new[fixed] @ r[fixed])
        scale = max(abs(lhs), abs(rhs), 1e-300)
        return float(abs(lhs - rhs) / scale)

    def diagnostics(self, step: int, t: float, u_old, u_hat, u_new, report, t1, t2, sweeps=0) -> StepDiagnostics:
        cfg = self.config
        M, G, K = self.ops.mass, self.ops.graddiv, self.ops.stiffness
        dt = cfg.dt
        div_sq = float(u_new @ (G @ u_new))
        a = u_hat - u_new
        b = u_hat - u_old
        c = u_new - u_old
        diss = {
            "split": 0.5 / dt * float(a @ (M @ a)),
            "numerical": 0.5 / dt * float(b @ (M @ b)),
            "dispersive": 0.5 * cfg.beta / dt * float(c @ (G @ c)),
            "graddiv": cfg.gamma * div_sq,
            "viscous": 0.5 * cfg.nu * float(u_hat @ (K @ u_hat)),
        }
        ke = 0.5 * float(u_new @ (M @ u_new)) + 0.5 * cfg.beta * div_sq
        ident = float("nan")
        if cfg.check_identities and cfg.scheme in ("modular", "lagged"):
            ident = self.step2_identity_residual(u_old, u_hat, u_new)
        return StepDiagnostics(step, t, ke, self.energy(u_new), diss, math.sqrt(max(div_sq, 0.0)), ident,
                               report, t1, t2, sweeps)

    # -- driver ------------------------------------------------------------

    def advance(self, state: FlowState) -> tuple[FlowState, StepDiagnostics]:
        """One time step of the configured scheme; raises SolverFailure."""
        cfg = self.config
        n1 = state.n + 1
        t_new = state.t + cfg.dt
        t0 = time.perf_counter()
        if cfg.scheme == "coupled":
            u_hat, p, report = self.coupled_step(state)
        else:
            u_hat, p, report = self.step1(state)
        t1 = time.perf_counter() - t0
        if not report.converged:
            raise SolverFailure(n1, report)
        t0 = time.perf_counter()
        sweeps = 0
        if cfg.scheme == "modular":
            if cfg.step2_solver == "gradient-flow":
                u_new, gf = self.step2_gradient_flow(state, u_hat)
                sweeps = gf.sweeps
                if not gf.converged:
                    log.warning("gradient-flow Step 2 did not converge at step %d (%d sweeps)", n1, gf.sweeps)
            else:
                u_new = self.step2_modular(state, u_hat)
        elif cfg.scheme == "lagged":
            u_new = self.step2_lagged(state, u_hat)
        else:
            u_new = u_hat
        t2 = time.perf_counter() - t0
        diag = self.diagnostics(n1, t_new, state.u, u_hat, u_new, report, t1, t2, sweeps)
        return FlowState(u=u_new, p=p, n=n1, t=t_new, u_hat=u_hat, u_old=state.u), diag

    def run(self, state: FlowState | None = None, n_steps: int | None = None,
            callback: Callable[[FlowState, StepDiagnostics], None] | None = None) -> RunResult:
        cfg = self.config
        state = state or self.initial_state()
        n_steps = cfg.n_steps if n_steps is None else n_steps
        result = RunResult(cfg, [], state)
        if cfg.record_history:
            result.velocity_history.append((state.t, state.u.copy()))
        start = time.perf_counter()
        for _ in range(n_steps):
            try:
                state, diag = self.advance(state)
            except SolverFailure as exc:
                log.info("%s", exc)
                result.failed, result.failure = True, exc
                break
            result.diagnostics.append(diag)
            if cfg.record_history:
                result.velocity_history.append((state.t, state.u.copy()))
                result.pressure_history.append((state.t, state.p.copy()))
            if callback is not None:
                callback(state, diag)
        result.state = state
        result.wall_time = time.perf_counter() - start
        return result


def run(config: RunConfig, mesh: Mesh | MixedSpace, operators: Operators | None = None, **kwargs) -> RunResult:
    """Build the space (if given a mesh) and integrate to ``config.t_final``."""
    space = mesh if isinstance(mesh, MixedSpace) else MixedSpace(mesh, config.family)
    return Stepper(space, config, operators).run(**kwargs)
