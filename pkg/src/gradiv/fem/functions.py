"""Finite element functions: interpolation, point evaluation, discrete norms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .quadrature import QuadratureRule, error_rule
from .space import MINI, MixedSpace, p1_basis, velocity_basis


class PointOutsideMeshError(ValueError):
    pass


def interpolate_velocity(space: MixedSpace, func: Callable, t: float = 0.0) -> np.ndarray:
    """Nodal interpolant of func(x, y, t) -> (u1, u2); MINI bubble coefficients are zero."""
    xy = space.dof_coords
    u1, u2 = func(xy[:, 0], xy[:, 1], t)
    u1 = np.array(np.broadcast_to(u1, xy[:, 0].shape), dtype=float)
    u2 = np.array(np.broadcast_to(u2, xy[:, 0].shape), dtype=float)
    if space.family == MINI:
        u1[space.mesh.n_nodes:] = 0.0
        u2[space.mesh.n_nodes:] = 0.0
    return np.concatenate([u1, u2])


def interpolate_pressure(space: MixedSpace, func: Callable, t: float = 0.0) -> np.ndarray:
    xy = space.mesh.nodes
    return np.array(np.broadcast_to(func(xy[:, 0], xy[:, 1], t), (len(xy),)), dtype=float)


def interpolate(space: MixedSpace, func: Callable, t: float = 0.0, kind: str = "velocity") -> np.ndarray:
    if kind == "velocity":
        return interpolate_velocity(space, func, t)
    if kind == "pressure":
        return interpolate_pressure(space, func, t)
    raise ValueError(f"kind must be 'velocity' or 'pressure', not {kind!r}")


def locate(space: MixedSpace, x: float, y: float, tol: float = 1e-10) -> tuple[int, np.ndarray]:
    """Triangle containing (x, y) and the point's barycentric coordinates there."""
    mesh = space.mesh
    p = mesh.nodes[mesh.triangles]
    J, det, _ = space.jacobians
    r = np.array([x, y]) - p[:, 0]
    # solve J ξ = r per triangle
    xi = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
    eta = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    inside = np.flatnonzero(bary.min(axis=1) >= -tol)
    if len(inside) == 0:
        raise PointOutsideMeshError(f"point ({x}, {y}) is outside the mesh")
    k = inside[np.argmax(bary[inside].min(axis=1))]
    return int(k), bary[k]


def evaluate_at_point(space: MixedSpace, coeffs: np.ndarray, x: float, y: float):
    """Value of a velocity (length n_velocity) or pressure (length n_pressure) field."""
    k, bary = locate(space, x, y)
    if len(coeffs) == space.n_pressure and len(coeffs) != space.n_velocity:
        return float(bary @ coeffs[space.mesh.triangles[k]])
    if len(coeffs) == space.n_scalar:
        phi, _ = velocity_basis(space.family, bary[None, :])
        return float(phi[0] @ coeffs[space.cell_dofs[k]])
    if len(coeffs) != space.n_velocity:
        raise ValueError(f"coefficient vector of length {len(coeffs)} matches no dof map of {space!r}")
    phi, _ = velocity_basis(space.family, bary[None, :])
    u1, u2 = space.split(coeffs)
    dofs = space.cell_dofs[k]
    return np.array([phi[0] @ u1[dofs], phi[0] @ u2[dofs]])


@dataclass
class QuadratureFields:
    """Velocity, divergence and component derivatives at quadrature points."""

    u1: np.ndarray
    u2: np.ndarray
    u1_x: np.ndarray
    u1_y: np.ndarray
    u2_x: np.ndarray
    u2_y: np.ndarray

    @property
    def div(self) -> np.ndarray:
        return self.u1_x + self.u2_y


class Evaluator:
    """Pointwise evaluation of FE functions at the points of a quadrature rule."""

    def __init__(self, space: MixedSpace, rule: QuadratureRule | None = None):
        self.space = space
        self.rule = rule or error_rule()
        self.tab = space.tabulate(self.rule)

    @property
    def points(self) -> np.ndarray:
        return self.tab.xq

    @property
    def wdet(self) -> np.ndarray:
        return self.tab.wdet

    def velocity(self, u: np.ndarray) -> QuadratureFields:
        cd = self.space.cell_dofs
        phi, dphi = self.tab.phi, self.tab.dphi
        out = []
        for comp in self.space.split(u):
            c = comp[cd]  # (nt, nloc)
            out.append((c @ phi.T,
                        np.einsum("tk,tqk->tq", c, dphi[..., 0]),
                        np.einsum("tk,tqk->tq", c, dphi[..., 1])))
        (a, ax, ay), (b, bx, by) = out
        return QuadratureFields(a, b, ax, ay, bx, by)

    def pressure(self, p: np.ndarray) -> np.ndarray:
        return p[self.space.mesh.triangles] @ self.tab.psi.T

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.tab.wdet * values))

    def l2_sq(self, values: np.ndarray) -> float:
        return self.integrate(values * values)


def quadrature_norms(space: MixedSpace, u: np.ndarray, rule: QuadratureRule | None = None) -> dict[str, float]:
    """Squared L2 norms of u, ∇·u, ∂x u1, ∂y u2 and ∇u by direct quadrature."""
    ev = Evaluator(space, rule)
    f = ev.velocity(u)
    return {
        "u": ev.l2_sq(f.u1) + ev.l2_sq(f.u2),
        "div": ev.l2_sq(f.div),
        "u1_x": ev.l2_sq(f.u1_x),
        "u2_y": ev.l2_sq(f.u2_y),
        "grad": ev.l2_sq(f.u1_x) + ev.l2_sq(f.u1_y) + ev.l2_sq(f.u2_x) + ev.l2_sq(f.u2_y),
    }


def discrete_time_norms(values: Sequence[float], dt: float) -> tuple[float, float]:
    """(|||v|||_{∞,0}, |||v|||_{2,0}) from per-level L2 norms ‖v^n‖."""
    v = np.asarray(values, dtype=float)
    return float(v.max()), float(np.sqrt(dt * np.sum(v * v)))


@dataclass
class ErrorNorms:
    velocity_inf: float
    velocity_l2: float
    div_inf: float
    div_l2: float
    pressure_inf: float = float("nan")
    pressure_l2: float = float("nan")

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def error_norms(space: MixedSpace, history: Sequence[tuple[float, np.ndarray]], velocity: Callable, dt: float,
                divergence: Callable | None = None,
                pressure_history: Sequence[tuple[float, np.ndarray]] | None = None,
                pressure: Callable | None = None,
                rule: QuadratureRule | None = None) -> ErrorNorms:
    """Discrete-in-time norms of u_h - u, ∇·(u_h - u) and p_h - p.

    ``history`` holds (t^n, u_h^n) pairs.  ``divergence`` defaults to zero
    (solenoidal exact field).  Pressures are compared after removing the mean.
    """
    if not history:
        raise ValueError("history is empty")
    ev = Evaluator(space, rule)
    x, y = ev.points[..., 0], ev.points[..., 1]
    area = ev.integrate(np.ones_like(x))
    eu, ed = [], []
    for t, u in history:
        f = ev.velocity(u)
        v1, v2 = velocity(x, y, t)
        d = divergence(x, y, t) if divergence is not None else 0.0
        eu.append(np.sqrt(ev.l2_sq(f.u1 - v1) + ev.l2_sq(f.u2 - v2)))
        ed.append(np.sqrt(ev.l2_sq(f.div - d)))
    out = ErrorNorms(*discrete_time_norms(eu, dt), *discrete_time_norms(ed, dt))
    if pressure_history:
        ep = []
        for t, p in pressure_history:
            ph = ev.pressure(p)
            pe = np.broadcast_to(pressure(x, y, t), x.shape)
            diff = ph - pe
            diff = diff - ev.integrate(diff) / area
            ep.append(np.sqrt(ev.l2_sq(diff)))
        out.pressure_inf, out.pressure_l2 = discrete_time_norms(ep, dt)
    return out
