"""Drag, lift and pressure drop for the cylinder benchmark."""

from __future__ import annotations

import numpy as np

from ..fem.assembly import Operators
from ..fem.functions import evaluate_at_point
from ..mesh import CYLINDER
from ..stepper import FlowState
from .problems import CYLINDER_CENTER, CYLINDER_DIAMETER, MEAN_INFLOW


def force_test_vectors(space, tag: int = CYLINDER) -> tuple[np.ndarray, np.ndarray]:
    """Discrete test functions equal to e_x (resp. e_y) on the tagged boundary, zero elsewhere."""
    dofs = space.dirichlet.get(tag)
    if dofs is None or len(dofs) == 0:
        raise ValueError(f"mesh has no boundary tagged {tag}")
    vx = np.zeros(space.n_velocity)
    vy = np.zeros(space.n_velocity)
    vx[dofs] = 1.0
    vy[dofs + space.n_scalar] = 1.0
    return vx, vy


def momentum_residual(operators: Operators, nu: float, dt: float, u_old: np.ndarray, u_hat: np.ndarray,
                      p: np.ndarray, f_vector: np.ndarray | None = None) -> np.ndarray:
    """Residual of the Step-1 momentum equation on every velocity dof (zero on free dofs)."""
    A = operators.mass / dt + nu * operators.stiffness + operators.convection(u_old)
    r = A @ u_hat - operators.divergence.T @ p - operators.mass @ u_old / dt
    if f_vector is not None:
        r = r - f_vector
    return r


def drag_lift(operators: Operators, state: FlowState, nu: float, dt: float, tag: int = CYLINDER,
              mean_velocity: float = MEAN_INFLOW, diameter: float = CYLINDER_DIAMETER) -> tuple[float, float]:
    """Drag and lift coefficients from the volume formulation of the boundary force.

    Uses the Step-1 variables (û^{n+1}, p^{n+1}, u^n) which satisfy the
    momentum equation on all interior test functions.
    """
    if state.u_hat is None or state.u_old is None:
        return 0.0, 0.0
    vx, vy = force_test_vectors(operators.space, tag)
    r = momentum_residual(operators, nu, dt, state.u_old, state.u_hat, state.p)
    scale = 2.0 / (mean_velocity ** 2 * diameter)
    return float(-scale * (vx @ r)), float(-scale * (vy @ r))


def pressure_drop(space, p: np.ndarray, front=None, back=None) -> float:
    """p(front) − p(back); defaults to the points just ahead of and behind the cylinder."""
    cx, cy = CYLINDER_CENTER
    r = 0.5 * CYLINDER_DIAMETER
    front = front or (cx - r, cy)
    back = back or (cx + r, cy)
    return float(evaluate_at_point(space, p, *front) - evaluate_at_point(space, p, *back))
