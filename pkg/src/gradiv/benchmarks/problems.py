"""Problem data for the benchmark flows."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..mesh import CYLINDER, INLET, OUTLET, WALL, Mesh, load_mesh

CYLINDER_CENTER = (0.2, 0.2)
CYLINDER_DIAMETER = 0.1
CHANNEL_HEIGHT = 0.41
MEAN_INFLOW = 1.0   # mean of the peak inflow profile 6y(H-y)/H^2


def packaged_mesh_path(name: str) -> Path:
    """Path of a committed mesh: ``step_coarse``, ``step_fine``, ``cylinder_coarse``, ``cylinder_fine``."""
    path = Path(str(resources.files("gradiv") / "data" / f"{name}.mesh"))
    if not path.exists():
        raise FileNotFoundError(f"no packaged mesh named {name!r}")
    return path


def packaged_mesh(name: str) -> Mesh:
    return load_mesh(packaged_mesh_path(name))


def _zero(x, y, t):
    return 0.0, 0.0


@dataclass(frozen=True)
class TaylorGreenProblem:
    """Decaying Taylor-Green vortex on the unit square.

    u1 = -cos(ωπx) sin(ωπy) e^{-2ω²π²t/τ},  u2 = sin(ωπx) cos(ωπy) e^{-2ω²π²t/τ},
    p  = -(cos(2ωπx) + cos(2ωπy)) e^{-4ω²π²t/τ} / 4.

    With τ = Re and ν = 1/Re this solves the Navier-Stokes equations with f = 0.
    """

    omega: float = 1.0
    tau: float = 100.0
    re: float = 100.0
    t_final: float = 1.0

    @property
    def nu(self) -> float:
        return 1.0 / self.re

    @property
    def _k(self) -> float:
        return self.omega * np.pi

    def _decay(self, t):
        return np.exp(-2.0 * self._k ** 2 * t / self.tau)

    def velocity(self, x, y, t):
        k, e = self._k, self._decay(t)
        return -np.cos(k * x) * np.sin(k * y) * e, np.sin(k * x) * np.cos(k * y) * e

    def pressure(self, x, y, t):
        k = self._k
        return -0.25 * (np.cos(2 * k * x) + np.cos(2 * k * y)) * self._decay(t) ** 2

    def divergence(self, x, y, t):
        return np.zeros(np.broadcast(x, y).shape)

    def velocity_gradient(self, x, y, t):
        """((∂x u1, ∂y u1), (∂x u2, ∂y u2))."""
        k, e = self._k, self._decay(t)
        sx, cx, sy, cy = np.sin(k * x), np.cos(k * x), np.sin(k * y), np.cos(k * y)
        return ((k * sx * sy * e, -k * cx * cy * e), (k * cx * cy * e, -k * sx * sy * e))

    def velocity_dt(self, x, y, t):
        rate = -2.0 * self._k ** 2 / self.tau
        u1, u2 = self.velocity(x, y, t)
        return rate * u1, rate * u2

    def velocity_laplacian(self, x, y, t):
        u1, u2 = self.velocity(x, y, t)
        c = -2.0 * self._k ** 2
        return c * u1, c * u2

    def pressure_gradient(self, x, y, t):
        k = self._k
        e = self._decay(t) ** 2
        return 0.5 * k * np.sin(2 * k * x) * e, 0.5 * k * np.sin(2 * k * y) * e

    def momentum_residual(self, x, y, t):
        """Strong residual u_t + u·∇u − νΔu + ∇p of the exact fields (f = 0)."""
        u1, u2 = self.velocity(x, y, t)
        (a, b), (c, d) = self.velocity_gradient(x, y, t)
        t1, t2 = self.velocity_dt(x, y, t)
        l1, l2 = self.velocity_laplacian(x, y, t)
        p1, p2 = self.pressure_gradient(x, y, t)
        nu = self.nu
        return (t1 + u1 * a + u2 * b - nu * l1 + p1,
                t2 + u1 * c + u2 * d - nu * l2 + p2)

    def kinetic_energy(self, t: float) -> float:
        """½‖u(t)‖² over the unit square."""
        k = self._k
        # ∫∫ cos²(kx) sin²(ky) over [0,1]²
        cx = 0.5 + np.sin(2 * k) / (4 * k) if k else 1.0
        sy = 0.5 - np.sin(2 * k) / (4 * k) if k else 0.0
        return float(0.5 * 2.0 * cx * sy * self._decay(t) ** 2)

    def boundary(self):
        return self.velocity


def step_profile(x, y, t):
    """Inflow/outflow profile of the step channel, y(10 − y)/25."""
    return y * (10.0 - y) / 25.0, np.zeros_like(y)


def step_boundary() -> dict:
    return {WALL: _zero, INLET: step_profile, OUTLET: step_profile}


def cylinder_profile(x, y, t):
    """Time-dependent parabolic inflow/outflow 6y(H − y)/H² sin(πt/8)."""
    h = CHANNEL_HEIGHT
    return 6.0 * y * (h - y) / h ** 2 * np.sin(np.pi * t / 8.0), np.zeros_like(y)


def cylinder_boundary() -> dict:
    return {WALL: _zero, CYLINDER: _zero, INLET: cylinder_profile, OUTLET: cylinder_profile}
