"""Inf-sup stable velocity/pressure pairs on triangles: MINI and Taylor-Hood.

Scalar velocity dofs are numbered node-major: mesh vertices first, then
edges (Taylor-Hood) or one bubble per triangle (MINI).  The vector velocity
is stored component-blocked, ``[u1 dofs, u2 dofs]``.  Pressure is P1 on
the vertices for both families.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..mesh import CYLINDER, GENERIC, INLET, OUTLET, WALL, Mesh
from .quadrature import QuadratureRule, assembly_rule

MINI = "mini"
TAYLOR_HOOD = "th"

_ALIASES = {
    "mini": MINI, "p1b": MINI, "p1b-p1": MINI, "p1bp1": MINI,
    "th": TAYLOR_HOOD, "taylor-hood": TAYLOR_HOOD, "taylorhood": TAYLOR_HOOD, "p2-p1": TAYLOR_HOOD, "p2p1": TAYLOR_HOOD,
}

# a node on several tagged boundaries is constrained by the first tag here
TAG_PRIORITY = (WALL, CYLINDER, INLET, OUTLET, GENERIC)


def element_family(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown element family {name!r}; use 'mini' or 'th'") from None


def p1_basis(bary: np.ndarray):
    """Values (nq, 3) and reference gradients (nq, 3, 2) of the hat functions."""
    vals = bary.copy()
    grads = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(bary), 3, 2)).copy()
    return vals, grads


def mini_basis(bary: np.ndarray):
    """P1 hats plus the cubic bubble 27 λ1 λ2 λ3 (unit at the centroid)."""
    v1, g1 = p1_basis(bary)
    l1, l2, l3 = bary.T
    bub = 27.0 * l1 * l2 * l3
    # d/dξ with λ1 = 1 - ξ - η, λ2 = ξ, λ3 = η
    dxi = 27.0 * (l3 * (l1 - l2))
    deta = 27.0 * (l2 * (l1 - l3))
    vals = np.column_stack([v1, bub])
    grads = np.concatenate([g1, np.stack([dxi, deta], axis=1)[:, None, :]], axis=1)
    return vals, grads


def p2_basis(bary: np.ndarray):
    """Quadratic Lagrange basis: vertices 0..2, then midpoints of edges (0,1), (1,2), (2,0)."""
    l = bary.T
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(bary)
    vals = np.empty((nq, 6))
    grads = np.empty((nq, 6, 2))
    for i in range(3):
        vals[:, i] = l[i] * (2.0 * l[i] - 1.0)
        grads[:, i] = (4.0 * l[i] - 1.0)[:, None] * dl[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        vals[:, 3 + k] = 4.0 * l[i] * l[j]
        grads[:, 3 + k] = 4.0 * (l[j][:, None] * dl[i] + l[i][:, None] * dl[j])
    return vals, grads


def velocity_basis(family: str, bary: np.ndarray):
    return mini_basis(bary) if family == MINI else p2_basis(bary)


@dataclass
class TabulatedBasis:
    """Basis values and physical gradients at the quadrature points of every triangle."""

    rule: QuadratureRule
    phi: np.ndarray      # (nq, nloc)
    dphi: np.ndarray     # (nt, nq, nloc, 2)
    psi: np.ndarray      # (nq, 3) pressure hats
    dpsi: np.ndarray     # (nt, 3, 2) pressure gradients (constant per triangle)
    wdet: np.ndarray     # (nt, nq) weights times |det J|
    xq: np.ndarray       # (nt, nq, 2) physical quadrature points


class MixedSpace:
    """Velocity/pressure dof maps plus Dirichlet metadata for one mesh."""

    def __init__(self, mesh: Mesh, family: str, snap_cylinder: bool = True,
                 cylinder_center=(0.2, 0.2), cylinder_radius=0.05):
        self.mesh = mesh
        self.family = element_family(family)
        nv, nt = mesh.n_nodes, mesh.n_triangles
        tri = mesh.triangles

        if self.family == MINI:
            self.n_extra = nt
            extra = nv + np.arange(nt)[:, None]
            self.cell_dofs = np.hstack([tri, extra])
            extra_xy = mesh.nodes[tri].mean(axis=1)
        else:
            edges = mesh.edges
            self.n_extra = len(edges)
            self.cell_dofs = np.hstack([tri, nv + mesh.triangle_edges])
            extra_xy = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
        self.n_scalar = nv + self.n_extra
        self.dof_coords = np.vstack([mesh.nodes, extra_xy])
        self.n_pressure = nv

        self.dirichlet = self._dirichlet_sets()
        if self.family == TAYLOR_HOOD and snap_cylinder and CYLINDER in self.dirichlet:
            self._snap_midpoints(np.asarray(cylinder_center, float), cylinder_radius)

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]

    def _dirichlet_sets(self) -> dict[int, np.ndarray]:
        mesh = self.mesh
        nv = mesh.n_nodes
        owner: dict[int, int] = {}
        for tag in TAG_PRIORITY:
            for node in mesh.nodes_with_tag(tag).tolist():
                owner.setdefault(node, tag)
        sets: dict[int, list[int]] = {}
        for node, tag in owner.items():
            sets.setdefault(tag, []).append(node)
        if self.family == TAYLOR_HOOD:
            for e, tag in zip(mesh.boundary_edge_index.tolist(), mesh.boundary_tags.tolist()):
                sets.setdefault(tag, []).append(nv + e)
        return {tag: np.array(sorted(d), dtype=np.int64) for tag, d in sorted(sets.items())}

    def _snap_midpoints(self, center, radius):
        nv = self.mesh.n_nodes
        mids = self.dirichlet[CYLINDER]
        mids = mids[mids >= nv]
        d = self.dof_coords[mids] - center
        self.dof_coords[mids] = center + radius * d / np.linalg.norm(d, axis=1)[:, None]

    @cached_property
    def boundary_scalar_dofs(self) -> np.ndarray:
        return np.unique(np.concatenate(list(self.dirichlet.values()))) if self.dirichlet else np.zeros(0, int)

    @cached_property
    def dirichlet_velocity_dofs(self) -> np.ndarray:
        s = self.boundary_scalar_dofs
        return np.concatenate([s, s + self.n_scalar])

    @cached_property
    def free_velocity_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_velocity, dtype=bool)
        mask[self.dirichlet_velocity_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def jacobians(self):
        """Per-triangle affine map data: (J, det J, J^{-T})."""
        p = self.mesh.nodes[self.mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        return J, det, np.transpose(inv, (0, 2, 1))

    def tabulate(self, rule: QuadratureRule) -> TabulatedBasis:
        J, det, invT = self.jacobians
        bary = rule.barycentric
        phi, dref = velocity_basis(self.family, bary)
        psi, dpsi_ref = p1_basis(bary)
        dphi = np.einsum("tij,qkj->tqki", invT, dref)
        dpsi = np.einsum("tij,kj->tki", invT, dpsi_ref[0])
        wdet = np.abs(det)[:, None] * rule.weights[None, :]
        x0 = self.mesh.nodes[self.mesh.triangles[:, 0]]
        xq = x0[:, None, :] + np.einsum("tij,qj->tqi", J, rule.points)
        return TabulatedBasis(rule, phi, dphi, psi, dpsi, wdet, xq)

    @cached_property
    def basis(self) -> TabulatedBasis:
        """Tabulation for the assembly rule."""
        return self.tabulate(assembly_rule())

    def split(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return u[: self.n_scalar], u[self.n_scalar:]

    def __repr__(self) -> str:
        return (f"MixedSpace({self.family}, velocity dofs={self.n_velocity}, "
                f"pressure dofs={self.n_pressure})")


def build_space(mesh: Mesh, family: str, **kwargs) -> MixedSpace:
    return MixedSpace(mesh, family, **kwargs)
