"""Assembly of the bilinear and trilinear forms used by the schemes.

All operators are ``scipy.sparse.csr_matrix`` with sorted column indices.
Element contributions are accumulated with a precomputed scatter map, so
reassembly (the convection matrix, every time step) costs one ``bincount``
and results do not depend on anything but the element order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .space import MixedSpace


class Pattern:
    """CSR sparsity pattern of an element-by-element assembled matrix."""

    def __init__(self, row_dofs: np.ndarray, col_dofs: np.ndarray, shape: tuple[int, int]):
        nt, nr = row_dofs.shape
        nc = col_dofs.shape[1]
        self.shape = shape
        keys = (row_dofs[:, :, None].astype(np.int64) * shape[1] + col_dofs[:, None, :]).ravel()
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.scatter = self.scatter.reshape(-1)
        self.indices = (uniq % shape[1]).astype(np.int32)
        rows = uniq // shape[1]
        self.indptr = np.searchsorted(rows, np.arange(shape[0] + 1)).astype(np.int32)
        self.local_shape = (nt, nr, nc)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def data(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.scatter, weights=local.reshape(-1), minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)

    def assemble(self, local: np.ndarray) -> sp.csr_matrix:
        return self.matrix(self.data(local))


def _form(wdet, a, b):
    """Local matrix  sum_q w_q a_i(q) b_j(q)  with a as test (rows), b as trial (cols)."""
    return np.einsum("tq,tqi,tqj->tij", wdet, a, b, optimize=True)


@dataclass
class ScalarBlocks:
    """Scalar building blocks on the velocity and pressure dof maps."""

    mass: sp.csr_matrix      # (phi_j, phi_i)
    dxx: sp.csr_matrix       # (d_x phi_j, d_x phi_i)
    dyy: sp.csr_matrix       # (d_y phi_j, d_y phi_i)
    dxy: sp.csr_matrix       # (d_y phi_j, d_x phi_i): test on component 1, trial on component 2
    bx: sp.csr_matrix        # (psi_i, d_x phi_j)
    by: sp.csr_matrix        # (psi_i, d_y phi_j)
    pressure_mass: sp.csr_matrix
    pressure_mean: np.ndarray  # (1, psi_i)

    @property
    def stiffness(self) -> sp.csr_matrix:
        return (self.dxx + self.dyy).tocsr()


class Assembler:
    """Assembles every form on one MixedSpace; shares one velocity pattern."""

    def __init__(self, space: MixedSpace):
        self.space = space
        cd = space.cell_dofs
        pd = space.mesh.triangles
        self.vv = Pattern(cd, cd, (space.n_scalar, space.n_scalar))
        self.pv = Pattern(pd, cd, (space.n_pressure, space.n_scalar))
        self.pp = Pattern(pd, pd, (space.n_pressure, space.n_pressure))

    @cached_property
    def blocks(self) -> ScalarBlocks:
        b = self.space.basis
        nt = self.space.mesh.n_triangles
        phi = np.broadcast_to(b.phi, (nt,) + b.phi.shape)
        psi = np.broadcast_to(b.psi, (nt,) + b.psi.shape)
        dx, dy = b.dphi[..., 0], b.dphi[..., 1]
        mass = self.vv.assemble(_form(b.wdet, phi, phi))
        dxx = self.vv.assemble(_form(b.wdet, dx, dx))
        dyy = self.vv.assemble(_form(b.wdet, dy, dy))
        dxy = self.vv.assemble(_form(b.wdet, dx, dy))
        bx = self.pv.assemble(_form(b.wdet, psi, dx))
        by = self.pv.assemble(_form(b.wdet, psi, dy))
        mp = self.pp.assemble(_form(b.wdet, psi, psi))
        mean = np.bincount(self.space.mesh.triangles.ravel(),
                           weights=np.einsum("tq,tqi->ti", b.wdet, psi).ravel(),
                           minlength=self.space.n_pressure)
        return ScalarBlocks(mass, dxx, dyy, dxy, bx, by, mp, mean)

    def values_at_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        """Scalar FE function at the assembly quadrature points, (nt, nq)."""
        return coeffs[self.space.cell_dofs] @ self.space.basis.phi.T

    def convection_local(self, w: np.ndarray) -> np.ndarray:
        """Local skew matrices ½(w·∇φ_j, φ_i) − ½(w·∇φ_i, φ_j)."""
        b = self.space.basis
        w1, w2 = self.space.split(w)
        w1q = self.values_at_quadrature(w1)
        w2q = self.values_at_quadrature(w2)
        adv = w1q[:, :, None] * b.dphi[..., 0] + w2q[:, :, None] * b.dphi[..., 1]   # (nt, nq, nloc)
        c = np.einsum("tq,qi,tqj->tij", b.wdet, b.phi, adv, optimize=True)
        return 0.5 * (c - np.transpose(c, (0, 2, 1)))

    def convection_data(self, w: np.ndarray) -> np.ndarray:
        """CSR data of the scalar convection matrix on the velocity pattern."""
        return self.vv.data(self.convection_local(w))

    def convection_scalar(self, w: np.ndarray) -> sp.csr_matrix:
        return self.vv.matrix(self.convection_data(w))

    def source(self, f, t: float) -> np.ndarray:
        """Load vector (f(t), φ) for a body force f(x, y, t) -> (f1, f2)."""
        b = self.space.basis
        x, y = b.xq[..., 0], b.xq[..., 1]
        f1, f2 = f(x, y, t)
        f1 = np.broadcast_to(f1, x.shape)
        f2 = np.broadcast_to(f2, x.shape)
        n = self.space.n_scalar
        cd = self.space.cell_dofs.ravel()
        l1 = np.einsum("tq,tq,qi->ti", b.wdet, f1, b.phi).ravel()
        l2 = np.einsum("tq,tq,qi->ti", b.wdet, f2, b.phi).ravel()
        return np.concatenate([np.bincount(cd, weights=l1, minlength=n), np.bincount(cd, weights=l2, minlength=n)])


def _blockdiag(a: sp.spmatrix, b: sp.spmatrix) -> sp.csr_matrix:
    return sp.block_diag((a, b), format="csr")


@dataclass
class Operators:
    """Vector-valued operators for one space (velocity component-blocked)."""

    space: MixedSpace
    assembler: Assembler
    mass: sp.csr_matrix           # (u, v)
    stiffness: sp.csr_matrix      # (∇u, ∇v)
    divergence: sp.csr_matrix     # (q, ∇·v), pressure rows
    graddiv: sp.csr_matrix        # (∇·u, ∇·v)
    graddiv_diag: sp.csr_matrix   # (u1,1, v1,1) + (u2,2, v2,2)
    graddiv_cross: sp.csr_matrix  # (u2,2, v1,1) + (u1,1, v2,2)

    @property
    def blocks(self) -> ScalarBlocks:
        return self.assembler.blocks

    def convection(self, w: np.ndarray) -> sp.csr_matrix:
        ns = self.assembler.convection_scalar(w)
        return _blockdiag(ns, ns)


def assemble_mass(space: MixedSpace, assembler: Assembler | None = None) -> sp.csr_matrix:
    a = assembler or Assembler(space)
    return _blockdiag(a.blocks.mass, a.blocks.mass)


def assemble_stiffness(space: MixedSpace, assembler: Assembler | None = None) -> sp.csr_matrix:
    a = assembler or Assembler(space)
    k = a.blocks.stiffness
    return _blockdiag(k, k)


def assemble_divergence(space: MixedSpace, assembler: Assembler | None = None) -> sp.csr_matrix:
    a = assembler or Assembler(space)
    return sp.hstack([a.blocks.bx, a.blocks.by], format="csr")


def assemble_graddiv_lagged(space: MixedSpace, assembler: Assembler | None = None):
    """Split of the grad-div matrix into same-component (D) and cross (X) parts."""
    a = assembler or Assembler(space)
    blk = a.blocks
    d = _blockdiag(blk.dxx, blk.dyy)
    x = sp.bmat([[None, blk.dxy], [blk.dxy.T, None]], format="csr")
    d.sort_indices()
    x.sort_indices()
    return d, x


def assemble_graddiv(space: MixedSpace, assembler: Assembler | None = None) -> sp.csr_matrix:
    a = assembler or Assembler(space)
    blk = a.blocks
    g = sp.bmat([[blk.dxx, blk.dxy], [blk.dxy.T, blk.dyy]], format="csr")
    g.sort_indices()
    return g


def assemble_convection(space: MixedSpace, w: np.ndarray, assembler: Assembler | None = None) -> sp.csr_matrix:
    """N(w) with entries b(w, φ_j, φ_i) in the explicitly skew form."""
    a = assembler or Assembler(space)
    ns = a.convection_scalar(w)
    return _blockdiag(ns, ns)


def assemble_operators(space: MixedSpace) -> Operators:
    a = Assembler(space)
    d, x = assemble_graddiv_lagged(space, a)
    return Operators(
        space=space,
        assembler=a,
        mass=assemble_mass(space, a),
        stiffness=assemble_stiffness(space, a),
        divergence=assemble_divergence(space, a),
        graddiv=assemble_graddiv(space, a),
        graddiv_diag=d,
        graddiv_cross=x,
    )
