"""Sparse linear algebra for the time steppers.

* restarted GMRES for the nonsymmetric velocity-pressure systems,
* SPD factorization with reuse across right-hand sides (Step 2),
* conjugate gradients as an iterative fallback for SPD systems,
* construction of the constrained velocity-pressure (saddle) system.

Dirichlet values are eliminated from the unknowns; the pressure mean is
fixed by one appended Lagrange-multiplier row/column.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GMRES_TOL = 1e-8
GMRES_RESTART = 200
GMRES_MAXIT = 2000

# direct saddle solve: SuperLU diagonal pivot thresholds, tried in order until the
# relative residual is below DIRECT_RESIDUAL_TOL
DIRECT_PIVOT_THRESHOLDS = (0.01, 0.1, 1.0)
DIRECT_RESIDUAL_TOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GmresSettings:
    tol: float = GMRES_TOL
    restart: int = GMRES_RESTART
    max_iter: int = GMRES_MAXIT
    diagonal_preconditioner: bool = False


@dataclass
class SolverReport:
    iterations: int
    residual: float          # relative, ||b - A x|| / ||b||
    wall_time: float
    converged: bool
    method: str = "gmres"
    settings: dict = field(default_factory=dict)


def _as_operator(A):
    if isinstance(A, SaddleSystem):
        return A.matrix
    return A


def gmres(A, b, tol: float = GMRES_TOL, restart: int = GMRES_RESTART, max_iter: int = GMRES_MAXIT,
          x0: np.ndarray | None = None, diagonal_preconditioner: bool = False):
    """Restarted GMRES(restart) with right preconditioning.

    ``max_iter`` counts matrix-vector products over all cycles.  Returns the
    best iterate found and a SolverReport; non-convergence is reported, not
    raised.
    """
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, right-hand side {b.shape}")
    settings = dict(tol=tol, restart=restart, max_iter=max_iter, diagonal_preconditioner=diagonal_preconditioner)
    start = time.perf_counter()

    if diagonal_preconditioner:
        d = np.asarray(A.diagonal(), dtype=float)
        dinv = np.where(np.abs(d) > 0, 1.0 / np.where(d == 0, 1.0, d), 1.0)
    else:
        dinv = None

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, time.perf_counter() - start, True, "gmres", settings)

    r = b - A @ x
    rel = np.linalg.norm(r) / bnorm
    best_x, best_rel = x.copy(), rel
    its = 0
    m = max(1, min(restart, n))
    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.empty(m)
    sn = np.empty(m)

    while rel > tol and its < max_iter:
        beta = np.linalg.norm(r)
        V[0] = r / beta
        g = np.zeros(m + 1)
        g[0] = beta
        H[:] = 0.0
        k = 0
        for j in range(m):
            if its >= max_iter:
                break
            z = V[j] * dinv if dinv is not None else V[j]
            w = A @ z
            its += 1
            # classical Gram-Schmidt, applied twice
            h = V[: j + 1] @ w
            w -= h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w -= h2 @ V[: j + 1]
            h += h2
            hn = np.linalg.norm(w)
            H[: j + 1, j] = h
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            if hn == 0.0 or abs(g[j + 1]) <= tol * bnorm:
                break
            V[j + 1] = w / hn
        if k == 0:
            break
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k > 1 else g[:1] / H[0, 0]
        dx = y @ V[:k]
        if dinv is not None:
            dx = dx * dinv
        x = x + dx
        r = b - A @ x
        rel = np.linalg.norm(r) / bnorm
        if rel < best_rel:
            best_x, best_rel = x.copy(), rel
        if not np.isfinite(rel):
            break

    return best_x, SolverReport(its, float(best_rel), time.perf_counter() - start, bool(best_rel <= tol),
                                "gmres", settings)


def cg(A, b, tol: float = 1e-10, max_iter: int | None = None, x0: np.ndarray | None = None):
    """Conjugate gradients for SPD systems (fallback when factorization is unwanted)."""
    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, right-hand side {b.shape}")
    max_iter = max_iter or 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, time.perf_counter() - start, True, "cg")
    r = b - A @ x
    p = r.copy()
    rr = r @ r
    its = 0
    while np.sqrt(rr) > tol * bnorm and its < max_iter:
        Ap = A @ p
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        its += 1
    rel = np.linalg.norm(b - A @ x) / bnorm
    return x, SolverReport(its, float(rel), time.perf_counter() - start, bool(rel <= tol), "cg",
                           dict(tol=tol, max_iter=max_iter))


class Factorization:
    """Sparse symmetric positive definite factorization, reusable for many solves.

    Backed by SuperLU with a symmetric fill-reducing ordering and no row
    pivoting, so the U diagonal holds the LDL^T pivots; the matrix is
    positive definite iff all of them are positive.
    """

    def __init__(self, A: sp.spmatrix):
        A = sp.csc_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        try:
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options=dict(SymmetricMode=True))
        except RuntimeError as exc:  # exactly singular
            raise NotPositiveDefiniteError(f"factorization failed: {exc}") from None
        pivots = self._lu.U.diagonal()
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c) or np.any(pivots <= 0.0) \
                or not np.all(np.isfinite(pivots)):
            raise NotPositiveDefiniteError("matrix is not symmetric positive definite")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    __call__ = solve


def factor_spd(A: sp.spmatrix, check_symmetry: bool = True) -> Factorization:
    if check_symmetry:
        A = sp.csr_matrix(A)
        amax = abs(A).max() if A.nnz else 0.0
        if A.nnz and abs(A - A.T).max() > 1e-12 * amax:
            raise NotPositiveDefiniteError("matrix is not symmetric")
    return Factorization(A)


def is_symmetric(A: sp.spmatrix, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    if A.nnz == 0:
        return True
    return abs(A - A.T).max() <= rtol * abs(A).max()


@dataclass
class SaddleSystem:
    """Constrained velocity-pressure system.

    Unknowns are ``[free velocity dofs, pressure dofs, multiplier]``; the
    system matrix is

        [ A_ff  -B_f^T  0 ]
        [ -B_f   0      c ]
        [ 0      c^T    0 ]

    with c_i = (1, ψ_i).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray              # free velocity dof indices
    fixed: np.ndarray             # Dirichlet velocity dof indices
    fixed_values: np.ndarray
    n_velocity: int
    n_pressure: int

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        u = np.empty(self.n_velocity)
        u[self.free] = x[: self.n_free]
        u[self.fixed] = self.fixed_values
        p = x[self.n_free: self.n_free + self.n_pressure].copy()
        return u, p, float(x[-1])

    def solve(self, method: str = "gmres", gmres_settings: GmresSettings | None = None,
              x0: np.ndarray | None = None):
        """Solve; returns (velocity, pressure, SolverReport)."""
        if method == "direct":
            start = time.perf_counter()
            x = self._direct()
            bn = np.linalg.norm(self.rhs)
            res = np.linalg.norm(self.rhs - self.matrix @ x) / bn if bn > 0 else 0.0
            report = SolverReport(1, float(res), time.perf_counter() - start, bool(np.isfinite(res)), "direct")
        elif method == "gmres":
            s = gmres_settings or GmresSettings()
            x, report = gmres(self.matrix, self.rhs, s.tol, s.restart, s.max_iter, x0=x0,
                              diagonal_preconditioner=s.diagonal_preconditioner)
        else:
            raise ValueError(f"unknown solver {method!r}")
        u, p, _ = self.expand(x)
        return u, p, report

    def _direct(self) -> np.ndarray:
        """Sparse LU solve without factoring the dense mean-pressure border.

        With Dirichlet data on the whole boundary the system without the
        border is singular only along constant pressures.  The multiplier is
        fixed by the compatibility condition, the remaining consistent system
        is solved with one pressure dof pinned, and the pressure is then
        shifted to mean zero.  The result equals the bordered solve.
        """
        nf, n_p = self.n_free, self.n_pressure
        K = self.matrix.tocsr()
        n = K.shape[0] - 1
        c = K[nf:nf + n_p, n].toarray().ravel()
        r = self.rhs[:n].copy()
        lam = r[nf:nf + n_p].sum() / c.sum()
        r[nf:nf + n_p] -= lam * c
        keep = np.r_[0:nf, nf + 1:n]
        K0 = K[:n][:, :n]
        if abs(K0[nf:nf + n_p].sum(axis=0)).max() > 1e-10 * abs(K0).max():
            # pressure not determined only up to a constant; factor the bordered system
            return spla.splu(sp.csc_matrix(K)).solve(self.rhs)
        Kk = sp.csc_matrix(K0[keep][:, keep])
        rk = r[keep]
        # a small pivot threshold keeps the symmetric ordering (the grad-div block makes
        # stricter thresholds pivot off the diagonal and multiply the fill); stricter
        # thresholds are the fallback when the residual shows the pivots were too small
        for thresh in DIRECT_PIVOT_THRESHOLDS:
            lu = spla.splu(Kk, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=thresh,
                           options=dict(SymmetricMode=True))
            xk = lu.solve(rk)
            if np.linalg.norm(Kk @ xk - rk) <= DIRECT_RESIDUAL_TOL * max(np.linalg.norm(rk), 1e-300):
                break
        x = np.zeros(n + 1)
        x[keep] = xk
        p = x[nf:nf + n_p]
        p -= (c @ p) / c.sum()
        x[n] = lam
        return x

    def pack(self, u: np.ndarray, p: np.ndarray, lam: float = 0.0) -> np.ndarray:
        return np.concatenate([u[self.free], p, [lam]])


class SaddleTemplate:
    """Caches the constant pieces of the saddle system for one space.

    The velocity block changes every step (convection), so only the
    divergence/constraint blocks and index maps are cached.
    """

    def __init__(self, space, operators):
        self.space = space
        self.ops = operators
        self.free = space.free_velocity_dofs
        self.fixed = space.dirichlet_velocity_dofs
        B = operators.divergence.tocsc()
        self.B_f = B[:, self.free].tocsr()
        self.B_d = B[:, self.fixed].tocsr()
        self.mean = sp.csr_matrix(operators.blocks.pressure_mean[:, None])

    def build(self, velocity_block: sp.csr_matrix, load: np.ndarray, fixed_values: np.ndarray) -> SaddleSystem:
        A = velocity_block.tocsr()
        A_f = A[self.free]
        A_ff = A_f[:, self.free]
        A_fd = A_f[:, self.fixed]
        K = sp.bmat([[A_ff, -self.B_f.T, None],
                     [-self.B_f, None, self.mean],
                     [None, self.mean.T, None]], format="csr")
        rhs = np.concatenate([load[self.free] - A_fd @ fixed_values, self.B_d @ fixed_values, [0.0]])
        return SaddleSystem(K, rhs, self.free, self.fixed, np.asarray(fixed_values, float),
                            self.space.n_velocity, self.space.n_pressure)


def build_saddle_system(space, operators, nu: float, dt: float, u_prev: np.ndarray, w: np.ndarray | None,
                        bc_values: np.ndarray, f_vector: np.ndarray | None = None,
                        coupled_graddiv: tuple[float, float] | None = None,
                        template: SaddleTemplate | None = None) -> SaddleSystem:
    """Assemble the Step-1 (or fully coupled) system for one time step.

    Velocity block M/Δt + νK + N(w) [+ (β/Δt + γ) G]; load
    f + M u^n/Δt [+ (β/Δt) G u^n].  ``w=None`` drops convection.
    ``bc_values`` is a full velocity vector; only its Dirichlet entries are used.
    """
    ops = operators
    A = ops.mass * (1.0 / dt) + ops.stiffness * nu
    if w is not None:
        A = A + ops.convection(w)
    load = ops.mass @ u_prev / dt
    if f_vector is not None:
        load = load + f_vector
    if coupled_graddiv is not None:
        beta, gamma = coupled_graddiv
        if beta != 0.0 or gamma != 0.0:
            A = A + ops.graddiv * (beta / dt + gamma)
            load = load + ops.graddiv @ u_prev * (beta / dt)
    template = template or SaddleTemplate(space, ops)
    return template.build(A, load, bc_values[template.fixed])
