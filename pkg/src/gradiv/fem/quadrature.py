"""Quadrature on the reference triangle (0,0), (1,0), (0,1)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_sh_jacobi, roots_sh_legendre


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,) summing to 1/2
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        xi, eta = self.points.T
        return np.column_stack([1.0 - xi - eta, xi, eta])

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def radon7() -> QuadratureRule:
    """Seven-point rule exact for polynomials of degree 5."""
    s = np.sqrt(15.0)
    a1, b1 = (6.0 - s) / 21.0, (9.0 + 2.0 * s) / 21.0
    a2, b2 = (6.0 + s) / 21.0, (9.0 - 2.0 * s) / 21.0
    w1, w2 = (155.0 - s) / 1200.0, (155.0 + s) / 1200.0
    bary = [(1 / 3, 1 / 3, 1 / 3),
            (a1, a1, b1), (a1, b1, a1), (b1, a1, a1),
            (a2, a2, b2), (a2, b2, a2), (b2, a2, a2)]
    w = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2]) * 0.5
    pts = np.array([[b[1], b[2]] for b in bary])
    return QuadratureRule(pts, w, 5)


@lru_cache(maxsize=None)
def collapsed_gauss(degree: int) -> QuadratureRule:
    """Conical-product (Duffy) rule exact to ``degree``; all weights positive.

    Uses x = a (1 - b), y = b with Gauss-Legendre in a and Gauss-Jacobi
    (weight 1 - b) in b.
    """
    n = degree // 2 + 1
    a, wa = roots_sh_legendre(n)
    b, wb = roots_sh_jacobi(n, 2.0, 1.0)
    # roots_sh_jacobi weights integrate against (1-b) on [0, 1] normalised to ∫(1-b)db = 1/2
    wb = wb * (0.5 / wb.sum())
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
    return QuadratureRule(pts, (WA * WB).ravel(), degree)


def assembly_rule() -> QuadratureRule:
    return radon7()


def error_rule() -> QuadratureRule:
    return collapsed_gauss(7)


def monomial_integral(i: int, j: int) -> float:
    """Exact ∫ x^i y^j over the reference triangle: i! j! / (i + j + 2)!."""
    from math import factorial

    return factorial(i) * factorial(j) / factorial(i + j + 2)
