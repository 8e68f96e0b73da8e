"""Quadrature on the reference triangle (0,0), (1,0), (0,1) and on [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (n, 2) reference coordinates
    weights: np.ndarray  # (n,), sum 1/2
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.stack([1.0 - x - y, x, y], axis=1)

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def make_quadrature(degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree ``degree`` (1..8).

    Degrees 1 and 2 use the centroid and edge-midpoint rules; higher degrees
    use a collapsed Gauss-Jacobi x Gauss-Legendre product, which has
    positive weights and all points inside the triangle.
    """
    if not 1 <= degree <= 8:
        raise ValueError(f"unsupported quadrature degree {degree}")
    if degree == 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    elif degree == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        wts = np.full(3, 1.0 / 6.0)
    else:
        n = (degree + 2) // 2
        a, wa = np.polynomial.legendre.leggauss(n)
        b, wb = roots_jacobi(n, 1.0, 0.0)
        A, B = np.meshgrid(a, b, indexing="ij")
        x = 0.25 * (1 + A) * (1 - B)
        y = 0.5 * (1 + B)
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        wts = (np.outer(wa, wb) / 8.0).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def gauss_interval(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n``-point Gauss-Legendre rule on [0, 1]."""
    s, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (s + 1.0), 0.5 * w
