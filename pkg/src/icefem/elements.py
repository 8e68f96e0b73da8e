"""Reference shape functions and the contravariant Piola map.

Local vertex ``k`` of the reference triangle is ``(0,0)``, ``(1,0)``,
``(0,1)``; local edge ``k`` is opposite vertex ``k`` and runs from vertex
``k+1`` to vertex ``k+2``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .quadrature import gauss_interval, make_quadrature

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REF_EDGES = ((1, 2), (2, 0), (0, 1))


def _as_points(ref_point):
    p = np.asarray(ref_point, dtype=float)
    return p.reshape(-1, 2), p.ndim == 1


def lagrange_basis(k: int, ref_point):
    """Nodal P1/P2 basis.

    Returns ``(values, gradients)`` with shapes ``(n, nb)`` and
    ``(n, nb, 2)``, or without the leading axis for a single point. P2
    ordering is the three vertices, then the three edge midpoints.
    """
    p, single = _as_points(ref_point)
    x, y = p[:, 0], p[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    g0, g1, g2 = np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    n = len(p)
    if k == 1:
        vals = np.stack([l0, l1, l2], axis=1)
        grads = np.broadcast_to(np.stack([g0, g1, g2]), (n, 3, 2)).copy()
    elif k == 2:
        L = (l0, l1, l2)
        G = (g0, g1, g2)
        vals = np.empty((n, 6))
        grads = np.empty((n, 6, 2))
        for i in range(3):
            vals[:, i] = L[i] * (2 * L[i] - 1)
            grads[:, i] = (4 * L[i] - 1)[:, None] * G[i]
        for e, (a, b) in enumerate(REF_EDGES):
            vals[:, 3 + e] = 4 * L[a] * L[b]
            grads[:, 3 + e] = 4 * (L[b][:, None] * G[a] + L[a][:, None] * G[b])
    else:
        raise ValueError(f"unsupported Lagrange order {k}")
    if single:
        return vals[0], grads[0]
    return vals, grads


def lagrange_nodes(k: int) -> np.ndarray:
    if k == 1:
        return REF_VERTICES.copy()
    mids = np.array([0.5 * (REF_VERTICES[a] + REF_VERTICES[b]) for a, b in REF_EDGES])
    return np.vstack([REF_VERTICES, mids])


# --------------------------------------------------------------------------
# Raviart-Thomas


def _rt_monomials(ell, p):
    """Spanning set of RT_ell: P_ell^2 plus x times homogeneous P_ell."""
    x, y = p[:, 0], p[:, 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    if ell == 0:
        vals = [(one, zero), (zero, one), (x, y)]
        divs = [zero, zero, 2 * one]
    else:
        vals = [
            (one, zero), (x, zero), (y, zero),
            (zero, one), (zero, x), (zero, y),
            (x * x, x * y), (x * y, y * y),
        ]
        divs = [zero, one, zero, zero, zero, one, 3 * x, 3 * y]
    V = np.stack([np.stack(v, axis=-1) for v in vals], axis=1)
    D = np.stack(divs, axis=1)
    return V, D


def edge_weights(ell, s):
    """Edge moment weights in the edge parameter ``s`` in [0, 1]."""
    if ell == 0:
        return np.ones((len(s), 1))
    return np.stack([np.ones_like(s), 2 * s - 1], axis=1)


def rt_dim(ell):
    return 3 if ell == 0 else 8


@lru_cache(maxsize=None)
def _rt_coefficients(ell):
    """Monomial coefficients of the basis dual to the reference dofs.

    Dofs: for each edge, moments of the outward normal flux against
    ``1`` (and ``2s - 1`` for ell = 1); for ell = 1, the two cell moments
    against the unit vectors.
    """
    if ell not in (0, 1):
        raise ValueError(f"unsupported Raviart-Thomas order {ell}")
    nb = rt_dim(ell)
    s, ws = gauss_interval(4)
    rows = []
    for a, b in REF_EDGES:
        va, vb = REF_VERTICES[a], REF_VERTICES[b]
        t = vb - va
        nds = np.array([t[1], -t[0]])  # outward normal times edge length
        pts = va + s[:, None] * t
        V, _ = _rt_monomials(ell, pts)
        flux = V @ nds  # (nq, nmono)
        W = edge_weights(ell, s)
        for j in range(W.shape[1]):
            rows.append((ws * W[:, j]) @ flux)
    if ell == 1:
        q = make_quadrature(4)
        V, _ = _rt_monomials(ell, q.points)
        rows.append(q.weights @ V[:, :, 0])
        rows.append(q.weights @ V[:, :, 1])
    M = np.array(rows)
    assert M.shape == (nb, nb)
    C = np.linalg.inv(M)
    C.setflags(write=False)
    return C


def rt_basis(ell: int, ref_point):
    """Reference RT_ell shape functions.

    Returns ``(values, divergences)`` of shapes ``(n, nb, 2)`` and
    ``(n, nb)``; a single point drops the leading axis. Ordering: edge 0
    moments, edge 1 moments, edge 2 moments, then (ell = 1) the two cell
    moments.
    """
    p, single = _as_points(ref_point)
    C = _rt_coefficients(ell)
    V, D = _rt_monomials(ell, p)
    vals = np.einsum("nmc,mb->nbc", V, C)
    divs = D @ C
    if single:
        return vals[0], divs[0]
    return vals, divs


def piola_push(amap, ref_values, ref_divs):
    """Contravariant Piola transform of reference H(div) values."""
    J = np.asarray(amap.jacobian)
    det = amap.det
    vals = np.asarray(ref_values) @ J.T / det
    return vals, np.asarray(ref_divs) / det
