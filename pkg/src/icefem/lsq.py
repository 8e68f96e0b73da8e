"""Least-squares residuals, functional, Gauss-Newton system, indicators.

For a velocity ``u`` and a non-symmetric stress ``sigma`` the pointwise
residual has a momentum part

    r1 = beta^{-1/2} (u - u_old) + beta^{1/2} (tau_o(u) - div sigma - g)

and a constitutive part

    r2 = (2 eta)^{-1/2} sigma - (2 eta)^{1/2} eps(u),

with ``beta = dt / (h rho)``. The stationary mode drops the ``u - u_old``
term. The functional is the integral of ``|r1|^2 + |r2|^2`` over the
active mesh.

Residual components are ordered ``r1_x, r1_y, r2_xx, r2_xy, r2_yx, r2_yy``;
the global coefficient vector is velocity (x block, y block) followed by
stress (row 0 block, row 1 block).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import spaces
from .mesh import Triangulation
from .model import ModelData, drag_jacobian, ocean_drag
from .quadrature import make_quadrature


class Mode(enum.Enum):
    TIME_DEPENDENT = "time_dependent"
    STATIONARY = "stationary"


@dataclass
class State:
    """Coefficients of ``(u, sigma)`` plus the previous-step velocity."""

    coeffs: np.ndarray
    u_old: Optional[np.ndarray] = None

    def copy(self) -> "State":
        return State(self.coeffs.copy(), None if self.u_old is None else self.u_old.copy())


@dataclass(frozen=True)
class ResidualSample:
    r1: np.ndarray  # (..., 2)
    r2: np.ndarray  # (..., 2, 2)


@dataclass(frozen=True, eq=False)
class GaussNewtonSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray


class LeastSquaresProblem:
    """Discrete spaces, quadrature tables and coefficient samples on a mesh.

    ``order`` is the RT order of the stress rows; velocity uses Lagrange
    order ``order + 1``.
    """

    def __init__(self, mesh: Triangulation, model: ModelData, mode: Mode = Mode.TIME_DEPENDENT,
                 order: int = 1, quad_degree: int = 6, t: float = 0.0):
        self.mesh = mesh
        self.model = model
        self.mode = Mode(mode)
        self.order = order
        self.vel = spaces.build_dofmap(spaces.velocity_space(order + 1), mesh)
        self.stress = spaces.build_dofmap(spaces.stress_space(order), mesh)
        self.rule = make_quadrature(quad_degree)
        self.vt = spaces.tabulate(self.vel, self.rule)
        self.st = spaces.tabulate(self.stress, self.rule)
        self.n_vel = self.vel.n_dofs
        self.n_dofs = self.vel.n_dofs + self.stress.n_dofs
        self.cell_dofs = np.concatenate(
            [self.vel.cell_dofs, self.n_vel + self.stress.cell_dofs], axis=1
        )
        self.constrained = np.concatenate([self.vel.constrained, self.n_vel + self.stress.constrained])
        self._t = None
        self.set_time(t)

    # -- bookkeeping -------------------------------------------------------

    def set_time(self, t: float) -> None:
        if t != self._t:
            self._t = t
            self.coef = self.model.sample(self.vt.points, t)

    @property
    def t(self) -> float:
        return self._t

    def zero_state(self) -> State:
        u_old = np.zeros(self.n_vel) if self.mode is Mode.TIME_DEPENDENT else None
        return State(np.zeros(self.n_dofs), u_old)

    def split(self, coeffs):
        return coeffs[:self.n_vel], coeffs[self.n_vel:]

    def velocity(self, state: State) -> spaces.FeFunction:
        return spaces.FeFunction(self.vel, state.coeffs[:self.n_vel])

    def stress_function(self, state: State) -> spaces.FeFunction:
        return spaces.FeFunction(self.stress, state.coeffs[self.n_vel:])

    def scalings(self):
        """``(m, b, a, c)`` = beta^-1/2 (0 if stationary), beta^1/2, (2 eta)^-1/2, (2 eta)^1/2."""
        beta = self.coef["beta"]
        two_eta = 2.0 * self.coef["eta"]
        m = 1.0 / np.sqrt(beta) if self.mode is Mode.TIME_DEPENDENT else np.zeros_like(beta)
        return m, np.sqrt(beta), 1.0 / np.sqrt(two_eta), np.sqrt(two_eta)

    # -- field evaluation --------------------------------------------------

    def fields(self, state: State):
        """Velocity, velocity gradient, stress and stress divergence at quadrature points."""
        u, gu = spaces.evaluate_at(self.velocity(state), self.vt)
        s, ds = spaces.evaluate_at(self.stress_function(state), self.st)
        return u, gu, s, ds

    def old_velocity(self, state: State):
        if self.mode is Mode.STATIONARY or state.u_old is None:
            return np.zeros(self.vt.points.shape)
        u_old, _ = spaces.evaluate_at(spaces.FeFunction(self.vel, state.u_old), self.vt)
        return u_old


def _residual(m, b, a, c, u, gu, s, ds, u_old, v_o, g, params):
    r1 = m[..., None] * (u - u_old) + b[..., None] * (ocean_drag(u, v_o, params) - ds - g)
    eps = 0.5 * (gu + np.swapaxes(gu, -1, -2))
    r2 = a[..., None, None] * s - c[..., None, None] * eps
    return r1, r2


def residual_field(problem: LeastSquaresProblem, state: State) -> np.ndarray:
    """Residual at every quadrature point, shape (M, nq, 6)."""
    m, b, a, c = problem.scalings()
    u, gu, s, ds = problem.fields(state)
    r1, r2 = _residual(m, b, a, c, u, gu, s, ds, problem.old_velocity(state),
                       problem.coef["v_o"], problem.coef["g"], problem.model.params)
    return np.concatenate([r1, r2.reshape(r2.shape[:-2] + (4,))], axis=-1)


def local_indicators(problem: LeastSquaresProblem, state: State) -> np.ndarray:
    """Per-cell integral of ``|r1|^2 + |r2|^2``."""
    r = residual_field(problem, state)
    return np.einsum("mq,mqk,mqk->m", problem.vt.weights, r, r)


def functional(problem: LeastSquaresProblem, state: State) -> float:
    return float(local_indicators(problem, state).sum())


def _jacobian_blocks(problem: LeastSquaresProblem, state: State) -> np.ndarray:
    """Derivative of the residual w.r.t. local coefficients, (M, nq, 6, nloc)."""
    m, b, a, c = problem.scalings()
    u, _, _, _ = problem.fields(state)
    K = drag_jacobian(u, problem.coef["v_o"], problem.model.params)
    vt, st = problem.vt, problem.st
    phi, grad = vt.values, vt.derivs
    psi, dv = st.values, st.derivs
    M, nq, nv = phi.shape
    ns = psi.shape[2]
    B = np.zeros((M, nq, 6, 2 * nv + 2 * ns))
    for cc in range(2):
        blk = slice(cc * nv, (cc + 1) * nv)
        for i in range(2):
            coef = b * K[..., i, cc] + (m if i == cc else 0.0)
            B[:, :, i, blk] = coef[..., None] * phi
            for j in range(2):
                # eps_ij of phi e_cc = (delta_i,cc d_j phi + delta_j,cc d_i phi) / 2
                e = np.zeros_like(phi)
                if i == cc:
                    e = e + 0.5 * grad[..., j]
                if j == cc:
                    e = e + 0.5 * grad[..., i]
                B[:, :, 2 + 2 * i + j, blk] = -c[..., None] * e
    for r in range(2):
        blk = slice(2 * nv + r * ns, 2 * nv + (r + 1) * ns)
        B[:, :, r, blk] = -b[..., None] * dv
        for j in range(2):
            B[:, :, 2 + 2 * r + j, blk] = a[..., None] * psi[..., j]
    return B


def residual_vector(problem: LeastSquaresProblem, state: State) -> np.ndarray:
    """Quadrature-weighted residual; its squared norm is the functional."""
    r = residual_field(problem, state)
    return (np.sqrt(problem.vt.weights)[..., None] * r).ravel()


def jacobian(problem: LeastSquaresProblem, state: State) -> sp.csr_matrix:
    """Derivative of :func:`residual_vector` as a sparse rectangular matrix."""
    B = _jacobian_blocks(problem, state) * np.sqrt(problem.vt.weights)[..., None, None]
    M, nq, nk, nloc = B.shape
    rows = np.broadcast_to(np.arange(M * nq * nk).reshape(M, nq, nk, 1), B.shape)
    cols = np.broadcast_to(problem.cell_dofs[:, None, None, :], B.shape)
    return sp.csr_matrix((B.ravel(), (rows.ravel(), cols.ravel())), shape=(M * nq * nk, problem.n_dofs))


def assemble(problem: LeastSquaresProblem, state: State) -> GaussNewtonSystem:
    """Normal equations of the linearized least-squares problem.

    Matrix entries are ``(DR[phi_i], DR[phi_j])``, the right-hand side is
    ``-(R, DR[phi_i])``. Constrained dofs get identity rows and columns and
    a zero right-hand side.
    """
    B = _jacobian_blocks(problem, state)
    r = residual_field(problem, state)
    W = problem.vt.weights
    local_A = np.einsum("mq,mqkr,mqks->mrs", W, B, B)
    local_b = -np.einsum("mq,mqkr,mqk->mr", W, B, r)
    dofs = problem.cell_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = problem.n_dofs
    A = sp.coo_matrix((local_A.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    rhs = np.bincount(dofs.ravel(), weights=local_b.ravel(), minlength=n)
    free = np.ones(n)
    free[problem.constrained] = 0.0
    D = sp.diags(free)
    A = (D @ A @ D + sp.diags(1.0 - free)).tocsr()
    A.sort_indices()
    rhs = rhs * free
    return GaussNewtonSystem(A, rhs)


# --------------------------------------------------------------------------
# pointwise evaluation


def _point_data(problem, state, cell, ref_point):
    ref_point = np.asarray(ref_point, dtype=float)
    amap = problem.mesh.affine_map(cell)
    x = amap(ref_point)
    coef = problem.model.sample(x, problem.t)
    u, gu = spaces.evaluate(problem.velocity(state), cell, ref_point)
    s, ds = spaces.evaluate(problem.stress_function(state), cell, ref_point)
    if problem.mode is Mode.TIME_DEPENDENT and state.u_old is not None:
        u_old, _ = spaces.evaluate(spaces.FeFunction(problem.vel, state.u_old), cell, ref_point)
        m = 1.0 / np.sqrt(coef["beta"])
    else:
        u_old = np.zeros_like(u)
        m = np.zeros_like(coef["beta"])
    two_eta = 2.0 * coef["eta"]
    return coef, (m, np.sqrt(coef["beta"]), 1.0 / np.sqrt(two_eta), np.sqrt(two_eta)), u, gu, s, ds, u_old


def residual_at(problem: LeastSquaresProblem, state: State, cell: int, ref_point) -> ResidualSample:
    coef, (m, b, a, c), u, gu, s, ds, u_old = _point_data(problem, state, cell, ref_point)
    r1, r2 = _residual(m, b, a, c, u, gu, s, ds, u_old, coef["v_o"], coef["g"], problem.model.params)
    return ResidualSample(r1, r2)


def residual_derivative_at(problem: LeastSquaresProblem, state: State, cell: int, ref_point,
                           direction: np.ndarray) -> ResidualSample:
    """Gateaux derivative of :func:`residual_at` along a coefficient vector."""
    coef, (m, b, a, c), u, _, _, _, _ = _point_data(problem, state, cell, ref_point)
    d = State(np.asarray(direction, dtype=float))
    v, gv = spaces.evaluate(problem.velocity(d), cell, ref_point)
    tau, dtau = spaces.evaluate(problem.stress_function(d), cell, ref_point)
    K = drag_jacobian(u, coef["v_o"], problem.model.params)
    dr1 = m[..., None] * v + b[..., None] * (np.einsum("...ij,...j->...i", K, v) - dtau)
    eps = 0.5 * (gv + np.swapaxes(gv, -1, -2))
    dr2 = a[..., None, None] * tau - c[..., None, None] * eps
    return ResidualSample(dr1, dr2)


# --------------------------------------------------------------------------
# norms


def solution_norm_sq(problem: LeastSquaresProblem, state: State, exact=None) -> float:
    """``||u||^2 + ||grad u||^2 + ||sigma||^2 + ||div sigma||^2``.

    With ``exact`` (callables ``u``, ``grad_u``, ``sigma``, ``div_sigma`` of
    an (..., 2) point array) the norm of the error ``exact - state`` is
    returned instead.
    """
    u, gu, s, ds = problem.fields(state)
    if exact is not None:
        X = problem.vt.points
        u = exact["u"](X) - u
        gu = exact["grad_u"](X) - gu
        s = exact["sigma"](X) - s
        ds = exact["div_sigma"](X) - ds
    W = problem.vt.weights
    total = (
        np.einsum("mq,mqi,mqi->", W, u, u)
        + np.einsum("mq,mqij,mqij->", W, gu, gu)
        + np.einsum("mq,mqij,mqij->", W, s, s)
        + np.einsum("mq,mqi,mqi->", W, ds, ds)
    )
    return float(total)


def velocity_l2_distance(problem: LeastSquaresProblem, state: State, other) -> float:
    """L2 norm of ``u - other`` with ``other`` sampled at quadrature points."""
    u, _, _, _ = problem.fields(state)
    d = u - other
    return float(np.sqrt(np.einsum("mq,mqi,mqi->", problem.vt.weights, d, d)))
