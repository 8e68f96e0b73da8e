"""Shared builders for the test suite."""

from __future__ import annotations

import math

import numpy as np

from icefem import elements, lsq, spaces
from icefem.lsq import LeastSquaresProblem, Mode, State
from icefem.mesh import DIRICHLET, NEUMANN, build_triangulation, square_mesh, uniform_refine
from icefem.quadrature import gauss_interval, make_quadrature
from icefem.model import CoefficientFields, ModelData, PhysicalParams

# every coefficient of order one, so all residual terms have comparable size
UNIT = PhysicalParams(rho=1.0, rho_o=1.0, C_o=1.0, P_star=1.0, c_m=1.0, C_hard=1.0, dt=1.0, h_min=0.05)

MIXED = {"left": "N", "right": "N", "bottom": "D", "top": "D"}


def const_field(value):
    return lambda x, y, t: np.full(np.broadcast(x, y).shape, float(value))


def const_vector(vx, vy):
    return lambda x, y, t: np.stack(
        [np.full(np.broadcast(x, y).shape, float(vx)), np.full(np.broadcast(x, y).shape, float(vy))], axis=-1
    )


def make_model(params=UNIT, A=None, h=None, v_o=None, g=None):
    return ModelData(
        params,
        CoefficientFields(
            A=A or const_field(1.0),
            h=h or const_field(1.0),
            v_o=v_o or const_vector(0.3, 0.1),
            g=g,
        ),
    )


def two_cell_square(tags="D"):
    if isinstance(tags, str):
        return build_triangulation([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]], tags)
    return square_mesh(1, tags=tags)


def refined(T, times):
    for _ in range(times):
        T = uniform_refine(T)
    return T


def perturbed_square(n, seed=0, tags=MIXED, amount=0.15):
    rng = np.random.default_rng(seed)
    T = square_mesh(n, tags=tags)
    pts = T.points.copy()
    inner = np.all((pts > 1e-9) & (pts < 1 - 1e-9), axis=1)
    pts[inner] += rng.uniform(-amount, amount, size=(inner.sum(), 2)) / n
    return build_triangulation(pts, T.cells, lambda mid: _side_tag(mid, tags))


def _side_tag(mid, tags):
    if isinstance(tags, str):
        return tags
    if mid[0] < 1e-12:
        return tags["left"]
    if mid[0] > 1 - 1e-12:
        return tags["right"]
    if mid[1] < 1e-12:
        return tags["bottom"]
    return tags["top"]


def random_state(problem: LeastSquaresProblem, rng, scale=1.0):
    state = problem.zero_state()
    state.coeffs = scale * rng.standard_normal(problem.n_dofs)
    state.coeffs[problem.constrained] = 0.0
    if state.u_old is not None:
        state.u_old = scale * rng.standard_normal(problem.n_vel)
        state.u_old[problem.vel.constrained] = 0.0
    return state


def smooth_state(problem: LeastSquaresProblem, rng, n_modes=3, amplitude=1.0):
    """Interpolant of random trigonometric fields for u and, independently, sigma."""
    k = rng.integers(1, 4, size=(n_modes, 2))
    phase = rng.uniform(0, 2 * np.pi, size=(n_modes, 2))
    a = rng.standard_normal((n_modes, 6)) * amplitude / n_modes

    def combo(p, cols):
        x, y = p[..., 0], p[..., 1]
        m = np.stack(
            [np.sin(np.pi * k[i, 0] * x + phase[i, 0]) * np.cos(np.pi * k[i, 1] * y + phase[i, 1])
             for i in range(n_modes)],
            axis=-1,
        )
        return m @ a[:, cols]

    def u(p):
        return combo(p, slice(0, 2))

    def s(p):
        return combo(p, slice(2, 6)).reshape(p.shape[:-1] + (2, 2))

    state = problem.zero_state()
    state.coeffs[:problem.n_vel] = spaces.interpolate(u, problem.vel).coeffs
    state.coeffs[problem.n_vel:] = spaces.interpolate(s, problem.stress).coeffs
    return state


def problem_on(T, model=None, mode=Mode.STATIONARY, order=1, quad_degree=6):
    return LeastSquaresProblem(T, model or make_model(), mode, order, quad_degree)


def copy_state(state: State) -> State:
    return state.copy()


def representable_case(T, mode=Mode.STATIONARY, params=UNIT, v_o=(0.3, 0.1)):
    """Exact discrete solution: u = (0, y(1-y)), sigma = 2 eta eps(u) with eta = 1.

    Needs Dirichlet bottom/top and Neumann left/right, where sigma n = 0.
    The body force g = tau_o(u) - div sigma is formed pointwise.
    """
    assert params.P_star / params.c_m == 1.0

    def u(p):
        y = p[..., 1]
        return np.stack([0 * y, y * (1 - y)], axis=-1)

    def sigma(p):
        y = p[..., 1]
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 1, 1] = 2 * (1 - 2 * y)
        return out

    def g(x, y, t):
        p = np.stack(np.broadcast_arrays(x, y), axis=-1)
        drag = params.rho_o * params.C_o * np.linalg.norm(u(p) - v_o, axis=-1, keepdims=True) * (u(p) - v_o)
        return drag - np.array([0.0, -4.0])

    m = make_model(params, v_o=const_vector(*v_o), g=g)
    problem = LeastSquaresProblem(T, m, mode)
    state = problem.zero_state()
    state.coeffs[:problem.n_vel] = spaces.interpolate(u, problem.vel).coeffs
    state.coeffs[problem.n_vel:] = spaces.interpolate(sigma, problem.stress).coeffs
    if state.u_old is not None:
        state.u_old = state.coeffs[:problem.n_vel].copy()
    exact = {
        "u": u,
        "grad_u": lambda p: np.stack([np.zeros(p.shape[:-1] + (2,)),
                                      np.stack([0 * p[..., 1], 1 - 2 * p[..., 1]], -1)], axis=-2),
        "sigma": sigma,
        "div_sigma": lambda p: np.stack([0 * p[..., 1], -4 + 0 * p[..., 1]], axis=-1),
    }
    return problem, state, exact


def fd_relative_error(p, s, d, steps=(1e-4, 1e-5, 1e-6, 1e-7)):
    exact = lsq.jacobian(p, s) @ d
    errs = []
    for h in steps:
        plus = lsq.residual_vector(p, State(s.coeffs + h * d, s.u_old))
        minus = lsq.residual_vector(p, State(s.coeffs - h * d, s.u_old))
        errs.append(np.linalg.norm((plus - minus) / (2 * h) - exact) / np.linalg.norm(exact))
    return min(errs)


def offset_state(p, rng, v_o=(0.3, 0.1)):
    """Random state with u - v_o bounded away from zero at quadrature points."""
    while True:
        s = random_state(p, rng, scale=0.05)
        shift = spaces.interpolate(lambda q: np.tile([-0.5 * v_o[0], -0.5 * v_o[1]], (len(q), 1)), p.vel).coeffs
        s.coeffs[:p.n_vel] += shift
        u, _, _, _ = p.fields(s)
        if np.min(np.linalg.norm(u - np.array(v_o), axis=-1)) >= 0.01:
            return s


def perturbed_mesh(n=4, seed=0, tag=NEUMANN):
    rng = np.random.default_rng(seed)
    T = square_mesh(n, tags=tag)
    pts = T.points.copy()
    inner = np.all((pts > 1e-9) & (pts < 1 - 1e-9), axis=1)
    pts[inner] += rng.uniform(-0.15, 0.15, size=(inner.sum(), 2)) / n
    return build_triangulation(pts, T.cells, tag)


def to_reference(T, cell, x):
    J, off, _ = T.jacobians()
    return np.linalg.solve(J[cell], (np.asarray(x) - off[cell]).T).T


def cellwise_p1_projection_error(T, q, div_q):
    """max |div(Pi q) - P_1(div q)| over quadrature points of all cells."""
    dm = spaces.build_dofmap(spaces.SpaceDescriptor(spaces.RT, 1, DIRICHLET, ncomp=1), T)
    f = spaces.interpolate(lambda p: q(p)[:, None, :], dm)
    rule = make_quadrature(6)
    tab = spaces.tabulate(dm, rule)
    _, ds = spaces.evaluate_at(f, tab)
    worst = 0.0
    phi, _ = elements.lagrange_basis(1, rule.points)  # (nq, 3)
    for m in range(T.n_cells):
        w = tab.weights[m]
        mass = np.einsum("q,qa,qb->ab", w, phi, phi)
        rhs = np.einsum("q,qa,q->a", w, phi, div_q(tab.points[m]))
        proj = phi @ np.linalg.solve(mass, rhs)
        worst = max(worst, np.max(np.abs(ds[m, :, 0] - proj)))
    return worst


def normal_jump(T, f, edges, nq=5):
    """max over the given interior edges of |[sigma n]| at Gauss points."""
    s, _ = gauss_interval(nq)
    worst = 0.0
    for e in edges:
        i, j = T.edges[e]
        xa, xb = T.points[i], T.points[j]
        t = xb - xa
        n = np.array([t[1], -t[0]]) / np.hypot(*t)
        x = xa + s[:, None] * t
        c0, c1 = T.edge_cells[e]
        v0, _ = spaces.evaluate(f, c0, to_reference(T, c0, x))
        v1, _ = spaces.evaluate(f, c1, to_reference(T, c1, x))
        worst = max(worst, np.max(np.abs((v0 - v1) @ n)))
    return worst


def ref_moment(a, b):
    """Integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
