"""Jacobi-preconditioned CG, Gauss-Newton iteration and backward-Euler marching."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import lsq, spaces
from .lsq import LeastSquaresProblem, Mode, State
from .mesh import Triangulation, active_subdomain
from .model import ModelData
from .quadrature import make_quadrature

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


def solve_spd(A, b, tol: float = 1e-10, maxiter: Optional[int] = None, x0=None) -> np.ndarray:
    """Conjugate gradients with a diagonal preconditioner.

    Stops once ``||b - A x|| <= tol * ||b||``. Raises
    :class:`LinearSolveError` if that is not reached within ``maxiter``
    iterations (default ``10 n``) or if a non-positive curvature appears.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    if maxiter is None:
        maxiter = max(10 * n, 100)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise LinearSolveError("matrix has a non-positive diagonal entry")
    dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(maxiter):
        if np.linalg.norm(r) <= target:
            log.debug("cg converged in %d iterations", it)
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise LinearSolveError("non-positive curvature in CG; matrix is not SPD")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recompute to guard against drift in the recursive residual
    if np.linalg.norm(b - A @ x) <= target:
        return x
    raise LinearSolveError(
        f"CG did not reach relative residual {tol:g} in {maxiter} iterations "
        f"(reached {np.linalg.norm(b - A @ x) / bnorm:.3e})"
    )


# --------------------------------------------------------------------------
# Gauss-Newton


@dataclass(frozen=True)
class GaussNewtonConfig:
    tol: float = 1e-4
    max_iter: int = 50
    damping: bool = True
    max_halvings: int = 10
    cg_tol: float = 1e-10
    cg_maxiter: Optional[int] = None
    residual_tol: Optional[float] = None  # optional stop on the normal-equation residual

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    functional: float
    tau_stop: float
    step_norm: float
    damping_factor: float


@dataclass
class GaussNewtonResult:
    state: State
    functional: float
    initial_functional: float
    converged: bool
    records: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)


def gauss_newton(problem: LeastSquaresProblem, state0: State, cfg: GaussNewtonConfig = GaussNewtonConfig()
                 ) -> GaussNewtonResult:
    """Minimize the least-squares functional by Gauss-Newton steps.

    Iterates until ``tau_stop = 1 - H_k / H_{k-1}`` lies in ``[0, tol]``.
    Also stops once the normal-equation residual drops to ``cg_tol`` times
    its first value or a step no longer changes the iterate in floating
    point; both mean H is already minimal to working accuracy.
    Reaching ``max_iter`` returns with ``converged=False``; linear solver
    failures propagate.
    """
    state = state0.copy()
    state.coeffs[problem.constrained] = 0.0
    H_prev = lsq.functional(problem, state)
    result = GaussNewtonResult(state, H_prev, H_prev, False)
    if H_prev == 0.0:
        result.converged = True
        return result
    rhs0 = None
    for k in range(1, cfg.max_iter + 1):
        system = lsq.assemble(problem, state)
        rnorm = np.linalg.norm(system.rhs)
        if rhs0 is None:
            rhs0 = rnorm
        if k > 1 and (rnorm <= cfg.cg_tol * rhs0
                      or (cfg.residual_tol is not None and rnorm <= cfg.residual_tol * rhs0)):
            # stationary to the accuracy of the linear solves
            result.converged = True
            break
        step = solve_spd(system.matrix, system.rhs, tol=cfg.cg_tol, maxiter=cfg.cg_maxiter)
        lam = 1.0
        cand = State(state.coeffs + step, state.u_old)
        H = lsq.functional(problem, cand)
        if cfg.damping and H > H_prev:
            best_lam, best_H = lam, H
            for _ in range(cfg.max_halvings):
                lam *= 0.5
                Hc = lsq.functional(problem, State(state.coeffs + lam * step, state.u_old))
                if Hc < best_H:
                    best_lam, best_H = lam, Hc
                if Hc <= H_prev:
                    break
            if best_H > H_prev:
                # no descent along the step: the iterate is a numerical minimum
                result.records.append(IterationRecord(k, H_prev, 0.0, 0.0, 0.0))
                result.converged = True
                break
            lam, H = best_lam, best_H
            cand = State(state.coeffs + lam * step, state.u_old)
        tau = 1.0 - H / H_prev if H_prev > 0 else 0.0
        result.records.append(IterationRecord(k, H, tau, float(lam * np.linalg.norm(step)), lam))
        log.debug("gauss-newton %d: H=%.6e tau=%.3e lambda=%g", k, H, tau, lam)
        state, H_prev = cand, H
        moved = lam * np.linalg.norm(step) > 1e-12 * np.linalg.norm(state.coeffs)
        if 0.0 <= tau <= cfg.tol or H == 0.0 or not moved:
            result.converged = True
            break
    result.state = state
    result.functional = H_prev
    return result


# --------------------------------------------------------------------------
# time marching


@dataclass(frozen=True)
class TimeLoopConfig:
    dt: float
    n_steps: int
    save_every: int = 0  # 0: only the final state; k: every k-th step

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")


@dataclass(frozen=True)
class StepLog:
    step: int
    time: float
    gn_iterations: int
    functional: float
    converged: bool
    u_minus_vo_norm: float
    records: tuple


@dataclass
class Trajectory:
    problem: LeastSquaresProblem
    state: State
    steps: list = field(default_factory=list)
    saved: list = field(default_factory=list)  # (step, problem, state)


def cell_average_thickness(mesh: Triangulation, model: ModelData, t: float) -> np.ndarray:
    rule = make_quadrature(2)
    J, off, det = mesh.jacobians()
    pts = off[:, None, :] + np.einsum("mij,qj->mqi", J, rule.points)
    h = np.broadcast_to(np.asarray(model.fields.h(pts[..., 0], pts[..., 1], t), dtype=float), pts.shape[:2])
    return 2.0 * h @ rule.weights


def initial_stress(problem: LeastSquaresProblem, grad_u0: Callable, t: float = 0.0) -> np.ndarray:
    """RT interpolant of ``2 eta eps(u0)`` given the gradient of ``u0``."""

    def field(pts):
        c = problem.model.sample(pts, t)
        G = grad_u0(pts)
        eps = 0.5 * (G + np.swapaxes(G, -1, -2))
        return 2.0 * c["eta"][..., None, None] * eps

    return spaces.interpolate(field, problem.stress).coeffs


def _node_keys(problem: LeastSquaresProblem):
    """Parent-mesh identity of every scalar velocity node and RT scalar dof."""
    T = problem.mesh
    pv = T.parent_vertices
    vert = [("v", int(p)) for p in pv]
    edge = [("e",) + tuple(sorted((int(pv[i]), int(pv[j])))) for i, j in T.edges]
    nodes = vert + edge if problem.order == 1 else vert
    per_edge = problem.order + 1
    rt = [e + (j,) for e in edge for j in range(per_edge)]
    if problem.order == 1:
        tri = [("c",) + tuple(sorted(int(pv[v]) for v in cell)) for cell in T.cells]
        rt += [c + (i,) for c in tri for i in range(2)]
    return nodes, rt


def transfer(old: LeastSquaresProblem, state: State, new: LeastSquaresProblem, t: float) -> State:
    """Carry a state to a new active mesh cut from the same parent mesh.

    Shared nodes keep their values; new velocity nodes take the ocean
    current, new stress dofs are zero.
    """
    old_nodes, old_rt = _node_keys(old)
    new_nodes, new_rt = _node_keys(new)
    out = new.zero_state()
    u_new = spaces.interpolate(
        lambda p: new.model.fields.v_o(p[:, 0], p[:, 1], t), new.vel, zero_constrained=False
    ).coeffs
    idx = {k: i for i, k in enumerate(old_nodes)}
    for c in range(2):
        for i, key in enumerate(new_nodes):
            j = idx.get(key)
            if j is not None:
                u_new[c * new.vel.n_scalar + i] = state.coeffs[c * old.vel.n_scalar + j]
    u_new[new.vel.constrained] = 0.0
    s_new = np.zeros(new.stress.n_dofs)
    ridx = {k: i for i, k in enumerate(old_rt)}
    s_old = state.coeffs[old.n_vel:]
    for c in range(2):
        for i, key in enumerate(new_rt):
            j = ridx.get(key)
            if j is not None:
                s_new[c * new.stress.n_scalar + i] = s_old[c * old.stress.n_scalar + j]
    s_new[new.stress.constrained] = 0.0
    out.coeffs = np.concatenate([u_new, s_new])
    return out


def time_march(mesh: Triangulation, model: ModelData, u0: Callable, tl: TimeLoopConfig,
               gn: GaussNewtonConfig = GaussNewtonConfig(), order: int = 1, grad_u0: Optional[Callable] = None,
               quad_degree: int = 6, on_step: Optional[Callable] = None) -> Trajectory:
    """Backward-Euler marching with one Gauss-Newton solve per step.

    ``u0`` maps an (n, 2) point array to (n, 2) velocities. If ``grad_u0`` is
    given the initial stress is the RT interpolant of ``2 eta eps(u0)``,
    otherwise zero. The active mesh is recomputed each step from the
    cell-averaged thickness.
    """
    model = ModelData(model.params.replace(dt=tl.dt), model.fields)
    h_min = model.params.h_min

    def active(t):
        return active_subdomain(mesh, cell_average_thickness(mesh, model, t), h_min)

    cur_mesh = active(0.0)
    problem = LeastSquaresProblem(cur_mesh, model, Mode.TIME_DEPENDENT, order, quad_degree, t=0.0)
    state = problem.zero_state()
    state.coeffs[:problem.n_vel] = spaces.interpolate(u0, problem.vel).coeffs
    if grad_u0 is not None:
        state.coeffs[problem.n_vel:] = initial_stress(problem, grad_u0, 0.0)
    state.coeffs[problem.constrained] = 0.0
    traj = Trajectory(problem, state)
    for n in range(1, tl.n_steps + 1):
        t = n * tl.dt
        new_mesh = active(t)
        if new_mesh is not cur_mesh and not _same_mesh(new_mesh, cur_mesh):
            new_problem = LeastSquaresProblem(new_mesh, model, Mode.TIME_DEPENDENT, order, quad_degree, t=t)
            state = transfer(problem, state, new_problem, t)
            problem, cur_mesh = new_problem, new_mesh
        problem.set_time(t)
        start = State(state.coeffs.copy(), state.coeffs[:problem.n_vel].copy())
        res = gauss_newton(problem, start, gn)
        state = res.state
        dist = lsq.velocity_l2_distance(problem, state, problem.coef["v_o"])
        step = StepLog(n, t, res.iterations, res.functional, res.converged, dist, tuple(res.records))
        traj.steps.append(step)
        log.info("step %d t=%g: %d GN iterations, H=%.6e, |u-v_o|=%.4e",
                 n, t, res.iterations, res.functional, dist)
        if not res.converged:
            log.warning("step %d: Gauss-Newton hit max_iter=%d", n, gn.max_iter)
        if tl.save_every and n % tl.save_every == 0:
            traj.saved.append((n, problem, state.copy()))
        if on_step is not None:
            on_step(step, problem, state)
    traj.problem, traj.state = problem, state
    return traj


def _same_mesh(a: Triangulation, b: Triangulation) -> bool:
    return a.n_cells == b.n_cells and np.array_equal(a.parent_vertices, b.parent_vertices) and np.array_equal(a.cells, b.cells)
