"""Experiment drivers: single runs and uniform-refinement studies."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import exprlang, io, lsq, spaces
from .config import RunConfig, mesh_path
from .lsq import LeastSquaresProblem, Mode, State
from .manufactured import manufacture
from .mesh import Triangulation, active_subdomain, read_mesh, square_mesh, uniform_refine
from .model import CoefficientFields, ModelData
from .solver import (
    GaussNewtonConfig,
    StepLog,
    TimeLoopConfig,
    cell_average_thickness,
    gauss_newton,
    initial_stress,
    time_march,
)

log = logging.getLogger(__name__)

# functional values below this fraction of the squared solution norm are
# indistinguishable from quadrature and rounding noise
QUADRATURE_FLOOR = 1e-18


def _scalar(e):
    return lambda x, y, t: exprlang.evaluate(e, x, y, t)


def _vector(ex, ey):
    return lambda x, y, t: np.stack(
        np.broadcast_arrays(exprlang.evaluate(ex, x, y, t), exprlang.evaluate(ey, x, y, t)), axis=-1
    )


@dataclass
class Setup:
    model: ModelData
    exact: Optional[object] = None  # ManufacturedSolution


def build_setup(cfg: RunConfig) -> Setup:
    e = cfg.expressions
    exact = None
    g = None
    if "u_exact_x" in e:
        exact = manufacture((e["u_exact_x"], e["u_exact_y"]), e["A"], e["h"], (e["v_o_x"], e["v_o_y"]), cfg.params)
        g = _vector(*exact.g)
    elif "g_x" in e:
        g = _vector(e["g_x"], e["g_y"])
    fields = CoefficientFields(
        A=_scalar(e["A"]), h=_scalar(e["h"]), v_o=_vector(e["v_o_x"], e["v_o_y"]), g=g
    )
    return Setup(ModelData(cfg.params, fields), exact)


def build_mesh(cfg: RunConfig) -> Triangulation:
    if cfg.mesh == "square":
        return square_mesh(cfg.n, cfg.length, tags=dict(cfg.boundary))
    return read_mesh(mesh_path(cfg))


def gn_config(cfg: RunConfig) -> GaussNewtonConfig:
    return GaussNewtonConfig(
        tol=cfg.tol, max_iter=cfg.max_iter, damping=cfg.damping, cg_tol=cfg.cg_tol,
        residual_tol=cfg.residual_tol,
    )


def _initial_fields(cfg: RunConfig, t: float = 0.0):
    e = cfg.expressions
    if "u0_x" not in e:
        zero = exprlang.Num(0.0)
        ux, uy = zero, zero
    else:
        ux, uy = e["u0_x"], e["u0_y"]
    u0 = _vector(ux, uy)

    def u0_pts(p):
        return u0(p[..., 0], p[..., 1], t)

    if cfg.sigma_init == "zero":
        return u0_pts, None
    grads = [[exprlang.diff(c, v) for v in ("x", "y")] for c in (ux, uy)]

    def grad_pts(p):
        return np.stack([_vector(*row)(p[..., 0], p[..., 1], t) for row in grads], axis=-2)

    return u0_pts, grad_pts


@dataclass
class RunResult:
    problem: LeastSquaresProblem
    state: State
    steps: list
    wall_time: float

    @property
    def functional(self) -> float:
        return self.steps[-1].functional


def solve(cfg: RunConfig, mesh: Optional[Triangulation] = None, setup: Optional[Setup] = None,
          on_step=None) -> RunResult:
    """Run the configured problem on ``mesh`` (default: the configured mesh)."""
    mesh = build_mesh(cfg) if mesh is None else mesh
    setup = build_setup(cfg) if setup is None else setup
    gn = gn_config(cfg)
    u0, grad_u0 = _initial_fields(cfg)
    t0 = time.perf_counter()
    if cfg.mode is Mode.TIME_DEPENDENT:
        traj = time_march(
            mesh, setup.model, u0, TimeLoopConfig(cfg.dt, cfg.n_steps, 1 if cfg.vtk == "all" else 0),
            gn, order=cfg.order, grad_u0=grad_u0, quad_degree=cfg.quad_degree, on_step=on_step,
        )
        return RunResult(traj.problem, traj.state, traj.steps, time.perf_counter() - t0)
    h_cells = cell_average_thickness(mesh, setup.model, 0.0)
    active = active_subdomain(mesh, h_cells, cfg.params.h_min)
    problem = LeastSquaresProblem(active, setup.model, Mode.STATIONARY, cfg.order, cfg.quad_degree)
    state = problem.zero_state()
    state.coeffs[:problem.n_vel] = spaces.interpolate(u0, problem.vel).coeffs
    if grad_u0 is not None:
        state.coeffs[problem.n_vel:] = initial_stress(problem, grad_u0)
    state.coeffs[problem.constrained] = 0.0
    res = gauss_newton(problem, state, gn)
    dist = lsq.velocity_l2_distance(problem, res.state, problem.coef["v_o"])
    step = StepLog(1, 0.0, res.iterations, res.functional, res.converged, dist, tuple(res.records))
    if on_step is not None:
        on_step(step, problem, res.state)
    return RunResult(problem, res.state, [step], time.perf_counter() - t0)


def run_experiment(cfg: RunConfig, output: Optional[Path] = None) -> RunResult:
    """Run and write ``log.csv``, ``indicators.csv`` and ``state_<step>.vtk``."""
    out = Path(cfg.output if output is None else output)
    out.mkdir(parents=True, exist_ok=True)

    def on_step(step, problem, state):
        if cfg.vtk == "all":
            io.export_vtk(problem, state, out / f"state_{step.step}.vtk", lsq.local_indicators(problem, state))

    result = solve(cfg, on_step=on_step)
    eta_sq = lsq.local_indicators(result.problem, result.state)
    io.write_log_csv(out / "log.csv", result.steps)
    io.write_indicators_csv(out / "indicators.csv", eta_sq)
    if cfg.vtk == "final":
        io.export_vtk(result.problem, result.state, out / f"state_{result.steps[-1].step}.vtk", eta_sq)
    return result


# --------------------------------------------------------------------------
# convergence studies


@dataclass(frozen=True)
class LevelRecord:
    level: int
    h_max: float
    n_cells: int
    n_dofs: int
    functional: float
    solution_norm_sq: float
    gn_iterations: tuple
    wall_time: float
    error_norm_sq: Optional[float] = None

    @property
    def at_floor(self) -> bool:
        return self.functional <= QUADRATURE_FLOOR * self.solution_norm_sq


@dataclass
class StudyReport:
    levels: list = field(default_factory=list)

    @property
    def slope(self) -> Optional[float]:
        """Least-squares slope of log H against log h_max; None if undefined."""
        if len(self.levels) < 2 or any(r.at_floor for r in self.levels):
            return None
        h = np.log([r.h_max for r in self.levels])
        H = np.log([r.functional for r in self.levels])
        return float(np.polyfit(h, H, 1)[0])

    def rates(self) -> list:
        """Two-point rates between consecutive levels (None for the first)."""
        out = [None]
        for a, b in zip(self.levels, self.levels[1:]):
            if a.at_floor or b.at_floor:
                out.append(None)
            else:
                out.append(math.log(b.functional / a.functional) / math.log(b.h_max / a.h_max))
        return out

    def write_csv(self, path) -> None:
        rows = []
        for r, rate in zip(self.levels, self.rates()):
            rows.append((
                r.level, float(r.h_max), r.n_cells, r.n_dofs, float(r.functional),
                ";".join(str(k) for k in r.gn_iterations), "" if rate is None else float(rate),
            ))
        io.write_csv(path, ("level", "h_max", "n_cells", "n_dofs", "functional", "gn_iterations", "rate"), rows)


def run_convergence_study(cfg: RunConfig, levels: Optional[int] = None, output: Optional[Path] = None,
                          write: bool = True) -> StudyReport:
    """Solve on ``levels`` meshes, each a uniform refinement of the last."""
    levels = cfg.levels if levels is None else levels
    if levels < 1:
        raise ValueError("need at least one level")
    setup = build_setup(cfg)
    mesh = build_mesh(cfg)
    report = StudyReport()
    for level in range(levels):
        if level:
            mesh = uniform_refine(mesh)
        res = solve(cfg, mesh=mesh, setup=setup)
        norm = lsq.solution_norm_sq(res.problem, res.state)
        err = None
        if setup.exact is not None:
            err = lsq.solution_norm_sq(res.problem, res.state, setup.exact.callables())
        rec = LevelRecord(
            level, res.problem.mesh.h_max(), res.problem.mesh.n_cells, res.problem.n_dofs,
            res.functional, norm, tuple(s.gn_iterations for s in res.steps), res.wall_time, err,
        )
        log.info("level %d: h_max=%.4g H=%.6e (%d dofs, %.1fs)", level, rec.h_max, rec.functional,
                 rec.n_dofs, rec.wall_time)
        report.levels.append(rec)
    if write:
        out = Path(cfg.output if output is None else output)
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "study.csv")
    return report
