"""CSV and legacy VTK output."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import spaces
from .lsq import LeastSquaresProblem, State


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_log_csv(path, step_logs) -> None:
    """One row per Gauss-Newton iteration."""
    rows = []
    for s in step_logs:
        if not s.records:
            rows.append((s.step, 0, float(s.functional), "", float(s.u_minus_vo_norm)))
        for rec in s.records:
            rows.append((s.step, rec.iteration, float(rec.functional), float(rec.tau_stop), float(s.u_minus_vo_norm)))
    write_csv(path, ("step", "gn_iter", "functional", "tau_stop", "u_minus_vo_norm"), rows)


def write_indicators_csv(path, indicators) -> None:
    write_csv(path, ("cell_index", "eta_sq"), ((i, float(v)) for i, v in enumerate(indicators)))


def export_vtk(problem: LeastSquaresProblem, state: State, path, indicators=None) -> None:
    """Legacy ASCII VTK of the active mesh.

    Point data: velocity at the vertices. Cell data: cell-averaged stress
    components and, if given, the error indicator.
    """
    T = problem.mesh
    u = spaces.FeFunction(problem.vel, state.coeffs[:problem.n_vel])
    vx = u.component(0)[:T.n_points]
    vy = u.component(1)[:T.n_points]
    _, _, s, _ = problem.fields(state)
    W = problem.vt.weights
    avg = np.einsum("mq,mqij->mij", W, s) / W.sum(axis=1)[:, None, None]
    lines = [
        "# vtk DataFile Version 3.0",
        "icefem state",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {T.n_points} double",
    ]
    lines += [f"{x!r} {y!r} 0.0" for x, y in T.points.tolist()]
    lines.append(f"CELLS {T.n_cells} {4 * T.n_cells}")
    lines += [f"3 {i} {j} {k}" for i, j, k in T.cells.tolist()]
    lines.append(f"CELL_TYPES {T.n_cells}")
    lines += ["5"] * T.n_cells
    lines.append(f"POINT_DATA {T.n_points}")
    lines.append("VECTORS velocity double")
    lines += [f"{a!r} {b!r} 0.0" for a, b in zip(vx.tolist(), vy.tolist())]
    lines.append(f"CELL_DATA {T.n_cells}")
    names = {(0, 0): "sigma_xx", (0, 1): "sigma_xy", (1, 0): "sigma_yx", (1, 1): "sigma_yy"}
    for (i, j), name in names.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in avg[:, i, j].tolist()]
    if indicators is not None:
        lines += ["SCALARS indicator double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in indicators]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_vtk_arrays(path) -> dict:
    """Minimal reader for files written by :func:`export_vtk` (used in tests)."""
    toks = Path(path).read_text(encoding="ascii").split("\n")
    out = {}
    i = 0
    while i < len(toks):
        parts = toks[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(v) for v in toks[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([[int(v) for v in toks[i + 1 + k].split()[1:]] for k in range(n)])
            i += n + 1
        elif parts[0] == "VECTORS":
            n = len(out["points"])
            out[parts[1]] = np.array([[float(v) for v in toks[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif parts[0] == "SCALARS":
            n = len(out["cells"])
            out[parts[1]] = np.array([float(toks[i + 2 + k]) for k in range(n)])
            i += n + 2
        else:
            i += 1
    return out
