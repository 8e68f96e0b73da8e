"""Conforming triangulations with tagged boundaries.

Cells are stored counter-clockwise. Local edge ``k`` of a cell is the edge
opposite local vertex ``k``, traversed from vertex ``k+1`` to ``k+2``. Every
edge has a global orientation from its lower to its higher vertex index; the
per-cell edge sign is +1 when the local traversal agrees with it.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIRICHLET = "D"
NEUMANN = "N"
TAGS = (DIRICHLET, NEUMANN)


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Immutable triangle mesh.

    ``edge_cells[e]`` holds the (one or two) adjacent cells, ``-1`` padding
    the second slot on the boundary. ``boundary_tags`` maps boundary edge
    index to ``"D"`` or ``"N"``. ``parent_vertices`` relates the vertices of
    a submesh to the mesh it was cut from (identity otherwise).
    """

    points: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    edge_cells: np.ndarray
    boundary_tags: dict
    parent_vertices: np.ndarray = field(default=None)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return np.array(sorted(e for e, t in self.boundary_tags.items() if t == tag), dtype=int)

    def cell_areas(self) -> np.ndarray:
        return 0.5 * _signed_double_area(self.points, self.cells)

    def edge_lengths(self) -> np.ndarray:
        d = self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def h_max(self) -> float:
        return float(self.edge_lengths().max())

    def centroids(self) -> np.ndarray:
        return self.points[self.cells].mean(axis=1)

    def jacobians(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Affine maps of all cells: ``(J, offset, det)`` with ``J`` of shape (M, 2, 2)."""
        p = self.points[self.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        return J, p[:, 0], det

    def affine_map(self, cell: int) -> "AffineMap":
        J, off, det = self.jacobians()
        return AffineMap(J[cell], off[cell], float(det[cell]))

    def __repr__(self):
        return (
            f"Triangulation({self.n_points} points, {self.n_cells} cells, "
            f"{self.n_edges} edges, {len(self.boundary_tags)} boundary edges)"
        )


@dataclass(frozen=True)
class AffineMap:
    """``x = offset + jacobian @ xhat`` from the reference triangle."""

    jacobian: np.ndarray
    offset: np.ndarray
    det: float

    def __call__(self, ref_points):
        return self.offset + np.asarray(ref_points) @ self.jacobian.T


def _signed_double_area(points, cells):
    p = points[cells]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]


def _resolve_tagger(tagger):
    if isinstance(tagger, str):
        if tagger not in TAGS:
            raise MeshError(f"unknown boundary tag {tagger!r}")
        return lambda i, j, mid: tagger
    if isinstance(tagger, Mapping):
        lookup = {tuple(sorted(k)): v for k, v in tagger.items()}
        return lambda i, j, mid: lookup.get((i, j))
    if callable(tagger):
        return lambda i, j, mid: tagger(mid)
    raise TypeError("tagger must be a tag string, a mapping of vertex pairs, or a callable")


def build_triangulation(points, cells, tagger, parent_vertices=None) -> Triangulation:
    """Build a :class:`Triangulation` and check it.

    ``tagger`` labels boundary edges. It may be a single tag, a mapping
    ``{(i, j): tag}`` over vertex pairs, or a callable receiving the edge
    midpoint. Clockwise cells are reoriented; zero-area cells, edges shared
    by more than two cells, hanging nodes and untagged boundary edges are
    errors.
    """
    points = np.array(points, dtype=float)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    if points.ndim != 2 or points.shape[1] != 2:
        raise MeshError("points must have shape (N, 2)")
    if len(cells) == 0:
        raise MeshError("mesh has no cells")
    if cells.min() < 0 or cells.max() >= len(points):
        raise MeshError("cell references a point index out of range")

    area2 = _signed_double_area(points, cells)
    scale = np.ptp(points, axis=0).max() ** 2 or 1.0
    flip = area2 < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    area2 = np.abs(area2)
    if np.any(area2 <= 1e-14 * scale):
        bad = int(np.flatnonzero(area2 <= 1e-14 * scale)[0])
        raise MeshError(f"degenerate or negatively oriented cell {bad}")

    # local edge k joins local vertices k+1 -> k+2
    a = cells[:, [1, 2, 0]]
    b = cells[:, [2, 0, 1]]
    lo = np.minimum(a, b).ravel()
    hi = np.maximum(a, b).ravel()
    keys = lo * len(points) + hi
    uniq, first, inverse, counts = np.unique(keys, return_index=True, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-conforming mesh: edge shared by more than two cells")
    edges = np.stack([lo[first], hi[first]], axis=1)
    cell_edges = inverse.reshape(-1, 3)
    signs = np.where(a < b, 1, -1).astype(np.int8)

    n_edges = len(edges)
    edge_cells = -np.ones((n_edges, 2), dtype=np.int64)
    cell_of = np.repeat(np.arange(len(cells)), 3)
    flat = cell_edges.ravel()
    seen = np.zeros(n_edges, dtype=np.int64)
    for k in range(len(flat)):
        e = flat[k]
        edge_cells[e, seen[e]] = cell_of[k]
        seen[e] += 1
    # two cells sharing an edge must traverse it in opposite directions
    sgn = signs.ravel()
    s_sum = np.zeros(n_edges, dtype=np.int64)
    np.add.at(s_sum, flat, sgn)
    if np.any((counts == 2) & (s_sum != 0)):
        raise MeshError("non-conforming mesh: inconsistent orientation across an edge")

    bnd = np.flatnonzero(counts == 1)
    _check_hanging_nodes(points, edges[bnd])

    tag_of = _resolve_tagger(tagger)
    tags = {}
    for e in bnd:
        i, j = (int(v) for v in edges[e])
        tag = tag_of(i, j, 0.5 * (points[i] + points[j]))
        if tag is None:
            raise MeshError(f"untagged boundary edge ({i}, {j})")
        if tag not in TAGS:
            raise MeshError(f"unknown boundary tag {tag!r} on edge ({i}, {j})")
        tags[int(e)] = tag

    if parent_vertices is None:
        parent_vertices = np.arange(len(points))
    for arr in (points, cells, edges, cell_edges, signs, edge_cells):
        arr.setflags(write=False)
    return Triangulation(points, cells, edges, cell_edges, signs, edge_cells, tags, np.asarray(parent_vertices))


def _check_hanging_nodes(points, bedges):
    """A vertex lying inside a boundary edge means a T-junction."""
    if len(bedges) == 0:
        return
    bverts = np.unique(bedges)
    P = points[bverts]
    A = points[bedges[:, 0]]
    B = points[bedges[:, 1]]
    d = B - A
    L2 = (d ** 2).sum(axis=1)
    for k in range(len(bedges)):
        r = P - A[k]
        s = r @ d[k] / L2[k]
        cross = r[:, 0] * d[k, 1] - r[:, 1] * d[k, 0]
        inside = (s > 1e-10) & (s < 1 - 1e-10) & (np.abs(cross) <= 1e-10 * L2[k])
        if np.any(inside):
            raise MeshError("non-conforming mesh: hanging node on an edge")


def uniform_refine(T: Triangulation) -> Triangulation:
    """Red refinement: split every cell into four through its edge midpoints."""
    n = T.n_points
    mids = 0.5 * (T.points[T.edges[:, 0]] + T.points[T.edges[:, 1]])
    points = np.vstack([T.points, mids])
    v = T.cells
    m = n + T.cell_edges  # m[:, k] is the midpoint opposite vertex k
    cells = np.concatenate(
        [
            np.stack([v[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([m[:, 2], v[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 1], m[:, 0], v[:, 2]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ]
    )
    # keep children of one parent together for locality
    M = T.n_cells
    order = np.arange(4 * M).reshape(4, M).T.ravel()
    cells = cells[order]
    tags = {}
    for e, tag in T.boundary_tags.items():
        i, j = T.edges[e]
        tags[(int(i), n + e)] = tag
        tags[(int(j), n + e)] = tag
    return build_triangulation(points, cells, tags)


def active_cells(T: Triangulation, h_values, h_min: float) -> np.ndarray:
    h_values = np.asarray(h_values, dtype=float)
    if h_values.shape != (T.n_cells,):
        raise MeshError("need one thickness value per cell")
    if np.any(h_values < 0):
        raise MeshError("ice thickness must be nonnegative")
    return h_values >= h_min


def active_subdomain(T: Triangulation, h_values, h_min: float) -> Triangulation:
    """Submesh of cells with ``h >= h_min``.

    Edges of the original boundary keep their tag; edges exposed by removing
    cells become NEUMANN. Vertex order is preserved so edge orientations and
    hence dof signs agree with the parent mesh.
    """
    keep = active_cells(T, h_values, h_min)
    if not keep.any():
        raise MeshError("empty active set")
    if keep.all():
        return T
    cells = T.cells[keep]
    used = np.unique(cells)
    renum = -np.ones(T.n_points, dtype=np.int64)
    renum[used] = np.arange(len(used))
    tags = {}
    for e in range(T.n_edges):
        c0, c1 = T.edge_cells[e]
        k0 = keep[c0]
        k1 = c1 >= 0 and keep[c1]
        i, j = renum[T.edges[e]]
        if c1 < 0 and k0:
            tags[(int(i), int(j))] = T.boundary_tags[e]
        elif c1 >= 0 and k0 != k1:
            tags[(int(i), int(j))] = NEUMANN
    return build_triangulation(
        T.points[used], renum[cells], tags, parent_vertices=T.parent_vertices[used]
    )


def square_mesh(n: int, length: float = 1.0, tags=DIRICHLET, origin=(0.0, 0.0)) -> Triangulation:
    """``n x n`` squares, each cut by its lower-left to upper-right diagonal.

    ``tags`` is one tag for the whole boundary or a mapping with keys
    ``left``, ``right``, ``bottom``, ``top``.
    """
    if n < 1:
        raise MeshError("need at least one cell per side")
    s = np.linspace(0.0, length, n + 1)
    X, Y = np.meshgrid(s, s)
    points = np.stack([X.ravel(), Y.ravel()], axis=1) + np.asarray(origin, dtype=float)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    cells = np.stack([np.stack([a, b, c], 1), np.stack([a, c, d], 1)], axis=1).reshape(-1, 3)
    if isinstance(tags, str):
        tagger = tags
    else:
        x0, y0 = origin
        tol = 1e-9 * length

        def tagger(mid):
            if abs(mid[0] - x0) < tol:
                return tags["left"]
            if abs(mid[0] - x0 - length) < tol:
                return tags["right"]
            if abs(mid[1] - y0) < tol:
                return tags["bottom"]
            return tags["top"]

    return build_triangulation(points, cells, tagger)


# --------------------------------------------------------------------------
# text format


def write_mesh(T: Triangulation, path) -> None:
    lines = ["mesh2d 1", f"points {T.n_points}"]
    lines += [f"{x!r} {y!r}" for x, y in T.points.tolist()]
    lines.append(f"cells {T.n_cells}")
    lines += [f"{i} {j} {k}" for i, j, k in T.cells.tolist()]
    lines.append(f"boundary {len(T.boundary_tags)}")
    for e in sorted(T.boundary_tags):
        i, j = T.edges[e]
        lines.append(f"{i} {j} {T.boundary_tags[e]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mesh(path) -> Triangulation:
    """Read the line-based ``mesh2d 1`` format."""
    text = Path(path).read_text(encoding="utf-8")
    rows = [(n + 1, ln.strip()) for n, ln in enumerate(text.splitlines())]
    rows = [(n, ln) for n, ln in rows if ln]
    it = iter(rows)

    def next_row(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file while reading {what}") from None

    def section(name):
        lineno, ln = next_row(name)
        parts = ln.split()
        if len(parts) != 2 or parts[0] != name or not parts[1].isdigit():
            raise MeshError(f"line {lineno}: expected '{name} <count>', got {ln!r}")
        return int(parts[1])

    def body(count, width, conv, what):
        out = []
        for _ in range(count):
            lineno, ln = next_row(what)
            parts = ln.split()
            if len(parts) != width:
                raise MeshError(f"line {lineno}: unrecognized {what} line {ln!r}")
            try:
                out.append(conv(parts))
            except ValueError:
                raise MeshError(f"line {lineno}: unrecognized {what} line {ln!r}") from None
        return out

    lineno, header = next_row("header")
    if header.split() != ["mesh2d", "1"]:
        raise MeshError(f"line {lineno}: expected header 'mesh2d 1'")
    points = body(section("points"), 2, lambda p: [float(p[0]), float(p[1])], "point")
    cells = body(section("cells"), 3, lambda p: [int(v) for v in p], "cell")

    def bconv(p):
        if p[2] not in TAGS:
            raise ValueError
        return (int(p[0]), int(p[1])), p[2]

    boundary = body(section("boundary"), 3, bconv, "boundary")
    for lineno, ln in it:
        raise MeshError(f"line {lineno}: unrecognized line {ln!r}")
    tags = dict(boundary)
    T = build_triangulation(np.array(points).reshape(-1, 2), cells, tags)
    if len(tags) != len(T.boundary_tags):
        raise MeshError("boundary section lists edges that are not on the boundary")
    return T
