"""Global finite element spaces: dof maps, interpolation, evaluation.

Two kinds of space are supported:

* ``lagrange``: continuous P1/P2, ``ncomp`` components (velocity), dofs
  constrained to zero on DIRICHLET edges;
* ``rt``: Raviart-Thomas RT0/RT1 applied row-wise to ``ncomp`` rows
  (stress), normal-trace dofs constrained to zero on NEUMANN edges.

Component ``c`` of a space occupies the contiguous block
``[c * n_scalar, (c + 1) * n_scalar)`` of the coefficient vector.

RT edge dofs are moments of ``q . n_e`` against ``1`` and ``2s - 1`` where
``n_e`` and the edge parameter ``s`` follow the global edge orientation.
Reversing an edge flips the first moment and leaves the second alone,
so the first carries the per-cell edge sign and the second carries +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elements
from .mesh import DIRICHLET, NEUMANN, Triangulation
from .quadrature import QuadratureRule, gauss_interval, make_quadrature

LAGRANGE = "lagrange"
RT = "rt"


@dataclass(frozen=True)
class SpaceDescriptor:
    kind: str
    order: int
    constrained_tag: str
    ncomp: int = 2

    def __post_init__(self):
        if self.kind == LAGRANGE and self.order not in (1, 2):
            raise ValueError("Lagrange order must be 1 or 2")
        if self.kind == RT and self.order not in (0, 1):
            raise ValueError("Raviart-Thomas order must be 0 or 1")
        if self.kind not in (LAGRANGE, RT):
            raise ValueError(f"unknown space kind {self.kind!r}")

    @property
    def local_dim(self) -> int:
        if self.kind == LAGRANGE:
            return 3 if self.order == 1 else 6
        return elements.rt_dim(self.order)


def velocity_space(k: int = 2) -> SpaceDescriptor:
    return SpaceDescriptor(LAGRANGE, k, DIRICHLET)


def stress_space(ell: int = 1) -> SpaceDescriptor:
    return SpaceDescriptor(RT, ell, NEUMANN)


@dataclass(frozen=True, eq=False)
class DofMap:
    space: SpaceDescriptor
    mesh: Triangulation
    n_scalar: int
    scalar_dofs: np.ndarray  # (M, nb)
    scalar_signs: np.ndarray  # (M, nb)
    constrained: np.ndarray  # sorted global indices over all components

    @property
    def n_dofs(self) -> int:
        return self.space.ncomp * self.n_scalar

    @property
    def cell_dofs(self) -> np.ndarray:
        """(M, ncomp * nb) global indices, component-major."""
        return np.concatenate(
            [self.scalar_dofs + c * self.n_scalar for c in range(self.space.ncomp)], axis=1
        )

    @property
    def cell_signs(self) -> np.ndarray:
        return np.tile(self.scalar_signs, (1, self.space.ncomp))

    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained] = False
        return mask


def build_dofmap(space: SpaceDescriptor, T: Triangulation) -> DofMap:
    M = T.n_cells
    tagged = T.edges_with_tag(space.constrained_tag)
    if space.kind == LAGRANGE:
        if space.order == 1:
            dofs = T.cells.copy()
            n_scalar = T.n_points
            nodes = np.unique(T.edges[tagged]) if len(tagged) else np.array([], dtype=int)
        else:
            dofs = np.concatenate([T.cells, T.n_points + T.cell_edges], axis=1)
            n_scalar = T.n_points + T.n_edges
            if len(tagged):
                nodes = np.concatenate([np.unique(T.edges[tagged]), T.n_points + tagged])
            else:
                nodes = np.array([], dtype=int)
        signs = np.ones_like(dofs, dtype=np.int8)
        scalar_constrained = np.sort(nodes)
    else:
        ell = space.order
        per_edge = ell + 1
        cols, sgn = [], []
        for k in range(3):
            for j in range(per_edge):
                cols.append(per_edge * T.cell_edges[:, k] + j)
                sgn.append(T.cell_edge_signs[:, k] if j == 0 else np.ones(M, dtype=np.int8))
        n_scalar = per_edge * T.n_edges
        if ell == 1:
            for i in range(2):
                cols.append(n_scalar + 2 * np.arange(M) + i)
                sgn.append(np.ones(M, dtype=np.int8))
            n_scalar += 2 * M
        dofs = np.stack(cols, axis=1)
        signs = np.stack(sgn, axis=1).astype(np.int8)
        scalar_constrained = np.sort((per_edge * tagged[:, None] + np.arange(per_edge)).ravel())
    constrained = np.concatenate([scalar_constrained + c * n_scalar for c in range(space.ncomp)])
    for arr in (dofs, signs, constrained):
        arr.setflags(write=False)
    return DofMap(space, T, n_scalar, dofs, signs, constrained.astype(np.int64))


@dataclass(eq=False)
class FeFunction:
    dofmap: DofMap
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = np.zeros(self.dofmap.n_dofs)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.dofmap.n_dofs,):
            raise ValueError("coefficient vector has the wrong length")

    @property
    def space(self) -> SpaceDescriptor:
        return self.dofmap.space

    def component(self, c: int) -> np.ndarray:
        n = self.dofmap.n_scalar
        return self.coeffs[c * n:(c + 1) * n]


# --------------------------------------------------------------------------
# reference tables


def reference_basis(space: SpaceDescriptor, ref_points):
    if space.kind == LAGRANGE:
        return elements.lagrange_basis(space.order, ref_points)
    return elements.rt_basis(space.order, ref_points)


@dataclass(frozen=True, eq=False)
class CellTables:
    """Physical basis data of one scalar space at all quadrature points.

    Lagrange: ``values`` (M, nq, nb), ``derivs`` gradients (M, nq, nb, 2).
    RT: ``values`` (M, nq, nb, 2), ``derivs`` divergences (M, nq, nb).
    Signs are already folded in, so local coefficients are global ones.
    """

    dofmap: DofMap
    rule: QuadratureRule
    points: np.ndarray  # (M, nq, 2)
    weights: np.ndarray  # (M, nq) quadrature weight times |det J|
    values: np.ndarray
    derivs: np.ndarray


def tabulate(dofmap: DofMap, rule: QuadratureRule) -> CellTables:
    T = dofmap.mesh
    J, off, det = T.jacobians()
    pts = off[:, None, :] + np.einsum("mij,qj->mqi", J, rule.points)
    wts = rule.weights[None, :] * det[:, None]
    vals, ders = reference_basis(dofmap.space, rule.points)
    sgn = dofmap.scalar_signs.astype(float)
    if dofmap.space.kind == LAGRANGE:
        Jinv_T = np.linalg.inv(J).transpose(0, 2, 1)
        values = np.broadcast_to(vals, (T.n_cells,) + vals.shape)
        derivs = np.einsum("mij,qbj->mqbi", Jinv_T, ders)
    else:
        values = np.einsum("mij,qbj->mqbi", J, vals) / det[:, None, None, None]
        values = values * sgn[:, None, :, None]
        derivs = ders[None, :, :] / det[:, None, None] * sgn[:, None, :]
    return CellTables(dofmap, rule, pts, wts, values, derivs)


# --------------------------------------------------------------------------
# interpolation


def _call_field(field, pts, ncomp, vector):
    out = np.asarray(field(pts), dtype=float)
    shape = (len(pts), ncomp, 2) if vector else (len(pts), ncomp)
    return out.reshape(shape)


def interpolate(field, dofmap: DofMap, zero_constrained: bool = True) -> FeFunction:
    """Canonical interpolant of ``field`` into the space of ``dofmap``.

    ``field`` maps an (n, 2) array of points to (n, ncomp) values for
    Lagrange spaces and to (n, ncomp, 2) row vectors for RT spaces.
    """
    T = dofmap.mesh
    space = dofmap.space
    nc = space.ncomp
    coeffs = np.zeros((nc, dofmap.n_scalar))
    if space.kind == LAGRANGE:
        if space.order == 1:
            nodes = T.points
        else:
            mids = 0.5 * (T.points[T.edges[:, 0]] + T.points[T.edges[:, 1]])
            nodes = np.vstack([T.points, mids])
        coeffs[:] = _call_field(field, nodes, nc, False).T
    else:
        ell = space.order
        per_edge = ell + 1
        s, ws = gauss_interval(5)
        pa = T.points[T.edges[:, 0]]
        t = T.points[T.edges[:, 1]] - pa
        nds = np.stack([t[:, 1], -t[:, 0]], axis=1)
        pts = pa[:, None, :] + s[None, :, None] * t[:, None, :]
        q = _call_field(field, pts.reshape(-1, 2), nc, True).reshape(T.n_edges, len(s), nc, 2)
        flux = np.einsum("eqcd,ed->ecq", q, nds)
        W = elements.edge_weights(ell, s)
        for j in range(per_edge):
            coeffs[:, j::per_edge][:, :T.n_edges] = np.einsum("ecq,q->ce", flux, ws * W[:, j])
        if ell == 1:
            rule = make_quadrature(6)
            J, off, det = T.jacobians()
            cp = off[:, None, :] + np.einsum("mij,qj->mqi", J, rule.points)
            qc = _call_field(field, cp.reshape(-1, 2), nc, True).reshape(T.n_cells, len(rule), nc, 2)
            mom = np.einsum("mqcd,q,m->mcd", qc, rule.weights, det)
            ref = np.einsum("mij,mcj->mci", np.linalg.inv(J), mom)
            base = per_edge * T.n_edges
            coeffs[:, base:] = ref.transpose(1, 0, 2).reshape(nc, -1)
    f = FeFunction(dofmap, coeffs.ravel())
    if zero_constrained:
        f.coeffs[dofmap.constrained] = 0.0
    return f


# --------------------------------------------------------------------------
# evaluation


def evaluate(f: FeFunction, cell: int, ref_point):
    """Value and derivative of ``f`` on ``cell`` at reference point(s).

    Lagrange: value (..., ncomp), gradient (..., ncomp, 2) with
    ``grad[i, j] = d u_i / d x_j``. RT: value (..., ncomp, 2) (row per
    component), divergence (..., ncomp).
    """
    dm = f.dofmap
    T = dm.mesh
    amap = T.affine_map(cell)
    vals, ders = reference_basis(dm.space, ref_point)
    sgn = dm.scalar_signs[cell].astype(float)
    nc = dm.space.ncomp
    coef = np.stack([f.component(c)[dm.scalar_dofs[cell]] * sgn for c in range(nc)])  # (nc, nb)
    if dm.space.kind == LAGRANGE:
        grads = ders @ np.linalg.inv(amap.jacobian)  # J^{-T} applied to row vectors
        value = vals @ coef.T
        grad = np.einsum("...bj,cb->...cj", grads, coef)
        return value, grad
    pv, pd = elements.piola_push(amap, vals, ders)
    value = np.einsum("...bd,cb->...cd", pv, coef)
    div = pd @ coef.T
    return value, div


def evaluate_at(f: FeFunction, tables: CellTables):
    """Values and derivatives of ``f`` at every quadrature point.

    Returns ``(value, deriv)``; for Lagrange (M, nq, nc) and (M, nq, nc, 2),
    for RT (M, nq, nc, 2) and (M, nq, nc).
    """
    dm = f.dofmap
    nc = dm.space.ncomp
    loc = np.stack([f.component(c)[dm.scalar_dofs] for c in range(nc)], axis=1)  # (M, nc, nb)
    if dm.space.kind == LAGRANGE:
        value = np.einsum("mqb,mcb->mqc", tables.values, loc)
        deriv = np.einsum("mqbj,mcb->mqcj", tables.derivs, loc)
    else:
        value = np.einsum("mqbd,mcb->mqcd", tables.values, loc)
        deriv = np.einsum("mqb,mcb->mqc", tables.derivs, loc)
    return value, deriv
