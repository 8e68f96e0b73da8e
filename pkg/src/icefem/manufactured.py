"""Symbolic forcing and exact fields for manufactured stationary solutions.

Given expressions for ``A``, ``h``, ``v_o`` and a velocity ``u*``, the stress
is ``sigma* = 2 eta eps(u*)`` and the body force that makes ``(u*, sigma*)``
an exact zero of the stationary residual is ``g = tau_o(u*) - div sigma*``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprlang as ex
from .model import PhysicalParams

X, Y = "x", "y"


@dataclass(frozen=True)
class ManufacturedSolution:
    u: tuple  # (Expr, Expr)
    grad_u: tuple  # ((du1/dx, du1/dy), (du2/dx, du2/dy))
    sigma: tuple  # 2x2 nested Exprs
    div_sigma: tuple
    g: tuple

    def callables(self, t: float = 0.0) -> dict:
        """Point-array callables for :func:`icefem.lsq.solution_norm_sq`."""

        def vec(exprs):
            return lambda p: np.stack([ex.evaluate(e, p[..., 0], p[..., 1], t) for e in exprs], axis=-1)

        def mat(exprs):
            return lambda p: np.stack([vec(row)(p) for row in exprs], axis=-2)

        return {
            "u": vec(self.u),
            "grad_u": mat(self.grad_u),
            "sigma": mat(self.sigma),
            "div_sigma": vec(self.div_sigma),
        }


def viscosity_expr(A, h, params: PhysicalParams):
    scale = ex.num(params.P_star / params.c_m)
    return ex.mul(ex.mul(h, scale), ex.call("exp", ex.mul(ex.num(params.C_hard), ex.sub(A, ex.Num(1.0)))))


def drag_expr(u, v_o, params: PhysicalParams):
    w = [ex.sub(u[i], v_o[i]) for i in range(2)]
    speed = ex.call("sqrt", ex.add(ex.BinOp("^", w[0], ex.Num(2.0)), ex.BinOp("^", w[1], ex.Num(2.0))))
    k = ex.num(params.rho_o * params.C_o)
    return tuple(ex.mul(ex.mul(k, speed), w[i]) for i in range(2))


def manufacture(u, A, h, v_o, params: PhysicalParams) -> ManufacturedSolution:
    """Build the exact stress and matching body force for velocity ``u``."""
    grad = tuple(tuple(ex.diff(u[i], var) for var in (X, Y)) for i in range(2))
    two_eta = ex.mul(ex.Num(2.0), viscosity_expr(A, h, params))
    sigma = tuple(
        tuple(ex.mul(two_eta, ex.mul(ex.Num(0.5), ex.add(grad[i][j], grad[j][i]))) for j in range(2))
        for i in range(2)
    )
    div = tuple(ex.add(ex.diff(sigma[i][0], X), ex.diff(sigma[i][1], Y)) for i in range(2))
    drag = drag_expr(u, v_o, params)
    g = tuple(ex.sub(drag[i], div[i]) for i in range(2))
    return ManufacturedSolution(tuple(u), grad, sigma, div, g)
