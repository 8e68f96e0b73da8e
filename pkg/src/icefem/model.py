"""Physical parameters, viscosity, time-step scaling and ocean drag."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class PhysicalParams:
    """Standard sea-ice values in SI units.

    ``P_star`` is the compressive strength (Pa), ``c_m`` the maximum creep
    (1/s), ``C_hard`` the compaction hardening exponent.
    """

    rho: float = 900.0
    rho_o: float = 1028.0
    C_o: float = 5e-3
    P_star: float = 25e3
    c_m: float = 2e-9
    C_hard: float = 20.0
    h_min: float = 0.05
    dt: float = 600.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            # C_o = 0 switches the drag off and leaves a linear problem
            if not math.isfinite(v) or v < 0 or (v == 0 and f.name != "C_o"):
                raise ValueError(f"parameter {f.name} must be positive, got {v!r}")

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DerivedBounds:
    eta_min: float
    eta_max: float
    beta_min: float
    beta_max: float


def derived_bounds(params: PhysicalParams, h_max: float) -> DerivedBounds:
    return DerivedBounds(
        eta_min=params.h_min * params.P_star * math.exp(-params.C_hard) / params.c_m,
        eta_max=h_max * params.P_star / params.c_m,
        beta_min=params.dt / (h_max * params.rho),
        beta_max=params.dt / (params.h_min * params.rho),
    )


def _check_thickness(h, params):
    if np.any(np.asarray(h) < params.h_min):
        raise ValueError(f"thickness below h_min = {params.h_min}")


def eta(A_val, h_val, params: PhysicalParams):
    """Shear viscosity ``h P* exp(C (A - 1)) / c_m`` in Pa s m."""
    A_val = np.asarray(A_val, dtype=float)
    if np.any((A_val < 0) | (A_val > 1)) or np.any(np.isnan(A_val)):
        raise ValueError("ice concentration outside [0, 1]")
    _check_thickness(h_val, params)
    out = np.asarray(h_val) * params.P_star / params.c_m * np.exp(params.C_hard * (A_val - 1.0))
    return float(out) if out.ndim == 0 else out


def beta(h_val, params: PhysicalParams):
    """Time-step scaling ``dt / (h rho)``."""
    _check_thickness(h_val, params)
    out = params.dt / (np.asarray(h_val, dtype=float) * params.rho)
    return float(out) if out.ndim == 0 else out


def ocean_drag(u_val, v_o_val, params: PhysicalParams):
    """Quadratic water stress ``rho_o C_o |w| w`` with ``w = u - v_o``.

    Works on (..., 2) arrays.
    """
    w = np.asarray(u_val, dtype=float) - np.asarray(v_o_val, dtype=float)
    speed = np.linalg.norm(w, axis=-1, keepdims=True)
    return params.rho_o * params.C_o * speed * w


def drag_jacobian(u_val, v_o_val, params: PhysicalParams):
    """Jacobian of :func:`ocean_drag` in ``u``: ``rho_o C_o (|w| I + w w^T / |w|)``.

    Zero where ``w = 0``, which is the derivative of ``|w| w`` there.
    """
    w = np.asarray(u_val, dtype=float) - np.asarray(v_o_val, dtype=float)
    speed = np.linalg.norm(w, axis=-1)
    safe = np.where(speed > 0, speed, 1.0)
    outer = w[..., :, None] * w[..., None, :] / safe[..., None, None]
    K = speed[..., None, None] * np.eye(2) + outer
    return params.rho_o * params.C_o * K


def ocean_drag_derivative(u_val, v_o_val, direction, params: PhysicalParams):
    """Directional derivative of the ocean drag along ``direction``."""
    K = drag_jacobian(u_val, v_o_val, params)
    return np.einsum("...ij,...j->...i", K, np.asarray(direction, dtype=float))


Field = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class CoefficientFields:
    """Prescribed fields as callables ``f(x, y, t)`` on arrays.

    ``v_o`` and the optional body force ``g`` return (..., 2) arrays.
    """

    A: Field
    h: Field
    v_o: Field
    g: Optional[Field] = None


@dataclass(frozen=True)
class ModelData:
    params: PhysicalParams
    fields: CoefficientFields

    def sample(self, points: np.ndarray, t: float):
        """Evaluate coefficients at ``points`` (..., 2).

        Returns a dict with ``A``, ``h``, ``eta``, ``beta``, ``v_o`` and
        ``g``. Thickness is raised to ``h_min`` at points of active cells
        that dip below it, since activity is decided per cell.
        """
        x, y = points[..., 0], points[..., 1]
        A = np.broadcast_to(np.asarray(self.fields.A(x, y, t), dtype=float), x.shape)
        h = np.broadcast_to(np.asarray(self.fields.h(x, y, t), dtype=float), x.shape)
        h = np.maximum(h, self.params.h_min)
        v_o = np.broadcast_to(np.asarray(self.fields.v_o(x, y, t), dtype=float), points.shape)
        if self.fields.g is None:
            g = np.zeros(points.shape)
        else:
            g = np.broadcast_to(np.asarray(self.fields.g(x, y, t), dtype=float), points.shape)
        return {
            "A": A,
            "h": h,
            "eta": eta(A, h, self.params),
            "beta": beta(h, self.params),
            "v_o": v_o,
            "g": g,
        }
