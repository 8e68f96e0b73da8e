"""Run configuration: line-based ``key = value`` files.

``#`` starts a comment, values are unquoted, vector fields are given per
component (``v_o_x``, ``v_o_y``). Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import exprlang
from .lsq import Mode
from .mesh import TAGS
from .model import PhysicalParams


class ConfigError(ValueError):
    pass


_PARAM_KEYS = {f.name for f in dataclasses.fields(PhysicalParams)}
_REQUIRED_EXPR = ("A", "h", "v_o_x", "v_o_y")
_OPTIONAL_EXPR = ("u0_x", "u0_y", "g_x", "g_y", "u_exact_x", "u_exact_y")


@dataclass(frozen=True)
class RunConfig:
    mesh: str = "square"  # "square" or a mesh file path
    n: int = 8
    length: float = 1.0
    boundary: dict = field(default_factory=lambda: {s: "D" for s in ("left", "right", "bottom", "top")})
    params: PhysicalParams = field(default_factory=PhysicalParams)
    expressions: dict = field(default_factory=dict)  # key -> Expr
    mode: Mode = Mode.TIME_DEPENDENT
    n_steps: int = 1
    tol: float = 1e-4
    max_iter: int = 50
    damping: bool = True
    cg_tol: float = 1e-10
    residual_tol: Optional[float] = None
    order: int = 1
    quad_degree: int = 6
    sigma_init: str = "interpolate"
    output: str = "output"
    levels: int = 3
    vtk: str = "final"
    source: Optional[str] = None

    @property
    def dt(self) -> float:
        return self.params.dt

    def expr(self, key: str):
        return self.expressions.get(key)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _to_int(key, v):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"key '{key}': expected an integer, got {v!r}") from None


def _to_float(key, v):
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"key '{key}': expected a number, got {v!r}") from None


def _to_bool(key, v):
    low = v.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"key '{key}': expected true/false, got {v!r}")


def _choice(key, v, options):
    if v not in options:
        raise ConfigError(f"key '{key}': expected one of {', '.join(options)}, got {v!r}")
    return v


def parse_config(text: str, source: Optional[str] = None) -> RunConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        raw[key] = (value, lineno)
    return _build(raw, source)


def _build(raw, source) -> RunConfig:
    kw = {"source": source}
    params = {}
    exprs = {}
    boundary = {s: "D" for s in ("left", "right", "bottom", "top")}
    simple = {
        "n": _to_int, "n_steps": _to_int, "max_iter": _to_int, "order": _to_int,
        "quad_degree": _to_int, "levels": _to_int,
        "length": _to_float, "tol": _to_float, "cg_tol": _to_float, "residual_tol": _to_float,
        "damping": _to_bool,
    }
    for key, (value, lineno) in raw.items():
        try:
            if key in _PARAM_KEYS:
                params[key] = _to_float(key, value)
            elif key in _REQUIRED_EXPR or key in _OPTIONAL_EXPR:
                try:
                    exprs[key] = exprlang.parse(value)
                except exprlang.ParseError as err:
                    raise ConfigError(f"key '{key}': {err}") from None
            elif key in simple:
                kw[key] = simple[key](key, value)
            elif key == "mesh":
                kw["mesh"] = value
            elif key == "output":
                kw["output"] = value
            elif key == "mode":
                kw["mode"] = Mode(_choice(key, value.lower(), [m.value for m in Mode]))
            elif key == "sigma_init":
                kw["sigma_init"] = _choice(key, value, ("interpolate", "zero"))
            elif key == "vtk":
                kw["vtk"] = _choice(key, value, ("final", "all", "none"))
            elif key.startswith("boundary_") and key[9:] in boundary:
                boundary[key[9:]] = _choice(key, value, TAGS)
            else:
                raise ConfigError(f"unknown key '{key}'")
        except ConfigError as err:
            raise ConfigError(f"line {lineno}: {err}") from None
    for key in _REQUIRED_EXPR:
        if key not in exprs:
            raise ConfigError(f"missing required key '{key}'")
    for a, b in (("u0_x", "u0_y"), ("g_x", "g_y"), ("u_exact_x", "u_exact_y")):
        if (a in exprs) != (b in exprs):
            missing = b if a in exprs else a
            raise ConfigError(f"missing required key '{missing}' (vector fields need both components)")
    for key, value in params.items():
        try:
            PhysicalParams(**{key: value})
        except ValueError as err:
            raise ConfigError(f"line {raw[key][1]}: key '{key}': {err}") from None
    try:
        kw["params"] = PhysicalParams(**params)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    kw["expressions"] = exprs
    kw["boundary"] = boundary
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.n < 1:
        raise ConfigError("key 'n': must be at least 1")
    if cfg.length <= 0:
        raise ConfigError("key 'length': must be positive")
    if cfg.n_steps < 1:
        raise ConfigError("key 'n_steps': must be at least 1")
    if not 0 < cfg.tol < 1:
        raise ConfigError("key 'tol': must lie in (0, 1)")
    if cfg.max_iter < 1:
        raise ConfigError("key 'max_iter': must be at least 1")
    if cfg.order not in (0, 1):
        raise ConfigError("key 'order': must be 0 or 1")
    if not 1 <= cfg.quad_degree <= 8:
        raise ConfigError("key 'quad_degree': must lie in 1..8")
    if cfg.levels < 1:
        raise ConfigError("key 'levels': must be at least 1")
    if "u_exact_x" in cfg.expressions and "g_x" in cfg.expressions:
        raise ConfigError("key 'g_x': not allowed together with u_exact_x (the force is derived)")
    if "u_exact_x" in cfg.expressions and cfg.mode is not Mode.STATIONARY:
        raise ConfigError("key 'u_exact_x': manufactured solutions require mode = stationary")
    if cfg.mesh != "square":
        path = Path(cfg.mesh)
        if cfg.source is not None and not path.is_absolute():
            path = Path(cfg.source).parent / path
        if not path.is_file():
            raise ConfigError(f"key 'mesh': file {cfg.mesh!r} does not exist")


def load_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {str(path)!r}: {err.strerror}") from None
    return parse_config(text, source=str(path))


def mesh_path(cfg: RunConfig) -> Path:
    path = Path(cfg.mesh)
    if cfg.source is not None and not path.is_absolute():
        path = Path(cfg.source).parent / path
    return path
