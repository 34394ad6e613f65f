"""Run configuration: INI-style key = value file with sections."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .problems import REGISTRY

# (section, key, default, comment)
_SCHEMA = [
    ("problem", "name", "KITE", "KITE | KITE_G0 | CIRCLE_STATIC"),
    ("problem", "nu", 1.0, "diffusion coefficient"),
    ("problem", "T", 1.0, "final time"),
    ("discretization", "k", 2, "polynomial order of the solution space (1..4)"),
    ("discretization", "q", 2, "geometry order of the deformation (1..4)"),
    ("discretization", "r", 2, "BDF order (1..3)"),
    ("discretization", "form", "EXPERIMENT", "EXPERIMENT | ANALYSIS bilinear form"),
    ("discretization", "c_gamma", 0.1, "ghost-penalty constant, gamma = c_gamma * K"),
    ("discretization", "delta_safety", 1.1, "delta = delta_safety * dt * |w|_inf"),
    ("discretization", "c_lambda", 0.5, "deformation search bracket |d| <= c_lambda * h"),
    ("discretization", "k_override", "", "fixed path length K (empty: measured)"),
    ("discretization", "quad_degree", "", "quadrature exactness (empty: 2k+2)"),
    ("flags", "skip_plus_layers", False, "do not grow active sets by r element layers"),
    ("flags", "oswald_inset_only", True, "transfer averages over target elements only"),
    ("flags", "startup", "INTERPOLATE", "INTERPOLATE | BOOTSTRAP"),
    ("flags", "solver", "DIRECT", "DIRECT | ITERATIVE"),
    ("flags", "repair_inversions", True, "damp the deformation on inverted elements"),
    ("flags", "refuse_small_dt", True, "abort when h^4/(nu dt) > 1 (else warn)"),
    ("refinement", "h0", 0.25, "initial mesh size"),
    ("refinement", "dt0", 1.0, "initial time step"),
    ("refinement", "lx_min", 0, ""),
    ("refinement", "lx_max", 3, ""),
    ("refinement", "lt_min", 0, ""),
    ("refinement", "lt_max", 5, ""),
    ("output", "directory", "results", "output directory"),
    ("output", "vtk", False, "write final-state VTK files"),
]


@dataclass
class RunConfig:
    name: str = "KITE"
    nu: float = 1.0
    T: float = 1.0
    k: int = 2
    q: int = 2
    r: int = 2
    form: str = "EXPERIMENT"
    c_gamma: float = 0.1
    delta_safety: float = 1.1
    c_lambda: float = 0.5
    k_override: int | None = None
    quad_degree: int | None = None
    skip_plus_layers: bool = False
    oswald_inset_only: bool = True
    startup: str = "INTERPOLATE"
    solver: str = "DIRECT"
    repair_inversions: bool = True
    refuse_small_dt: bool = True
    h0: float = 0.25
    dt0: float = 1.0
    lx_min: int = 0
    lx_max: int = 3
    lt_min: int = 0
    lt_max: int = 5
    directory: str = "results"
    vtk: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.name.upper() not in REGISTRY:
            raise ValueError(f"unknown problem {self.name!r}")
        if not 1 <= self.k <= 4 or not 1 <= self.q <= 4:
            raise ValueError("k and q must lie in 1..4")
        if self.r not in (1, 2, 3):
            raise ValueError("r must be 1, 2 or 3")
        if self.lx_min > self.lx_max or self.lt_min > self.lt_max:
            raise ValueError("empty refinement range")
        if self.lx_min < 0 or self.lt_min < 0:
            raise ValueError("refinement levels must be non-negative")
        if self.form not in ("EXPERIMENT", "ANALYSIS"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.startup not in ("INTERPOLATE", "BOOTSTRAP"):
            raise ValueError(f"unknown startup policy {self.startup!r}")
        if self.h0 <= 0 or self.dt0 <= 0 or self.T <= 0 or self.nu <= 0:
            raise ValueError("h0, dt0, T and nu must be positive")

    def to_ini(self, comments: bool = True) -> str:
        lines, section = [], None
        for sec, key, _, comment in _SCHEMA:
            if sec != section:
                lines.append(("\n" if lines else "") + f"[{sec}]")
                section = sec
            val = getattr(self, key)
            val = "" if val is None else val
            if comments and comment:
                lines.append(f"# {comment}")
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if raw == "":
        return None
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_KIND = {"int": int, "float": float, "bool": bool, "str": str,
         "int | None": int, "float | None": float}


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string(text)
    known = {key for _, key, _, _ in _SCHEMA}
    values = {}
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            if key not in known:
                raise ValueError(f"unknown config key {sec}.{key}")
            values[key] = _convert(_KIND[_TYPES[key]], raw)
    values = {k: v for k, v in values.items() if v is not None or _TYPES[k].endswith("None")}
    return RunConfig(**values)
