"""Run configuration: a flat ``key = value`` text format.

Grammar, one entry per line::

    # comment (also after a value)
    key = value

Keys are the dotted names in :data:`FIELDS`; each may appear once.
Tuples are comma separated.  Angles are given in degrees and converted
to radians on access.  Unknown keys, bad values and duplicates raise
:class:`ConfigError` naming the line and the field.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .domain import ConvexDomain
from .errors import ConfigError
from .io import format_value

DOMAIN_KINDS = ("ball", "ellipsoid", "superquadric")


def _floats(text):
    return tuple(float(x) for x in text.split(","))


@dataclass(frozen=True)
class RunConfig:
    domain_kind: str = "ball"
    domain_radii: tuple = (1.0,)
    domain_exponent: float = 4.0
    theta: float = 60.0
    resolution: int = 64
    seed: int = 0
    axis: tuple = (0.0, 0.0, 1.0)
    flow_max_steps: int = 2000
    flow_grad_tol: float = 1e-6
    flow_step_init: float = 0.5
    solve_bump: float = 0.02
    sweep_slices: int = 101
    minmax_max_outer: int = 8
    minmax_tol_m0: float = 1e-4
    monotonicity_points: int = 5
    monotonicity_radii: int = 8
    stability_eigenvalues: int = 6
    stability_tol: float = 0.05
    blowup_resolution: int = 128
    fb_n: int = 129
    fb_tol: float = 1e-8
    fb_offset: float = 0.0

    @property
    def theta_rad(self):
        return math.radians(self.theta)

    @property
    def a(self):
        return math.cos(self.theta_rad)

    def domain(self):
        r = self.domain_radii
        if self.domain_kind == "ball":
            return ConvexDomain.ball(r[0])
        radii = r * 3 if len(r) == 1 else r
        if self.domain_kind == "ellipsoid":
            return ConvexDomain.ellipsoid(radii)
        return ConvexDomain.superquadric(radii, exponent=self.domain_exponent)

    def items(self):
        for f in fields(self):
            yield f.name.replace("_", ".", 1) if f.name in _DOTTED else f.name, getattr(self, f.name)

    def canonical_text(self):
        return "".join(f"{k}={format_value(v)}\n" for k, v in sorted(self.items()))

    def hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


_SECTIONS = ("domain", "flow", "solve", "sweep", "minmax", "monotonicity", "stability",
             "blowup", "fb")
_DOTTED = {f.name for f in fields(RunConfig) if f.name.split("_", 1)[0] in _SECTIONS}
FIELDS = {(n.replace("_", ".", 1) if n in _DOTTED else n): n
          for n in (f.name for f in fields(RunConfig))}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name, text):
    kind = _TYPES[name]
    if kind == "tuple":
        return _floats(text)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def validate(cfg, lines=None):
    """Raise ConfigError for the first invalid field."""
    lines = lines or {}

    def fail(name, msg):
        key = next(k for k, v in FIELDS.items() if v == name)
        raise ConfigError(msg, line=lines.get(name), field=key)

    if not (math.isfinite(cfg.theta) and 0.0 < cfg.theta < 90.0):
        fail("theta", f"theta must lie strictly between 0 and 90 degrees, got {cfg.theta}")
    if cfg.resolution < 8:
        fail("resolution", f"resolution must be at least 8, got {cfg.resolution}")
    if cfg.domain_kind not in DOMAIN_KINDS:
        fail("domain_kind", f"domain kind must be one of {', '.join(DOMAIN_KINDS)}")
    if len(cfg.domain_radii) not in (1, 3) or min(cfg.domain_radii) <= 0:
        fail("domain_radii", "radii must be one or three positive numbers")
    if cfg.domain_kind == "superquadric" and cfg.domain_exponent < 2:
        fail("domain_exponent", "superquadric exponent must be at least 2")
    if len(cfg.axis) != 3 or math.hypot(*cfg.axis) == 0:
        fail("axis", "axis must be a nonzero 3-vector")
    if cfg.seed < 0:
        fail("seed", "seed must be nonnegative")
    positive = ("flow_max_steps", "flow_grad_tol", "flow_step_init", "minmax_max_outer",
                "monotonicity_points", "stability_eigenvalues", "stability_tol", "fb_tol")
    for name in positive:
        if not getattr(cfg, name) > 0:
            fail(name, "must be positive")
    if cfg.sweep_slices < 3:
        fail("sweep_slices", "a sweepout needs at least 3 slices")
    if cfg.monotonicity_radii < 2:
        fail("monotonicity_radii", "need at least 2 radii")
    if cfg.blowup_resolution < 8:
        fail("blowup_resolution", "resolution must be at least 8")
    if cfg.fb_n < 5 or (cfg.fb_n - 1) % 2:
        fail("fb_n", "grid size must be odd and at least 5")
    if cfg.minmax_tol_m0 < 0 or cfg.solve_bump < 0:
        fail("minmax_tol_m0" if cfg.minmax_tol_m0 < 0 else "solve_bump", "must be nonnegative")
    return cfg


def parse_config(text):
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", line=lineno)
        if key not in FIELDS:
            raise ConfigError("unknown key", line=lineno, field=key)
        name = FIELDS[key]
        if name in values:
            raise ConfigError(f"duplicate key (first on line {lines[name]})", line=lineno, field=key)
        try:
            values[name] = _convert(name, value)
        except ValueError:
            raise ConfigError(f"cannot parse {value!r} as {_TYPES[name]}", line=lineno,
                              field=key) from None
        lines[name] = lineno
    return validate(RunConfig(**values), lines)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def with_overrides(cfg, **kw):
    return validate(replace(cfg, **kw))


def config_text(cfg):
    """Config back to the file grammar (round-trips through parse_config)."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.items())
