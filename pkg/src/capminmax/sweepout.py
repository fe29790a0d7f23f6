"""Plane sweepouts of a ball, min-max over a family and the lower bound.

A family is a list of explicit slices.  Slice ``i`` at parameter ``t_i``
encloses the region between its wall patch and its flat disk, whose volume
fraction runs from 0 to 1 along the sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .domain import BALL
from .energy import capillarity_energy, energy_gradient
from .flow import FlowOptions, Region, freeze_blend, local_relax
from .surface import build_disk_cap

CONVERGED = "Converged"
NO_PROGRESS = "NoProgress"


def mesh_scale(domain, resolution):
    """Longest edge of the equatorial disk-cap at this resolution."""
    return build_disk_cap(domain, (0.0, 0.0, 1.0), 0.0, math.pi / 3, resolution).max_edge_length()


@dataclass
class SweepoutFamily:
    t: np.ndarray
    slices: list
    volume_fractions: np.ndarray
    F_values: np.ndarray
    container_volume: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.slices)

    @property
    def argmax(self):
        return int(np.argmax(self.F_values))

    def max_jump(self):
        return float(np.max(np.abs(np.diff(self.volume_fractions)))) if len(self) > 1 else 0.0

    def problems(self, delta_vol, tol=1e-3):
        """Violated family invariants as readable strings (empty if valid)."""
        out = []
        if abs(self.volume_fractions[0]) > tol:
            out.append(f"volume fraction at t=0 is {self.volume_fractions[0]:.3e}")
        if abs(self.volume_fractions[-1] - 1.0) > tol:
            out.append(f"volume fraction at t=1 is {self.volume_fractions[-1]:.6f}")
        if self.max_jump() > delta_vol:
            out.append(f"volume jump {self.max_jump():.3e} exceeds {delta_vol:.3e}")
        for i, (s, F) in enumerate(zip(self.slices, self.F_values)):
            if capillarity_energy(s).F_a != F:
                out.append(f"slice {i} energy is stale")
        return out

    def with_slices(self, replacements):
        """New family with ``{index: pair}`` swapped in and energies refreshed."""
        slices = list(self.slices)
        for i, p in replacements.items():
            slices[i] = p
        return _assemble(self.t, slices, self.container_volume, self.meta)

    def rows(self):
        return [(float(t), float(v), float(F))
                for t, v, F in zip(self.t, self.volume_fractions, self.F_values)]


def _assemble(t, slices, container_volume, meta):
    vols = np.array([s.enclosed_volume() for s in slices]) / container_volume
    F = np.array([capillarity_energy(s).F_a for s in slices])
    return SweepoutFamily(np.asarray(t, dtype=float), slices, vols, F, container_volume, dict(meta))


def plane_sweep(domain, axis, n_slices, theta, resolution):
    """Disk-caps swept along ``axis`` with near-empty and near-full end slices.

    Interior offsets are uniform in ``[-R + h, R - h]``; the two end slices
    are caps whose contact circle has radius ``2h``.  Volume fractions are
    normalized by the volume enclosed by the full end slice, which is the
    discrete stand-in for the container.
    """
    if domain.kind != BALL:
        raise ValueError("plane sweeps are defined for ball domains")
    if n_slices < 3:
        raise ValueError("a sweepout needs at least 3 slices")
    R = domain.radii[0]
    h = mesh_scale(domain, resolution)
    d_end = math.sqrt(max(R * R - 4 * h * h, 0.0))
    interior = np.linspace(-R + h, R - h, n_slices - 2) if n_slices > 3 else np.array([0.0])
    offsets = np.concatenate([[-d_end], interior, [d_end]])
    slices = [build_disk_cap(domain, axis, d, theta, resolution) for d in offsets]
    container = slices[-1].enclosed_volume()
    t = np.linspace(0.0, 1.0, n_slices)
    meta = {"axis": tuple(float(x) for x in axis), "theta": float(theta),
            "resolution": int(resolution), "h": h, "R": R}
    return _assemble(t, slices, container, meta)


@dataclass
class MinMaxOptions:
    max_outer: int = 8
    tol_m0: float = 1e-4
    eps0_fraction: float = 0.1
    region_fraction: float = 0.3
    blend: float = 0.5
    motion: str = "normal"
    flow: FlowOptions = field(default_factory=lambda: FlowOptions(max_steps=300, grad_tol=1e-4))

    def __post_init__(self):
        if self.max_outer < 1 or self.tol_m0 < 0:
            raise ValueError("max_outer must be >= 1 and tol_m0 >= 0")
        if not (self.region_fraction > 0 and 0 <= self.blend <= 1):
            raise ValueError("region_fraction must be positive and blend in [0, 1]")


@dataclass
class MinMaxResult:
    m0_estimate: float
    critical_slice: object
    critical_t: float
    history: list
    status: str
    family: SweepoutFamily
    regions: list = field(default_factory=list)


def choose_region(pair, domain, fraction):
    """Ball around the vertex with the largest projected gradient."""
    rep = energy_gradient(pair, domain)
    g = np.linalg.norm(rep.grad, axis=1)
    movable = np.zeros(len(g), dtype=bool)
    movable[pair.sigma_vertex_ids] = True
    movable[pair.gamma_vertex_ids] = True
    movable &= ~pair.rim_mask
    g[~movable] = -1.0
    center = pair.vertices[int(np.argmax(g))]
    return Region(center, fraction * domain.bounding_radius)


def minmax(family, domain, options=None):
    """Lower the maximal slice by local relaxation until it stops moving.

    Each outer iteration relaxes the max slice inside a region around its
    worst vertex under the barrier ``eps_k = eps_0 / 2^k``, pulls the two
    neighbors part of the way toward their own relaxed shapes with
    :func:`freeze_blend`, and keeps the result only if the maximum does not
    rise.  End slices are never relaxed.  Relaxations use normal-only
    motion by default, since tangential sliding on a curved wall collapses
    triangles without changing the surface.
    """
    options = options or MinMaxOptions()
    F0 = float(np.max(family.F_values))
    eps0 = options.eps0_fraction * abs(F0)
    history = [(0, F0)]
    regions = []
    status = NO_PROGRESS
    n = len(family)
    for k in range(options.max_outer):
        i = family.argmax
        if i in (0, n - 1):
            status = CONVERGED
            break
        current = family.F_values[i]
        region = choose_region(family.slices[i], domain, options.region_fraction)
        regions.append(region)
        flow = FlowOptions(**{**vars(options.flow), "barrier_epsilon": eps0 / 2 ** k})
        relax = partial(local_relax, domain=domain, region=region, options=flow,
                        motion=options.motion)
        replacements = {i: relax(family.slices[i]).pair}
        for j in (i - 1, i + 1):
            if 0 < j < n - 1:
                relaxed = relax(family.slices[j]).pair
                replacements[j] = freeze_blend(family.slices[j], relaxed, domain, region,
                                               options.blend)
        candidate = family.with_slices(replacements)
        new_max = float(np.max(candidate.F_values))
        if new_max <= current:
            family = candidate
        history.append((k + 1, float(np.max(family.F_values))))
        if current - new_max <= options.tol_m0:
            status = CONVERGED
            break
    i = family.argmax
    m0 = min(F for _, F in history)
    return MinMaxResult(m0, family.slices[i], float(family.t[i]), history, status, family, regions)


@dataclass
class LowerBound:
    margin: float
    boundary_area: float
    analytic_margin: float | None


def lower_bound_check(domain, theta, result):
    """``m0 - a |boundary|``; for a ball also ``pi R^2 (1 - a)^2``."""
    a = math.cos(theta)
    area = domain.boundary_area()
    analytic = None
    if domain.kind == BALL:
        R = domain.radii[0]
        analytic = math.pi * R * R * (1 - a) ** 2
    return LowerBound(result.m0_estimate - a * area, area, analytic)


def ball_distance(c1, r1, c2, r2):
    """Distance between two open balls (0 when they overlap)."""
    gap = float(np.linalg.norm(np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float))) - r1 - r2
    return max(gap, 0.0)


def balls_overlap(u, v):
    gap = float(np.linalg.norm(np.asarray(u.center) - np.asarray(v.center))) - u.radius - v.radius
    return gap < 0.0


def is_admissible(u1, u2, factor=4.0):
    """True iff ``dist(u1, u2) >= factor * min(diam u1, diam u2)``."""
    if balls_overlap(u1, u2):
        return False
    dist = ball_distance(u1.center, u1.radius, u2.center, u2.radius)
    need = factor * min(u1.diameter, u2.diameter)
    # the boundary case counts; absorb roundoff in the distance
    return dist >= need - 1e-12 * max(need, 1.0)


def disjoint_cross_pair(us, vs):
    """First (i, j) with us[i] and vs[j] disjoint, or None."""
    for i, u in enumerate(us):
        for j, v in enumerate(vs):
            if not balls_overlap(u, v):
                return i, j
    return None
