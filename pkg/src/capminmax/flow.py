"""Projected gradient descent on F_a.

``pull_tight`` relaxes every free vertex; ``local_relax`` only moves
vertices strictly inside a ball and enforces the epsilon/8 barrier;
``freeze_blend`` interpolates two pairs inside a region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import (capillarity_energy, full_gradient, project_tangential, vertex_normals,
                     wall_normals)
from .errors import IncompatibleMeshes, LineSearchStalled

CONVERGED = "Converged"
MAX_STEPS = "MaxSteps"
BARRIER_HIT = "BarrierHit"

MIN_STEP = 1e-14
ROUNDOFF = 64 * np.finfo(float).eps


@dataclass
class FlowOptions:
    max_steps: int = 2000
    grad_tol: float = 1e-6
    step_init: float = 0.5
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    barrier_epsilon: float | None = None

    def __post_init__(self):
        if self.max_steps < 0 or self.grad_tol <= 0 or self.step_init <= 0:
            raise ValueError("max_steps, grad_tol and step_init must be positive")
        if not 0 < self.backtrack_factor < 1 or not 0 < self.armijo_c < 1:
            raise ValueError("backtrack_factor and armijo_c must lie in (0, 1)")
        if self.barrier_epsilon is not None and self.barrier_epsilon < 0:
            raise ValueError("barrier_epsilon must be nonnegative")


@dataclass(frozen=True)
class Region:
    """Open ball used for local moves."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("region radius must be positive")

    @property
    def diameter(self):
        return 2.0 * self.radius

    def contains(self, points):
        d = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=1)
        return d < self.radius


@dataclass
class FlowTrace:
    F_values: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    pair: object = None
    reason: str = ""

    @property
    def steps(self):
        return len(self.step_sizes)

    def rows(self):
        """(step, F_a, grad_norm, step_size) rows; step 0 has no step size."""
        out = []
        for k, (F, g) in enumerate(zip(self.F_values, self.grad_norms)):
            out.append((k, F, g, self.step_sizes[k - 1] if k > 0 else 0.0))
        return out


def _free_mask(pair, extra=None):
    used = np.zeros(len(pair.vertices), dtype=bool)
    used[pair.sigma_vertex_ids] = True
    used[pair.gamma_vertex_ids] = True
    free = used & ~pair.rim_mask
    if extra is not None:
        free &= extra
    return free


def _motion_directions(pair, N):
    """Unit direction each vertex may move along in normal-only motion.

    Sigma vertices follow their vertex normal, contact vertices move in
    the wall perpendicular to the contact line, and the rest of the wall
    sheet stays put.  Tangential sliding only reparametrizes the surface,
    and on a curved wall it lets the discrete area drop by collapsing
    triangles.
    """
    V = pair.vertices
    U = vertex_normals(V, pair.sigma_triangles)
    U[pair.constrained_mask] = 0.0
    c = np.asarray(pair.contact_polyline)
    if len(c) >= 2:
        if pair.contact_closed:
            nxt, prv = np.roll(c, -1), np.roll(c, 1)
        else:
            nxt = np.concatenate([c[1:], c[-1:]])
            prv = np.concatenate([c[:1], c[:-1]])
        t = V[nxt] - V[prv]
        w = np.cross(N[c], t)
        U[c] = w / np.linalg.norm(w, axis=1)[:, None]
    return U


def _descend(pair, domain, options, free, axis=None, motion="full"):
    V = np.array(pair.vertices)
    moving_wall = free & pair.constrained_mask
    F0 = capillarity_energy(pair).F_a
    F = F0
    trace = FlowTrace()
    alpha = options.step_init
    current = pair
    eps = options.barrier_epsilon
    for step in range(options.max_steps + 1):
        N = wall_normals(current, domain)
        g = project_tangential(full_gradient(current), N)
        g[~free] = 0.0
        if axis is not None:
            # move only along the wall-tangential part of the axis
            D = project_tangential(np.outer(g @ axis, axis), N)
        elif motion == "normal":
            U = _motion_directions(current, N)
            D = np.sum(g * U, axis=1)[:, None] * U
        else:
            D = g
        gnorm = float(np.max(np.linalg.norm(D, axis=1))) if np.any(free) else 0.0
        trace.F_values.append(F)
        trace.grad_norms.append(gnorm)
        if gnorm <= options.grad_tol:
            trace.reason = CONVERGED
            break
        if step == options.max_steps:
            trace.reason = MAX_STEPS
            break
        slope = float(np.sum(g * D))
        if options.step_init * slope <= ROUNDOFF * max(abs(F), 1.0):
            # predicted decrease is below the resolution of F itself
            trace.reason = CONVERGED
            break
        while True:
            trial = V - alpha * D
            if np.any(moving_wall):
                trial[moving_wall] = domain.project_to_boundary(trial[moving_wall])
            cand = current.with_vertices(trial)
            F_trial = capillarity_energy(cand).F_a
            if eps is not None and F_trial > F0 + eps / 8.0:
                trace.reason = BARRIER_HIT
                trace.pair = current
                return trace
            if F_trial < F and F_trial <= F - options.armijo_c * alpha * slope:
                break
            alpha *= options.backtrack_factor
            if alpha < MIN_STEP:
                raise LineSearchStalled(f"no descent at step {step} (grad norm {gnorm:.3e})")
        V, F, current = trial, F_trial, cand
        trace.step_sizes.append(alpha)
        alpha = min(alpha / options.backtrack_factor, options.step_init)
    trace.pair = current
    return trace


def pull_tight(pair, domain, options=None, free_mask=None, axis=None, motion="full"):
    """Armijo projected-gradient descent over all non-rim vertices.

    ``free_mask`` further restricts which vertices may move; with ``axis``
    each vertex may only slide along that direction (tangentially
    projected on the wall).  ``motion="normal"`` drops the tangential
    part of the gradient (see :func:`_motion_directions`).
    """
    if motion not in ("full", "normal"):
        raise ValueError("motion must be 'full' or 'normal'")
    if motion == "normal" and axis is not None:
        raise ValueError("axis and normal motion are exclusive")
    options = options or FlowOptions()
    if axis is not None:
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
    return _descend(pair, domain, options, _free_mask(pair, free_mask), axis, motion)


def local_relax(pair, domain, region, options=None, motion="full"):
    """Descent restricted to the region; the exterior is left bit-identical."""
    options = options or FlowOptions()
    free = _free_mask(pair, region.contains(pair.vertices))
    return _descend(pair, domain, options, free, motion=motion)


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def freeze_blend(pair_a, pair_b, domain, region, lam, band=None):
    """(1 - lam) A + lam B inside the region, A outside, smooth band of width h."""
    if (pair_a.vertices.shape != pair_b.vertices.shape
            or not np.array_equal(pair_a.sigma_triangles, pair_b.sigma_triangles)
            or not np.array_equal(pair_a.gamma_triangles, pair_b.gamma_triangles)
            or not np.array_equal(pair_a.contact_polyline, pair_b.contact_polyline)):
        raise IncompatibleMeshes("pairs differ combinatorially")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    h = pair_a.max_edge_length() if band is None else band
    A = pair_a.vertices
    dist = np.linalg.norm(A - np.asarray(region.center), axis=1)
    w = _smoothstep((region.radius - dist) / h) if h > 0 else (dist < region.radius).astype(float)
    w = lam * w
    moved = w > 0
    V = np.array(A)
    V[moved] = A[moved] + w[moved, None] * (pair_b.vertices[moved] - A[moved])
    wall = moved & pair_a.constrained_mask
    if np.any(wall):
        V[wall] = domain.project_to_boundary(V[wall])
    return pair_a.with_vertices(V)


def energy_drop(trace):
    return trace.F_values[0] - trace.F_values[-1]


def max_rise(trace):
    return max(trace.F_values) - trace.F_values[0]


def is_monotone(trace):
    F = trace.F_values
    return all(F[k + 1] < F[k] for k in range(len(F) - 1))
