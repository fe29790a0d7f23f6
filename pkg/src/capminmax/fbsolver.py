"""Obstacle-type free-boundary problem for a graph over the wall.

Unknown ``g >= h`` on a square grid.  Where ``g > h`` the minimal surface
equation ``div(grad g / sqrt(1 + |grad g|^2)) = 0`` holds; on the edge of
the coincidence set ``{g = h}`` the capillary condition

    1 + grad g . grad h = a sqrt(1 + |grad g|^2) sqrt(1 + |grad h|^2)

fixes the slope.  The solver is a policy iteration on the contact set:
for a fixed set the equation is solved by lagged-diffusivity (Picard)
iterations with a sparse direct solve; then contact nodes whose defect
asks for lifting are released and free nodes whose defect asks for
contact are pinned.  Grids of size ``2^m + 1`` are solved coarse to fine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .errors import NotConverged

COARSEST = 17
# interior accuracy needed while the contact set is still moving
POLICY_TOL = 1e-3


@dataclass
class FBProblem:
    x: np.ndarray
    y: np.ndarray
    h_field: np.ndarray
    dirichlet: np.ndarray
    a: float
    lipschitz_bound: float = 10.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.h_field = np.asarray(self.h_field, dtype=float)
        self.dirichlet = np.asarray(self.dirichlet, dtype=float)
        shape = (len(self.y), len(self.x))
        if self.h_field.shape != shape or self.dirichlet.shape != shape:
            raise ValueError(f"fields must have shape {shape}")
        dx, dy = np.diff(self.x), np.diff(self.y)
        if len(self.x) < 3 or len(self.y) < 3:
            raise ValueError("grid needs at least 3 nodes per side")
        if np.any(dx <= 0) or not np.allclose(dx, dx[0]) or not np.allclose(dy, dx[0]):
            raise ValueError("grid must be uniform with positive spacing")
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")
        rim = rim_mask(shape)
        if np.any(self.dirichlet[rim] < self.h_field[rim] - 1e-14):
            raise ValueError("dirichlet data must not lie below the obstacle on the rim")
        if not self.lipschitz_bound > 0:
            raise ValueError("lipschitz_bound must be positive")

    @property
    def spacing(self):
        return float(self.x[1] - self.x[0])

    @property
    def shape(self):
        return (len(self.y), len(self.x))

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def coarsen(self):
        return FBProblem(self.x[::2], self.y[::2], self.h_field[::2, ::2],
                         self.dirichlet[::2, ::2], self.a, self.lipschitz_bound)

    @classmethod
    def from_functions(cls, n, half_width, h, boundary, a, offset=0.0, lipschitz_bound=10.0):
        """Square ``[-L, L]^2`` grid with ``n`` nodes per side.

        ``h(X, Y)`` and ``boundary(X, Y)`` are vectorized; the boundary
        function is sampled everywhere but only its rim values are used.
        ``offset`` shifts the y nodes.
        """
        x = np.linspace(-half_width, half_width, n)
        y = x + offset
        X, Y = np.meshgrid(x, y)
        return cls(x, y, h(X, Y), boundary(X, Y), a, lipschitz_bound)


def contact_slope(a):
    """Slope of a planar graph meeting a flat obstacle at the capillary angle."""
    return math.sqrt(1 - a * a) / a


def wedge_problem(n, a=0.5, half_width=1.0, offset=0.0):
    """Flat obstacle, boundary data ``max(s y, 0)`` with the capillary slope ``s``."""
    s = contact_slope(a)
    return FBProblem.from_functions(n, half_width, lambda X, Y: np.zeros_like(X),
                                    lambda X, Y: np.maximum(s * Y, 0.0), a, offset)


@dataclass
class FBSolution:
    g_field: np.ndarray
    contact_set: np.ndarray
    interior_residual: float
    contact_residual: float
    iterations: int
    policy_iterations: int = 0
    clamp_activations: int = 0
    cycle_detected: bool = False
    levels: list = field(default_factory=list)


def rim_mask(shape):
    m = np.zeros(shape, dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
    return m


def _neighbors_any(mask):
    """Nodes with a 4-neighbor in ``mask``."""
    out = np.zeros_like(mask)
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def kink_band(contact):
    """Contact nodes and every node within one cell of them (8-neighborhood)."""
    band = contact.copy()
    p = np.pad(contact, 1)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            band |= p[1 + di:p.shape[0] - 1 + di, 1 + dj:p.shape[1] - 1 + dj]
    return band


def _edge_weights(g, k, L):
    """Lagged diffusivities on x-edges (ny, nx-1) and y-edges (ny-1, nx).

    Tangential derivatives come from nodal central differences averaged
    to the edge.  Slopes beyond ``L`` are clamped; returns the number of
    clamped edges as well.
    """
    gy_node, gx_node = np.gradient(g, k)
    ex = (g[:, 1:] - g[:, :-1]) / k
    ex_t = 0.5 * (gy_node[:, 1:] + gy_node[:, :-1])
    ey = (g[1:, :] - g[:-1, :]) / k
    ey_t = 0.5 * (gx_node[1:, :] + gx_node[:-1, :])
    sx = ex * ex + ex_t * ex_t
    sy = ey * ey + ey_t * ey_t
    clamps = int(np.count_nonzero(sx > L * L)) + int(np.count_nonzero(sy > L * L))
    wx = 1.0 / np.sqrt(1.0 + np.minimum(sx, L * L))
    wy = 1.0 / np.sqrt(1.0 + np.minimum(sy, L * L))
    return wx, wy, clamps


def _assemble(g, free, wx, wy):
    """Sparse system for the weighted 5-point equation on the free nodes."""
    ny, nx = g.shape
    idx = -np.ones((ny, nx), dtype=np.int64)
    fi, fj = np.nonzero(free)
    idx[fi, fj] = np.arange(len(fi))
    rows, cols, vals = [], [], []
    diag = np.zeros(len(fi))
    rhs = np.zeros(len(fi))
    # (neighbor offset, weight lookup) for the four directions
    dirs = [
        (0, 1, lambda i, j: wx[i, j]),
        (0, -1, lambda i, j: wx[i, j - 1]),
        (1, 0, lambda i, j: wy[i, j]),
        (-1, 0, lambda i, j: wy[i - 1, j]),
    ]
    for di, dj, wfun in dirs:
        w = wfun(fi, fj)
        ni, nj = fi + di, fj + dj
        diag += w
        nb = idx[ni, nj]
        unknown = nb >= 0
        rows.append(np.flatnonzero(unknown))
        cols.append(nb[unknown])
        vals.append(-w[unknown])
        rhs[~unknown] += w[~unknown] * g[ni[~unknown], nj[~unknown]]
    rows.append(np.arange(len(fi)))
    cols.append(np.arange(len(fi)))
    vals.append(diag)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(fi), len(fi)))
    return A, rhs, (fi, fj)


def _operator_residual(g, free, k, L):
    """Solver-side residual: the assembled operator applied to g, over k^2."""
    wx, wy, clamps = _edge_weights(g, k, L)
    A, rhs, (fi, fj) = _assemble(g, free, wx, wy)
    r = np.zeros_like(g)
    if len(fi):
        r[fi, fj] = (rhs - A @ g[fi, fj]) / (k * k)
    return r, clamps


def _defect(gx, gy, hx, hy, a):
    return (a * np.sqrt(1 + gx * gx + gy * gy) * np.sqrt(1 + hx * hx + hy * hy)
            - 1.0 - gx * hx - gy * hy)


def _contact_side_gradient(g, free, k):
    """Gradient at nodes using differences toward free neighbors only."""
    gy_c, gx_c = np.gradient(g, k)
    out = []
    for axis, central in ((1, gx_c), (0, gy_c)):
        fwd = np.zeros_like(g)
        bwd = np.zeros_like(g)
        has_f = np.zeros_like(free)
        has_b = np.zeros_like(free)
        if axis == 1:
            fwd[:, :-1] = (g[:, 1:] - g[:, :-1]) / k
            has_f[:, :-1] = free[:, 1:]
            bwd[:, 1:] = (g[:, 1:] - g[:, :-1]) / k
            has_b[:, 1:] = free[:, :-1]
        else:
            fwd[:-1, :] = (g[1:, :] - g[:-1, :]) / k
            has_f[:-1, :] = free[1:, :]
            bwd[1:, :] = (g[1:, :] - g[:-1, :]) / k
            has_b[1:, :] = free[:-1, :]
        d = np.where(has_f & ~has_b, fwd, np.where(has_b & ~has_f, bwd, central))
        out.append(d)
    return out[0], out[1]


def _policy_defects(g, h, free, contact, k, a):
    """(defect on free nodes touching contact, defect on contact nodes touching free).

    Rim nodes sitting on the obstacle count as contact for the free side.
    """
    hy, hx = np.gradient(h, k)
    gy, gx = np.gradient(g, k)
    wet = contact | (rim_mask(g.shape) & (g <= h))
    d_free = np.where(free & _neighbors_any(wet), _defect(gx, gy, hx, hy, a), 0.0)
    cgx, cgy = _contact_side_gradient(g, free, k)
    d_contact = np.where(contact & _neighbors_any(free), _defect(cgx, cgy, hx, hy, a), 0.0)
    return d_free, d_contact


def _picard(problem, g, contact, tol, max_iter, warmup=3):
    """Solve the minimal surface equation on the free set for a fixed contact set.

    A few lagged-diffusivity sweeps, then Newton-Krylov preconditioned by
    the frozen lagged-diffusivity matrix.  Falls back to plain sweeps if
    the Newton stage does not converge.
    """
    k = problem.spacing
    L = problem.lipschitz_bound
    rim = rim_mask(problem.shape)
    free = ~rim & ~contact
    g = g.copy()
    g[contact] = problem.h_field[contact]
    g[rim] = problem.dirichlet[rim]
    fi, fj = np.nonzero(free)
    if len(fi) == 0:
        return g, 0
    target = 0.1 * tol * k * k

    def residual(u):
        trial = g.copy()
        trial[fi, fj] = u
        wx, wy, _ = _edge_weights(trial, k, L)
        A, rhs, _ = _assemble(trial, free, wx, wy)
        return A @ u - rhs, A

    iters = 0
    newton_done = False
    while iters < max_iter:
        r, A = residual(g[fi, fj])
        if np.max(np.abs(r)) <= target:
            break
        if iters >= warmup and not newton_done:
            newton_done = True
            lu = spla.splu(A.tocsc())
            M = spla.LinearOperator(A.shape, matvec=lu.solve)
            try:
                u = optimize.newton_krylov(lambda u: residual(u)[0], g[fi, fj], inner_M=M,
                                           f_tol=target, maxiter=max(10, max_iter // 4),
                                           method="lgmres")
                g[fi, fj] = u
                iters += 1
                continue
            except optimize.NoConvergence:
                pass
        g[fi, fj] = spla.spsolve(A.tocsc(), A @ g[fi, fj] - r)
        iters += 1
    return g, iters


def _solve_level(problem, g, contact, tol, tol_contact, max_iter):
    rim = rim_mask(problem.shape)
    h = problem.h_field
    k = problem.spacing
    seen = {}
    history = []
    total = 0
    cycle = False
    loose = max(tol, POLICY_TOL)
    for policy in range(1, max_iter + 1):
        g, it = _picard(problem, g, contact, loose, max_iter)
        total += it
        free = ~rim & ~contact
        below = free & (g < h)
        d_free, d_contact = _policy_defects(g, h, free, contact, k, problem.a)
        lift = d_contact > tol_contact
        drop = (d_free < -tol_contact) | below
        key = contact.tobytes()
        score = max(float(np.max(np.abs(d_free), initial=0.0)),
                    float(np.max(np.abs(d_contact), initial=0.0)))
        history.append((score, contact.copy(), g.copy()))
        if key in seen:
            # the contact set is revisiting a state: keep the best one of the loop
            cycle = True
            loop = history[seen[key]:]
            score, contact, g = min(loop, key=lambda item: item[0])
            break
        seen[key] = len(history) - 1
        if not np.any(lift) and not np.any(drop):
            break
        new = contact.copy()
        if np.any(below):
            new |= below
        elif np.any(lift):
            new &= ~lift
        else:
            new |= drop
        contact = new
    else:
        raise NotConverged(f"contact set still moving after {max_iter} policy iterations")
    g, it = _picard(problem, g, contact, tol, max_iter)
    return g, contact, total + it, policy, cycle


def _prolong(coarse, fine_shape):
    """Bilinear interpolation from a grid with every other node."""
    ny, nx = fine_shape
    out = np.zeros(fine_shape)
    out[::2, ::2] = coarse
    out[1::2, ::2] = 0.5 * (coarse[:-1, :] + coarse[1:, :])
    out[::2, 1::2] = 0.5 * (coarse[:, :-1] + coarse[:, 1:])
    out[1::2, 1::2] = 0.25 * (coarse[:-1, :-1] + coarse[1:, :-1] + coarse[:-1, 1:] + coarse[1:, 1:])
    return out


def _hierarchy(problem):
    levels = [problem]
    p = problem
    while (len(p.x) - 1) % 2 == 0 and (len(p.y) - 1) % 2 == 0 and (len(p.x) + 1) // 2 >= COARSEST:
        p = p.coarsen()
        levels.append(p)
    return levels[::-1]


def solve_fb(problem, tol=1e-8, max_iter=200, tol_contact=1e-6, sequencing=True):
    """Policy iteration for the capillary obstacle problem.

    Returns an :class:`FBSolution` whose residuals are evaluated by the
    solver's own operator.  Raises :class:`NotConverged` (carrying the
    last iterate) when the contact set keeps moving or the interior
    residual stays above ``tol``.
    """
    levels = _hierarchy(problem) if sequencing else [problem]
    first = levels[0]
    g = np.where(rim_mask(first.shape), first.dirichlet, first.h_field)
    contact = np.zeros(first.shape, dtype=bool)
    total = policies = 0
    cycle = False
    record = []
    for n, lev in enumerate(levels):
        if n > 0:
            g = np.maximum(_prolong(g, lev.shape), lev.h_field)
            contact = ~rim_mask(lev.shape) & (g <= lev.h_field)
        g, contact, it, pol, cyc = _solve_level(lev, g, contact, tol, tol_contact, max_iter)
        total += it
        policies += pol
        cycle |= cyc
        record.append((lev.shape[0], it, pol))
    k = problem.spacing
    free = ~rim_mask(problem.shape) & ~contact
    r, clamps = _operator_residual(g, free, k, problem.lipschitz_bound)
    off_band = free & ~kink_band(contact)
    interior = float(np.max(np.abs(r[off_band]), initial=0.0))
    d_free, d_contact = _policy_defects(g, problem.h_field, free, contact, k, problem.a)
    contact_res = max(float(np.max(np.abs(d_free), initial=0.0)),
                      float(np.max(np.abs(d_contact), initial=0.0)))
    sol = FBSolution(g, contact, interior, contact_res, total, policies, clamps, cycle, record)
    if interior > tol:
        raise NotConverged(f"interior residual {interior:.3e} above {tol:.1e}", solution=sol)
    return sol


def fb_residuals(solution, problem):
    """Recompute both residuals with a flux-divergence stencil.

    Interior: sup over free nodes outside the kink band of
    ``div(grad g / sqrt(1 + |grad g|^2))``.  Contact: sup of the capillary
    defect on free nodes touching the contact set and on contact nodes
    touching the free set (one-sided slopes toward the free side).
    """
    g = np.asarray(solution.g_field, dtype=float)
    h = problem.h_field
    k = problem.spacing
    L = problem.lipschitz_bound
    contact = np.asarray(solution.contact_set, dtype=bool)
    ny, nx = g.shape
    free = ~rim_mask(g.shape) & ~contact

    # nodal central differences, one-sided on the rim
    gx = np.empty_like(g)
    gy = np.empty_like(g)
    gx[:, 1:-1] = (g[:, 2:] - g[:, :-2]) / (2 * k)
    gx[:, 0] = (g[:, 1] - g[:, 0]) / k
    gx[:, -1] = (g[:, -1] - g[:, -2]) / k
    gy[1:-1, :] = (g[2:, :] - g[:-2, :]) / (2 * k)
    gy[0, :] = (g[1, :] - g[0, :]) / k
    gy[-1, :] = (g[-1, :] - g[-2, :]) / k

    # fluxes through cell faces
    px = (g[:, 1:] - g[:, :-1]) / k
    tx = 0.5 * (gy[:, 1:] + gy[:, :-1])
    fx = px / np.sqrt(1 + np.minimum(px * px + tx * tx, L * L))
    py = (g[1:, :] - g[:-1, :]) / k
    ty = 0.5 * (gx[1:, :] + gx[:-1, :])
    fy = py / np.sqrt(1 + np.minimum(py * py + ty * ty, L * L))
    div = np.zeros_like(g)
    div[1:-1, 1:-1] = ((fx[1:-1, 1:] - fx[1:-1, :-1]) + (fy[1:, 1:-1] - fy[:-1, 1:-1])) / k

    band = kink_band(contact)
    interior_nodes = free & ~band
    interior = float(np.max(np.abs(div[interior_nodes]), initial=0.0))

    hx = np.empty_like(h)
    hy = np.empty_like(h)
    hx[:, 1:-1] = (h[:, 2:] - h[:, :-2]) / (2 * k)
    hx[:, 0] = (h[:, 1] - h[:, 0]) / k
    hx[:, -1] = (h[:, -1] - h[:, -2]) / k
    hy[1:-1, :] = (h[2:, :] - h[:-2, :]) / (2 * k)
    hy[0, :] = (h[1, :] - h[0, :]) / k
    hy[-1, :] = (h[-1, :] - h[-2, :]) / k

    def defect(ax, ay, bx, by):
        return a * np.sqrt(1 + ax ** 2 + ay ** 2) * np.sqrt(1 + bx ** 2 + by ** 2) - 1 - ax * bx - ay * by

    a = problem.a
    rim = rim_mask(g.shape)
    wet = contact | (rim & (g <= h))
    worst = 0.0
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            nbrs = [(i, j + 1), (i, j - 1), (i + 1, j), (i - 1, j)]
            if free[i, j] and any(wet[p] for p in nbrs):
                worst = max(worst, abs(defect(gx[i, j], gy[i, j], hx[i, j], hy[i, j])))
            elif contact[i, j] and any(free[p] for p in nbrs):
                sx = _one_sided(g, free, i, j, k, 1, gx[i, j])
                sy = _one_sided(g, free, i, j, k, 0, gy[i, j])
                worst = max(worst, abs(defect(sx, sy, hx[i, j], hy[i, j])))
    return interior, worst


def _one_sided(g, free, i, j, k, axis, central):
    if axis == 1:
        f, b = free[i, j + 1], free[i, j - 1]
        fwd, bwd = (g[i, j + 1] - g[i, j]) / k, (g[i, j] - g[i, j - 1]) / k
    else:
        f, b = free[i + 1, j], free[i - 1, j]
        fwd, bwd = (g[i + 1, j] - g[i, j]) / k, (g[i, j] - g[i - 1, j]) / k
    if f and not b:
        return fwd
    if b and not f:
        return bwd
    return central


def near_contact_slope(solution, problem):
    """Mean |grad g| over free nodes that touch the contact set."""
    g = solution.g_field
    k = problem.spacing
    free = ~rim_mask(g.shape) & ~solution.contact_set
    sel = free & _neighbors_any(solution.contact_set)
    if not np.any(sel):
        return math.nan
    gy, gx = np.gradient(g, k)
    return float(np.mean(np.hypot(gx[sel], gy[sel])))


def exact_error(solution, problem, exact):
    """|g - exact| on the grid, with ``exact(X, Y)`` vectorized."""
    X, Y = problem.mesh()
    return np.abs(solution.g_field - exact(X, Y))
