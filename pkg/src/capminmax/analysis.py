"""Diagnostics on discrete pairs.

Density ratios at wall points, the boundary measure of the first
variation, the second-variation spectrum with its contact-line term,
Jacobi fields, curvature/distance products and blow-up wedge fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError

from .energy import adjacency, curvature_fields, full_gradient, vertex_areas, vertex_normals
from .errors import EigenFailure, RadiusTooSmall, ScaleBelowResolution
from .surface import extract_boundary_frame, triangle_edges

LAMBDA_FACTOR = 10.0
MONOTONE_TOL = 1e-3


# ---------------------------------------------------------------------------
# exact mesh / ball intersection


def _segment_disk_area(P, Q, r):
    """Signed area of disk(0, r) intersected with triangle (0, P, Q), rowwise."""
    d = Q - P
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", P, d)
    c = np.einsum("ij,ij->i", P, P) - r * r
    disc = b * b - 4.0 * a * c
    hit = (disc > 0) & (a > 0)
    root = np.sqrt(np.where(hit, disc, 0.0))
    safe_a = np.where(a > 0, a, 1.0)
    s1 = np.where(hit, np.clip((-b - root) / (2 * safe_a), 0.0, 1.0), 0.0)
    s2 = np.where(hit, np.clip((-b + root) / (2 * safe_a), 0.0, 1.0), 0.0)
    # snap so that untouched endpoints are reproduced exactly
    P1 = np.where((s1 == 0.0)[:, None], P, np.where((s1 == 1.0)[:, None], Q, P + s1[:, None] * d))
    P2 = np.where((s2 == 0.0)[:, None], P, np.where((s2 == 1.0)[:, None], Q, P + s2[:, None] * d))

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    def sector(u, v):
        # sectors only occur outside the disk; tiny vectors mean an empty piece
        tiny = np.minimum(np.einsum("ij,ij->i", u, u), np.einsum("ij,ij->i", v, v)) < (1e-12 * r) ** 2
        ang = np.arctan2(cross(u, v), np.einsum("ij,ij->i", u, v))
        return np.where(tiny, 0.0, 0.5 * r * r * ang)

    return sector(P, P1) + 0.5 * cross(P1, P2) + sector(P2, Q)


def clipped_areas(V, tris, x, rho):
    """Area of each triangle inside the closed ball B(x, rho)."""
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    out = np.zeros(len(tris))
    if len(tris) == 0:
        return out
    p = V[tris] - np.asarray(x, dtype=float)
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    nn = np.linalg.norm(n, axis=1)
    # cheap rejection: the triangle lies within its longest edge of any vertex
    reach = np.min(np.linalg.norm(p, axis=2), axis=1) - np.max(
        np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)
    live = (nn > 0) & (reach < rho)
    if not np.any(live):
        return out
    p, n, nn = p[live], n[live], nn[live]
    n = n / nn[:, None]
    height = np.einsum("ij,ij->i", p[:, 0], n)
    r2 = rho * rho - height * height
    cut = r2 > 0
    e1 = p[:, 1] - p[:, 0]
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(n, e1)
    # in-plane coordinates relative to the foot of the perpendicular from x
    foot = height[:, None] * n
    q = p - foot[:, None, :]
    uv = np.stack([np.einsum("ikj,ij->ik", q, e1), np.einsum("ikj,ij->ik", q, e2)], axis=2)
    rr = np.sqrt(np.where(cut, r2, 0.0))
    area = np.zeros(len(p))
    for k in range(3):
        area += _segment_disk_area(uv[:, k], uv[:, (k + 1) % 3], rr)
    area = np.where(cut, np.abs(area), 0.0)
    out[np.flatnonzero(live)] = area
    return out


def ball_mass(pair, x, rho):
    """(|Sigma in B| + a |Gamma in B|) times multiplicity."""
    s = math.fsum(clipped_areas(pair.vertices, pair.sigma_triangles, x, rho))
    g = math.fsum(clipped_areas(pair.vertices, pair.gamma_triangles, x, rho))
    return (s + pair.a * g) * pair.multiplicity


def local_mesh_size(pair, x, radius):
    """Longest edge of the triangles with a vertex in B(x, radius).

    Falls back to the triangles around the vertex nearest to ``x``.
    """
    tris = np.vstack([pair.sigma_triangles, pair.gamma_triangles])
    d = np.linalg.norm(pair.vertices - np.asarray(x, dtype=float), axis=1)
    near = d <= radius
    if not np.any(near[tris]):
        near = d <= d[np.unique(tris)].min()
    sel = tris[np.any(near[tris], axis=1)]
    e = triangle_edges(sel)
    return float(np.max(np.linalg.norm(pair.vertices[e[:, 0]] - pair.vertices[e[:, 1]], axis=1)))


# ---------------------------------------------------------------------------
# monotonicity


@dataclass
class MonotonicityReport:
    center: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray
    Lambda: float
    adjusted_ratios: np.ndarray
    violations: int
    density_limit_estimate: float
    mesh_size: float

    def rows(self):
        return [(float(r), float(q), float(s)) for r, q, s in
                zip(self.radii, self.ratios, self.adjusted_ratios)]


def count_decreases(values, tol=MONOTONE_TOL):
    """Pairs i < j with values[j] < values[i] - tol * |values[i]|."""
    v = np.asarray(values, dtype=float)
    count = 0
    for i in range(len(v)):
        count += int(np.sum(v[i + 1:] < v[i] - tol * abs(v[i])))
    return count


def density_ratio(pair, domain, x, radii, lp_correction=None, tol=MONOTONE_TOL):
    """Density ratios at ``x`` with exact triangle/ball clipping.

    ``Lambda = 10 / min_curvature_radius`` of the wall.  With
    ``lp_correction = (C, p)`` the term ``C * rho^(1 - 2/p)`` is added to
    the adjusted ratio, the form used when the mean curvature is only in
    L^p.  The limit estimate is the intercept of a linear fit of the plain
    ratios against the radius.
    """
    x = np.asarray(x, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    h = local_mesh_size(pair, x, radii[0])
    if radii[0] < 2 * h:
        raise RadiusTooSmall(f"radius {radii[0]:.4g} is below twice the local mesh size {h:.4g}")
    ratios = np.array([ball_mass(pair, x, r) / (r * r) for r in radii])
    rc = domain.min_curvature_radius()
    lam = LAMBDA_FACTOR / rc if math.isfinite(rc) else 0.0
    adjusted = np.exp(lam * radii) * ratios
    if lp_correction is not None:
        C, p = lp_correction
        adjusted = adjusted + C * radii ** (1.0 - 2.0 / p)
    if len(radii) >= 2:
        slope, intercept = np.polyfit(radii, ratios, 1)
    else:
        intercept = ratios[0]
    return MonotonicityReport(x, radii, ratios, lam, adjusted, count_decreases(adjusted, tol),
                              float(intercept), h)


# ---------------------------------------------------------------------------
# boundary part of the first variation


@dataclass
class FirstVariationReport:
    sigma_V_estimate: float
    probe_values: np.ndarray
    violations: int
    global_bound: float
    bound_ratio: float
    interior_residual: float


def _boundary_probes(domain, count, width, points):
    """Partition of unity on the wall times a cutoff in the distance to it."""
    centers = domain.sample_boundary(count)
    dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    scale = 2.0 * domain.bounding_radius / math.sqrt(count)
    w = np.exp(-(dist / scale) ** 2)
    w /= np.sum(w, axis=1, keepdims=True)
    sd = np.abs(domain.signed_distance(points))
    s = np.clip(1.0 - sd / width, 0.0, 1.0)
    return w * (s * s * (3 - 2 * s))[:, None]


def first_variation_decomposition(pair, domain, n_probes=24, width=None, safety=10.0,
                                  tol=1e-3):
    """Boundary measure of the first variation probed with fields phi * N.

    For each probe ``phi`` the estimate is
    ``delta(V + aW)[phi N] + a * sum_Gamma A_v phi N . H_wall``: the
    interior sheet is taken as minimal and the wall patch carries the
    wall's mean curvature.  The probes form a partition of unity near the
    wall, so their values add up to the total.  A probe counts as a
    violation when it is below ``-tol`` times the total magnitude.
    """
    V = pair.vertices
    used = np.union1d(pair.sigma_vertex_ids, pair.gamma_vertex_ids)
    if width is None:
        width = 3.0 * pair.max_edge_length()
    X_dir = np.zeros_like(V)
    X_dir[used] = domain.extended_normal(V[used])
    phi = np.zeros((len(V), n_probes))
    phi[used] = _boundary_probes(domain, n_probes, width, V[used])
    g = full_gradient(pair)
    first = np.einsum("ij,ij->i", g, X_dir)
    wall_term = np.zeros(len(V))
    gids = pair.gamma_vertex_ids
    if len(gids):
        Av = vertex_areas(V, pair.gamma_triangles)
        Hwall = domain.boundary_mean_curvature(V[gids])
        wall_term[gids] = (pair.a * pair.multiplicity * Av[gids]
                           * np.einsum("ij,ij->i", X_dir[gids], Hwall))
    per_vertex = first + wall_term
    probes = np.array([math.fsum(per_vertex * phi[:, k]) for k in range(n_probes)])
    total = math.fsum(probes)
    violations = int(np.sum(probes < -tol * max(abs(total), 1e-12)))
    curv = domain.principal_curvatures(domain.sample_boundary(2000))
    kmax = float(np.max(curv)) if np.all(np.isfinite(curv)) else 0.0
    bound = 2.0 * kmax * pair.sigma_area()
    interior = pair.sigma_interior_mask
    resid = float(np.max(np.linalg.norm(g[interior], axis=1))) if np.any(interior) else 0.0
    ratio = total / bound if bound > 0 else (0.0 if abs(total) < 1e-12 else math.inf)
    return FirstVariationReport(total, probes, violations, safety * bound, ratio, resid)


# ---------------------------------------------------------------------------
# stability


def p1_matrices(V, tris, nv):
    """Piecewise-linear stiffness and consistent mass matrices (CSR)."""
    tris = np.asarray(tris, dtype=np.int64)
    p = V[tris]
    E = [p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]]
    area = 0.5 * np.linalg.norm(np.cross(E[2], -E[1]), axis=1)
    rows, cols, kv, mv = [], [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tris[:, i])
            cols.append(tris[:, j])
            kv.append(np.einsum("ij,ij->i", E[i], E[j]) / (4 * area))
            mv.append(area / 12.0 * (2.0 if i == j else 1.0))
    r, c = np.concatenate(rows), np.concatenate(cols)
    K = sp.coo_matrix((np.concatenate(kv), (r, c)), shape=(nv, nv)).tocsr()
    M = sp.coo_matrix((np.concatenate(mv), (r, c)), shape=(nv, nv)).tocsr()
    return K, M


def _fill_band(values, band, A1, rounds=3):
    """Replace NaN values on the band by averages of finite neighbors."""
    v = np.array(values, dtype=float)
    for _ in range(rounds):
        missing = np.flatnonzero(band & np.isnan(v))
        if len(missing) == 0:
            break
        finite = np.where(np.isnan(v), 0.0, v)
        count = A1 @ (~np.isnan(v)).astype(float)
        total = A1 @ finite
        ok = count[missing] > 0
        v[missing[ok]] = total[missing[ok]] / count[missing[ok]]
    v[band & np.isnan(v)] = 0.0
    return v


def contact_conormals(pair, domain):
    """Averaged outward conormal at each contact vertex."""
    frame = extract_boundary_frame(pair, domain)
    ids = pair.contact_polyline
    pos = {v: k for k, v in enumerate(ids.tolist())}
    eta = np.zeros((len(ids), 3))
    for e, (i, j) in enumerate(frame.edges.tolist()):
        eta[pos[i]] += frame.eta[e]
        eta[pos[j]] += frame.eta[e]
    return eta / np.maximum(np.linalg.norm(eta, axis=1), 1e-300)[:, None]


def contact_geodesic_curvature(pair, domain, normals=None):
    """Turning angle per dual length of the contact polyline inside Sigma.

    Positive where the curve bends away from the outward conormal, so a
    circle bounding a flat disk of radius r gets 1/r.  Open ends get 0.
    """
    ids = pair.contact_polyline
    V = pair.vertices
    if normals is None:
        normals = vertex_normals(V, pair.sigma_triangles)
    eta = contact_conormals(pair, domain)
    n = len(ids)
    kappa = np.zeros(n)
    for k in range(n):
        if not pair.contact_closed and k in (0, n - 1):
            continue
        prev, cur, nxt = V[ids[k - 1]], V[ids[k]], V[ids[(k + 1) % n]]
        nv = normals[ids[k]]
        t1 = cur - prev
        t2 = nxt - cur
        t1 -= (t1 @ nv) * nv
        t2 -= (t2 @ nv) * nv
        l1, l2 = np.linalg.norm(t1), np.linalg.norm(t2)
        t1, t2 = t1 / l1, t2 / l2
        psi = math.atan2(float(np.cross(t1, t2) @ nv), float(t1 @ t2))
        turn = t2 - t1
        sign = -1.0 if turn @ eta[k] > 0 else 1.0
        kappa[k] = sign * abs(psi) / (0.5 * (l1 + l2))
    return kappa


@dataclass
class StabilityForm:
    """Assembled second-variation form restricted to the free vertices."""

    Q: sp.csr_matrix
    M: sp.csr_matrix
    dofs: np.ndarray
    stiffness: sp.csr_matrix
    curvature_mass: sp.csr_matrix
    boundary: sp.csr_matrix

    def restrict(self, u):
        return np.asarray(u, dtype=float)[self.dofs]

    def value(self, u):
        """Q(u) for a full per-vertex field."""
        w = self.restrict(u)
        return float(w @ (self.Q @ w))

    def norm2(self, u):
        w = self.restrict(u)
        return float(w @ (self.M @ w))

    def rayleigh(self, u):
        return self.value(u) / self.norm2(u)


@dataclass
class StabilityReport:
    eigenvalues: np.ndarray
    q_field: np.ndarray
    A2_field: np.ndarray
    num_near_zero: int
    tol_eig: float
    form: StabilityForm = field(repr=False)
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    method: str = "shift-invert"

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])


def stability_form(pair, domain, q_override=None):
    """Stiffness minus |A|^2 mass minus the contact-line q form.

    ``q = H_wall / sin(theta) + cot(theta) H_Sigma - kappa`` per contact
    vertex, with the wall mean curvature as the sum of principal
    curvatures.  ``q_override`` (scalar or per-contact-vertex array)
    replaces it.  Vertices on the non-contact boundary are clamped.
    """
    V = pair.vertices
    nv = len(V)
    tris = pair.sigma_triangles
    K, M = p1_matrices(V, tris, nv)
    A1 = adjacency(nv, tris)
    cf = curvature_fields(pair)
    band = cf.boundary_band
    A2 = _fill_band(cf.A2, band, A1)
    Hs = _fill_band(cf.mean_curvature, band, A1)
    Av = vertex_areas(V, tris)
    Wm = sp.diags(np.where(np.isnan(A2), 0.0, A2) * Av).tocsr()

    ids = pair.contact_polyline
    if len(ids) and len(pair.contact_edges):
        if q_override is None:
            theta = pair.theta
            Hwall = np.sum(domain.principal_curvatures(V[ids]), axis=1)
            Hwall = np.where(np.isfinite(Hwall), Hwall, 0.0)
            kappa = contact_geodesic_curvature(pair, domain)
            q = Hwall / math.sin(theta) + Hs[ids] / math.tan(theta) - kappa
        else:
            q = np.broadcast_to(np.asarray(q_override, dtype=float), ids.shape).copy()
        qv = np.zeros(nv)
        qv[ids] = q
        e = pair.contact_edges
        ell = np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1)
        qe = 0.5 * (qv[e[:, 0]] + qv[e[:, 1]])
        r = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
        c = np.concatenate([e[:, 0], e[:, 1], e[:, 1], e[:, 0]])
        vals = np.concatenate([2 * qe * ell / 6, 2 * qe * ell / 6, qe * ell / 6, qe * ell / 6])
        B = sp.coo_matrix((vals, (r, c)), shape=(nv, nv)).tocsr()
    else:
        q = np.zeros(len(ids))
        B = sp.csr_matrix((nv, nv))

    free = np.zeros(nv, dtype=bool)
    free[pair.sigma_vertex_ids] = True
    free &= ~pair.rim_mask
    dofs = np.flatnonzero(free)
    Qf = (K - Wm - B)[dofs][:, dofs].tocsr()
    Mf = M[dofs][:, dofs].tocsr()
    form = StabilityForm(Qf, Mf, dofs, K, Wm, B)
    return form, q, A2


def _spectrum_floor(form, pair):
    """A shift strictly below every eigenvalue of (Q, M).

    Uses lumped <= 4 x consistent mass for the |A|^2 term and the P1 trace
    bound ||u||_e^2 <= 6 (len e / area t) ||u||_t^2 for the contact term.
    """
    W = form.curvature_mass.diagonal()
    Av = vertex_areas(pair.vertices, pair.sigma_triangles)
    a2 = W / np.where(Av > 0, Av, 1.0)
    bound = 4.0 * float(np.max(a2[form.dofs], initial=0.0))
    e = pair.contact_edges
    if len(e) and form.boundary.nnz:
        V = pair.vertices
        B = form.boundary
        ell = np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1)
        q_e = np.array([B[i, j] for i, j in e.tolist()]) * 6.0 / ell
        tris = pair.sigma_triangles
        tri_area = 0.5 * np.linalg.norm(np.cross(V[tris[:, 1]] - V[tris[:, 0]],
                                                 V[tris[:, 2]] - V[tris[:, 0]]), axis=1)
        min_area = {}
        for t, tri in enumerate(tris.tolist()):
            for k in range(3):
                key = frozenset((tri[k], tri[(k + 1) % 3]))
                min_area[key] = min(min_area.get(key, math.inf), tri_area[t])
        ratio = np.array([ell[k] / min_area[frozenset(ed)] for k, ed in enumerate(e.tolist())])
        # a triangle has at most two contact edges
        bound += 12.0 * float(np.max(np.maximum(q_e, 0.0) * ratio))
    return -bound - 1.0


def stability_spectrum(pair, domain, n_eig=6, tol_eig=0.05, q_override=None, dense=False):
    """Smallest eigenvalues of the second variation on Sigma.

    Shift-invert Lanczos: a first pass with a shift below the whole
    spectrum locates the lowest eigenvalue, a second pass shifted just
    below it returns the ``n_eig`` smallest.  ``dense`` solves the full
    generalized problem instead (small meshes, cross-checks).
    """
    form, q, A2 = stability_form(pair, domain, q_override)
    n = form.Q.shape[0]
    k = min(n_eig, n - 1) if n > 1 else 1
    if dense or n <= 2 * n_eig + 10:
        vals, vecs = scipy.linalg.eigh(form.Q.toarray(), form.M.toarray(), subset_by_index=[0, k - 1])
        method = "dense"
    else:
        V = pair.vertices[form.dofs]
        v0 = V @ np.array([1.0, 2.0, 3.0]) + 1.0
        try:
            floor = _spectrum_floor(form, pair)
            low = spla.eigsh(form.Q, k=1, M=form.M, sigma=floor, which="LM", v0=v0,
                             return_eigenvectors=False, maxiter=20 * n)
            shift = float(low[0]) - max(0.1, 0.01 * abs(float(low[0])))
            vals, vecs = spla.eigsh(form.Q, k=k, M=form.M, sigma=shift, which="LM", v0=v0,
                                    maxiter=20 * n)
        except (spla.ArpackNoConvergence, spla.ArpackError, RuntimeError) as exc:
            raise EigenFailure(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        method = "shift-invert"
    near = int(np.sum(np.abs(vals) <= tol_eig))
    return StabilityReport(np.asarray(vals), np.asarray(q), A2, near, tol_eig, form, vecs, method)


def rotation_field(pair, domain, e):
    """Normal speed of the rotation about axis ``e`` through the domain center."""
    e = np.asarray(e, dtype=float)
    nu = vertex_normals(pair.vertices, pair.sigma_triangles)
    Y = np.cross(e, pair.vertices - domain.center)
    return np.einsum("ij,ij->i", nu, Y)


# ---------------------------------------------------------------------------
# Jacobi fields, stability inequality, curvature estimates


@dataclass
class JacobiField:
    values: np.ndarray
    vmin: float
    vmax: float
    margin: float

    @property
    def graphical(self):
        """Strictly negative beyond the discretization margin."""
        return self.vmax < -self.margin


def jacobi_field(pair, e, margin=None):
    """``nu . e`` on Sigma vertices (NaN elsewhere).

    Vertex normals on a free rim are one-sided and off by O(h), so
    graphicality asks for ``max v < -margin`` with ``margin = h / 2`` by
    default.
    """
    e = np.asarray(e, dtype=float)
    nu = vertex_normals(pair.vertices, pair.sigma_triangles)
    v = np.full(len(pair.vertices), np.nan)
    ids = pair.sigma_vertex_ids
    v[ids] = nu[ids] @ e
    if margin is None:
        margin = 0.5 * pair.max_edge_length()
    return JacobiField(v, float(np.min(v[ids])), float(np.max(v[ids])), float(margin))


def stability_constant(a):
    """Constant c(a) in  int zeta^2 |A|^2 <= c int |grad zeta|^2.

    With ``phi = (1 - a nu.e) / sin(theta)`` one has
    ``Lap phi + |A|^2 phi = |A|^2 / sin(theta)`` and the contact term
    cancels, so stability tested on ``zeta phi`` gives
    ``int zeta^2 |A|^2 phi / sin(theta) <= int phi^2 |grad zeta|^2``.
    Bounding ``phi`` between ``(1 - a)/sin`` and ``(1 + a)/sin`` yields
    ``c = (1 + a)^2 / (1 - a)``.
    """
    if not 0 <= a < 1:
        raise ValueError("a must lie in [0, 1)")
    return (1 + a) ** 2 / (1 - a)


@dataclass
class StabilityInequality:
    lhs: float
    rhs: float
    constant: float

    @property
    def holds(self):
        return self.lhs <= self.rhs


def stability_inequality_check(pair, zeta):
    """Both sides of ``int zeta^2 |A|^2 <= c(a) int |grad zeta|^2`` on Sigma."""
    zeta = np.asarray(zeta, dtype=float)
    c = stability_constant(pair.a)
    if not np.any(zeta):
        return StabilityInequality(0.0, 0.0, c)
    V = pair.vertices
    nv = len(V)
    tris = pair.sigma_triangles
    K, _ = p1_matrices(V, tris, nv)
    cf = curvature_fields(pair)
    A2 = _fill_band(cf.A2, cf.boundary_band, adjacency(nv, tris))
    A2 = np.where(np.isnan(A2), 0.0, A2)
    Av = vertex_areas(V, tris)
    lhs = math.fsum(zeta * zeta * A2 * Av)
    rhs = c * float(zeta @ (K @ zeta))
    return StabilityInequality(lhs, max(rhs, 0.0), c)


@dataclass
class CurvatureDistance:
    product: np.ndarray
    sup: float
    free_boundary: bool


def sigma_graph_distance(pair, sources):
    """Shortest edge-path length on Sigma from the source vertices."""
    V = pair.vertices
    e = triangle_edges(pair.sigma_triangles)
    w = np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1)
    nv = len(V)
    G = sp.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(nv, nv)).tocsr()
    return csgraph.dijkstra(G, directed=False, indices=np.asarray(sources), min_only=True)


def curvature_distance_product(pair):
    """``|A|(x) * dist_Sigma(x, boundary of Sigma off the wall)`` and its sup.

    Without a free boundary the Euclidean diameter of Sigma is used.
    """
    V = pair.vertices
    nv = len(V)
    ids = pair.sigma_vertex_ids
    cf = curvature_fields(pair)
    A2 = _fill_band(cf.A2, cf.boundary_band, adjacency(nv, pair.sigma_triangles))
    A = np.sqrt(np.maximum(np.where(np.isnan(A2), 0.0, A2), 0.0))
    rim = np.flatnonzero(pair.rim_mask & np.isin(np.arange(nv), ids))
    if len(rim):
        dist = sigma_graph_distance(pair, rim)
    else:
        dist = np.full(nv, _diameter(V[ids]))
    prod = np.full(nv, np.nan)
    prod[ids] = A[ids] * dist[ids]
    return CurvatureDistance(prod, float(np.nanmax(prod[ids])), bool(len(rim)))


def _diameter(P):
    try:
        P = P[ConvexHull(P).vertices]
    except QhullError:
        pass  # flat or tiny point sets: use them all
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    return float(np.max(D))


# ---------------------------------------------------------------------------
# blow-up


@dataclass
class PlaneFit:
    normal: np.ndarray
    centroid: np.ndarray
    rms: float
    count: int


@dataclass
class RescaledSheets:
    scale: float
    vertices: np.ndarray
    sigma_triangles: np.ndarray
    gamma_triangles: np.ndarray


@dataclass
class BlowupReport:
    center: np.ndarray
    scales: np.ndarray
    rescaled: list
    sigma_fits: list
    gamma_fits: list
    wedge_fit: tuple
    density_at_scale: np.ndarray
    mesh_size: float
    gamma_empty: bool

    @property
    def dihedral(self):
        return self.wedge_fit[2]


def fit_plane(points, weights):
    """Weighted least-squares plane; RMS distance is weighted too."""
    w = weights / np.sum(weights)
    c = w @ points
    X = (points - c) * np.sqrt(w)[:, None]
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    n = vt[-1]
    rms = float(math.sqrt(max(np.sum(w * ((points - c) @ n) ** 2), 0.0)))
    return PlaneFit(n, c, rms, len(points))


def _sheet_fit(V, tris, x, rho):
    """Plane fit to the part of a sheet inside B(x, rho), area weighted."""
    areas = clipped_areas(V, tris, x, rho)
    keep = areas > 0
    if np.count_nonzero(keep) < 3:
        return None
    cent = V[np.asarray(tris)[keep]].mean(axis=1)
    return fit_plane(cent, areas[keep])


def wedge_angle(fit_c, fit_k):
    """(normal C, normal K, dihedral) with dihedral = pi - angle between the sheets.

    Each half-plane direction is the in-plane unit vector perpendicular to
    the common edge, pointing to the fitted sheet's centroid.
    """
    tau = np.cross(fit_c.normal, fit_k.normal)
    if np.linalg.norm(tau) < 1e-12:
        return fit_c.normal, fit_k.normal, 0.0
    tau /= np.linalg.norm(tau)
    # a point on the common line, nearest to both centroids in the least-squares sense
    A = np.vstack([fit_c.normal, fit_k.normal, tau])
    b = np.array([fit_c.normal @ fit_c.centroid, fit_k.normal @ fit_k.centroid,
                  tau @ (0.5 * (fit_c.centroid + fit_k.centroid))])
    base = np.linalg.solve(A, b)
    dirs = []
    for fit in (fit_c, fit_k):
        u = np.cross(fit.normal, tau)
        if u @ (fit.centroid - base) < 0:
            u = -u
        dirs.append(u)
    opening = math.acos(float(np.clip(dirs[0] @ dirs[1], -1.0, 1.0)))
    return fit_c.normal, fit_k.normal, math.pi - opening


def blowup(pair, domain, x, scales):
    """Rescale around ``x`` and fit planes to both sheets at each scale.

    Scales must be at least four local mesh sizes.  The wedge comes from
    the finest scale.  Without wall sheet near ``x`` the dihedral is NaN
    and ``gamma_empty`` is set.
    """
    x = np.asarray(x, dtype=float)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    h = local_mesh_size(pair, x, scales[-1])
    if scales[-1] < 4 * h:
        raise ScaleBelowResolution(f"scale {scales[-1]:.4g} is below four local mesh sizes {h:.4g}")
    V = pair.vertices
    rescaled, sfits, gfits, dens = [], [], [], []
    for rho in scales:
        W = (V - x) / rho
        keep_s = np.any(np.linalg.norm(W[pair.sigma_triangles], axis=2) <= 1.0, axis=1) \
            if len(pair.sigma_triangles) else np.zeros(0, dtype=bool)
        keep_g = np.any(np.linalg.norm(W[pair.gamma_triangles], axis=2) <= 1.0, axis=1) \
            if len(pair.gamma_triangles) else np.zeros(0, dtype=bool)
        rescaled.append(RescaledSheets(float(rho), W, pair.sigma_triangles[keep_s],
                                       pair.gamma_triangles[keep_g]))
        sfits.append(_sheet_fit(V, pair.sigma_triangles, x, rho))
        gfits.append(_sheet_fit(V, pair.gamma_triangles, x, rho))
        dens.append(ball_mass(pair, x, rho) / (rho * rho))
    fc, fk = sfits[-1], gfits[-1]
    empty = fk is None
    if fc is None or fk is None:
        wedge = (None if fc is None else fc.normal, None if fk is None else fk.normal, math.nan)
    else:
        wedge = wedge_angle(fc, fk)
    return BlowupReport(x, scales, rescaled, sfits, gfits, wedge, np.array(dens), h, empty)
