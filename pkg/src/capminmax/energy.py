"""Capillarity energy F_a = |Sigma| + a |Gamma| on a discrete pair.

The gradient is the exact derivative of the discrete triangle areas.  At
wall-constrained vertices (Gamma and contact vertices) it is projected onto
the tangent plane of the wall, which makes it the Riesz representative of
the first variation over wall-tangential fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InsufficientNeighborhood, NotTangential
from .surface import extract_boundary_frame, triangle_areas


@dataclass
class EnergyReport:
    area_sigma: float
    area_gamma: float
    a: float
    F_a: float
    grad: np.ndarray | None = None
    grad_norm: float = float("nan")
    contact_residuals: np.ndarray | None = None

    @property
    def max_contact_residual(self):
        if self.contact_residuals is None or len(self.contact_residuals) == 0:
            return float("nan")
        return float(np.max(np.abs(self.contact_residuals)))

    def to_record(self):
        return {
            "area_sigma": self.area_sigma,
            "area_gamma": self.area_gamma,
            "a": self.a,
            "F_a": self.F_a,
            "grad_norm": self.grad_norm,
            "max_contact_residual": self.max_contact_residual,
        }


@dataclass
class CurvatureFields:
    """Per-vertex curvature data on Sigma (NaN outside Sigma's interior band)."""

    H: np.ndarray
    A2: np.ndarray
    mean_curvature: np.ndarray
    boundary_band: np.ndarray = field(repr=False)


def area_gradient(V, tris):
    """d(total area)/d(vertex), shape (len(V), 3)."""
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    g = np.zeros_like(V)
    if len(tris) == 0:
        return g
    p0, p1, p2 = V[tris[:, 0]], V[tris[:, 1]], V[tris[:, 2]]
    c = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(c, axis=1)
    n = c / np.where(norm > 0, norm, 1.0)[:, None]
    parts = (0.5 * np.cross(p1 - p2, n), 0.5 * np.cross(p2 - p0, n), 0.5 * np.cross(p0 - p1, n))
    nv = len(V)
    for k, part in enumerate(parts):
        for axis in range(3):
            g[:, axis] += np.bincount(tris[:, k], weights=part[:, axis], minlength=nv)
    return g


def capillarity_energy(pair):
    s = pair.sigma_area()
    g = pair.gamma_area()
    a = pair.a
    return EnergyReport(s, g, a, s + a * g)


def full_gradient(pair):
    """Unprojected gradient of F_a (includes wall-normal components)."""
    V = pair.vertices
    g = area_gradient(V, pair.sigma_triangles) + pair.a * area_gradient(V, pair.gamma_triangles)
    return g * pair.multiplicity


def wall_normals(pair, domain):
    """Outward wall normal at constrained vertices, zero elsewhere."""
    N = np.zeros_like(pair.vertices)
    m = pair.constrained_mask
    if np.any(m):
        N[m] = domain.outward_normal(pair.vertices[m], check=False)
    return N


def project_tangential(vectors, N):
    """Remove the N component (rows with N = 0 are left untouched)."""
    return vectors - np.sum(vectors * N, axis=1)[:, None] * N


def energy_gradient(pair, domain):
    """EnergyReport with the projected gradient; grad_norm skips pinned rims."""
    rep = capillarity_energy(pair)
    g = project_tangential(full_gradient(pair), wall_normals(pair, domain))
    rep.grad = g
    free = ~pair.rim_mask
    used = np.zeros(len(g), dtype=bool)
    used[pair.sigma_vertex_ids] = True
    used[pair.gamma_vertex_ids] = True
    free &= used
    rep.grad_norm = float(np.max(np.linalg.norm(g[free], axis=1))) if np.any(free) else 0.0
    return rep


def first_variation(pair, domain, X, tol=1e-8):
    """d/dt F_a((id + tX)(pair)) at t = 0 for a wall-tangential field X."""
    X = np.asarray(X, dtype=float)
    N = wall_normals(pair, domain)
    m = pair.constrained_mask
    if np.any(m):
        normal = np.abs(np.sum(X[m] * N[m], axis=1))
        size = np.linalg.norm(X[m], axis=1)
        # the absolute floor keeps subnormal fields from tripping the check
        floor = 1e-14 * float(np.max(np.abs(X))) + 1e-300
        if np.any(normal > tol * size + floor):
            raise NotTangential("X has a wall-normal component at constrained vertices")
    return math.fsum(np.sum(full_gradient(pair) * X, axis=1))


def contact_angle_residual(pair, domain):
    """eta . N - sin(theta) per contact vertex, eta averaged over adjacent edges."""
    frame = extract_boundary_frame(pair, domain)
    ids = pair.contact_polyline
    pos = {v: k for k, v in enumerate(ids.tolist())}
    eta = np.zeros((len(ids), 3))
    count = np.zeros(len(ids))
    for e, (i, j) in enumerate(frame.edges.tolist()):
        for v in (i, j):
            eta[pos[v]] += frame.eta[e]
            count[pos[v]] += 1
    eta /= np.maximum(count, 1)[:, None]
    N = domain.outward_normal(pair.vertices[ids], check=False)
    return np.sum(eta * N, axis=1) - math.sin(pair.theta)


def energy_report(pair, domain):
    """Areas, F_a, projected gradient and contact residuals in one record."""
    rep = energy_gradient(pair, domain)
    if len(pair.contact_edges) and len(pair.gamma_triangles):
        rep.contact_residuals = contact_angle_residual(pair, domain)
    return rep


# ---------------------------------------------------------------------------
# curvature


def vertex_areas(V, tris):
    """Barycentric (one third) vertex areas."""
    A = triangle_areas(V, tris) / 3.0
    out = np.zeros(len(V))
    for k in range(3):
        out += np.bincount(tris[:, k], weights=A, minlength=len(V))
    return out


def vertex_normals(V, tris):
    """Area-weighted vertex normals following the triangle orientation."""
    tris = np.asarray(tris, dtype=np.int64)
    c = np.cross(V[tris[:, 1]] - V[tris[:, 0]], V[tris[:, 2]] - V[tris[:, 0]])
    n = np.zeros_like(V)
    for k in range(3):
        for axis in range(3):
            n[:, axis] += np.bincount(tris[:, k], weights=c[:, axis], minlength=len(V))
    norm = np.linalg.norm(n, axis=1)
    return n / np.where(norm > 0, norm, 1.0)[:, None]


def adjacency(nv, tris):
    tris = np.asarray(tris, dtype=np.int64)
    i = np.concatenate([tris[:, 0], tris[:, 1], tris[:, 2], tris[:, 1], tris[:, 2], tris[:, 0]])
    j = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0], tris[:, 0], tris[:, 1], tris[:, 2]])
    A = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(nv, nv)).tocsr()
    A.data[:] = 1.0
    return A


def _quadric_fit(p0, normal, pts):
    """Shape operator of ``z = d x + e y + a x^2 + b xy + c y^2`` at the origin."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    q = pts - p0
    x, y, z = q @ u, q @ v, q @ normal
    M = np.column_stack([x, y, x * x, x * y, y * y])
    coef, *_ = np.linalg.lstsq(M, z, rcond=None)
    d, e, a, b, c = coef
    first = np.array([[1 + d * d, d * e], [d * e, 1 + e * e]])
    second = np.array([[2 * a, b], [b, 2 * c]]) / math.sqrt(1 + d * d + e * e)
    return np.linalg.solve(first, second)


def curvature_fields(pair, include_boundary=False):
    """Mean-curvature vectors and |A|^2 on Sigma.

    ``H`` (sum convention) comes from the area gradient divided by the
    barycentric vertex area.  ``A2`` comes from a quadric fit over the
    2-ring; boundary vertices form a separate band and get NaN unless
    ``include_boundary`` is set (one-sided fits).
    """
    V = pair.vertices
    tris = pair.sigma_triangles
    nv = len(V)
    areas = vertex_areas(V, tris)
    g = area_gradient(V, tris)
    H = np.full((nv, 3), np.nan)
    ids = pair.sigma_vertex_ids
    H[ids] = -g[ids] / areas[ids][:, None]

    band = np.zeros(nv, dtype=bool)
    band[pair.contact_polyline] = True
    band |= pair.rim_mask
    band[np.setdiff1d(np.arange(nv), ids)] = False

    normals = vertex_normals(V, tris)
    A1 = adjacency(nv, tris)
    A2ring = (A1 + A1 @ A1).tocsr()
    A2 = np.full(nv, np.nan)
    Hs = np.full(nv, np.nan)
    targets = ids if include_boundary else ids[~band[ids]]
    for vid in targets.tolist():
        nb = A2ring.indices[A2ring.indptr[vid]:A2ring.indptr[vid + 1]]
        nb = nb[nb != vid]
        dirs = V[nb] - V[vid]
        dirs -= np.outer(dirs @ normals[vid], normals[vid])
        if len(nb) < 5 or np.linalg.matrix_rank(dirs, tol=1e-12 * (np.abs(dirs).max() + 1e-300)) < 2:
            raise InsufficientNeighborhood(f"vertex {vid} has too few neighbor directions")
        S = _quadric_fit(V[vid], normals[vid], V[nb])
        A2[vid] = float(np.sum(S * S.T))
        Hs[vid] = float(np.trace(S))
    return CurvatureFields(H=H, A2=A2, mean_curvature=Hs, boundary_band=band)
