"""Discrete surface pairs: the interior sheet and the wetted wall patch.

Both meshes index a single global vertex array.  The contact polyline is the
ordered list of vertex ids shared by the two meshes; it is stored once and
both meshes refer to the same ids, so T-junctions cannot occur.  Boundary
edges of either mesh that are not contact edges form a pinned *rim*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .domain import BALL
from .errors import DanglingContactEdge, InvalidOffset


def _edge_key(e):
    return (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])


def triangle_edges(tris):
    """Directed edges (i -> j) of each triangle, shape (3m, 2)."""
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    return np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])


def boundary_edges(tris):
    """Directed boundary edges of an oriented triangle list."""
    directed = triangle_edges(tris)
    if len(directed) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    und = np.sort(directed, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inv.ravel()] == 1]


def triangle_areas(V, tris):
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    c = np.cross(V[tris[:, 1]] - V[tris[:, 0]], V[tris[:, 2]] - V[tris[:, 0]])
    return 0.5 * np.linalg.norm(c, axis=1)


@dataclass(frozen=True, eq=False)
class SurfacePair:
    """Immutable snapshot of the coupled meshes (Sigma, Gamma).

    ``theta`` is the prescribed contact angle in radians and ``a`` its
    cosine.  ``meta`` carries construction parameters (for instance the
    plane offset of a disk-cap) and never affects geometry.
    """

    vertices: np.ndarray
    sigma_triangles: np.ndarray
    gamma_triangles: np.ndarray
    contact_polyline: np.ndarray
    theta: float
    multiplicity: int = 1
    contact_closed: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        V = np.ascontiguousarray(self.vertices, dtype=float)
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        for name in ("sigma_triangles", "gamma_triangles"):
            t = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 3)
            t.setflags(write=False)
            object.__setattr__(self, name, t)
        c = np.asarray(self.contact_polyline, dtype=np.int64).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "contact_polyline", c)
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be a positive integer")

    @property
    def a(self):
        return math.cos(self.theta)

    def with_vertices(self, V, **meta):
        """Same combinatorics, new positions."""
        new_meta = dict(self.meta)
        new_meta.update(meta)
        return replace(self, vertices=np.array(V, dtype=float), meta=new_meta)

    # -- combinatorial views ---------------------------------------------

    @cached_property
    def sigma_vertex_ids(self):
        return np.unique(self.sigma_triangles)

    @cached_property
    def gamma_vertex_ids(self):
        return np.unique(self.gamma_triangles)

    @property
    def sigma_vertices(self):
        return self.vertices[self.sigma_vertex_ids]

    @property
    def gamma_vertices(self):
        return self.vertices[self.gamma_vertex_ids]

    @cached_property
    def contact_edges(self):
        c = self.contact_polyline
        if len(c) < 2:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.column_stack([c[:-1], c[1:]])
        if self.contact_closed:
            e = np.vstack([e, [c[-1], c[0]]])
        return e

    @cached_property
    def constrained_mask(self):
        """Vertices that must stay on the wall (Gamma and contact vertices)."""
        m = np.zeros(len(self.vertices), dtype=bool)
        m[self.gamma_vertex_ids] = True
        m[self.contact_polyline] = True
        return m

    @cached_property
    def contact_mask(self):
        m = np.zeros(len(self.vertices), dtype=bool)
        m[self.contact_polyline] = True
        return m

    @cached_property
    def rim_mask(self):
        """Vertices on non-contact boundary edges; these are pinned by flows."""
        contact = {_edge_key(e) for e in self.contact_edges.tolist()}
        m = np.zeros(len(self.vertices), dtype=bool)
        for tris in (self.sigma_triangles, self.gamma_triangles):
            for e in boundary_edges(tris).tolist():
                if _edge_key(e) not in contact:
                    m[e] = True
        return m

    @cached_property
    def sigma_interior_mask(self):
        m = np.zeros(len(self.vertices), dtype=bool)
        m[self.sigma_vertex_ids] = True
        m &= ~self.constrained_mask & ~self.rim_mask
        return m

    def max_edge_length(self):
        tris = np.vstack([self.sigma_triangles, self.gamma_triangles])
        e = triangle_edges(tris)
        return float(np.max(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    def sigma_area(self):
        return math.fsum(triangle_areas(self.vertices, self.sigma_triangles)) * self.multiplicity

    def gamma_area(self):
        return math.fsum(triangle_areas(self.vertices, self.gamma_triangles)) * self.multiplicity

    def enclosed_volume(self):
        """Signed volume bounded by Sigma and Gamma (outward orientation)."""
        V = self.vertices
        vol = []
        for tris in (self.sigma_triangles, self.gamma_triangles):
            if len(tris):
                vol.append(np.einsum("ij,ij->i", V[tris[:, 0]],
                                     np.cross(V[tris[:, 1]], V[tris[:, 2]])) / 6.0)
        return math.fsum(np.concatenate(vol)) if vol else 0.0


@dataclass(frozen=True)
class BoundaryFrame:
    """Per contact edge: conormals of Sigma (eta) and Gamma (zeta), wall normal, tangent."""

    edges: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    N: np.ndarray
    tau: np.ndarray
    midpoints: np.ndarray


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    where: object
    detail: str = ""


# ---------------------------------------------------------------------------
# construction


def orthonormal_frame(axis):
    """Deterministic (u, v, w) with w = axis / |axis| and u x v = w."""
    w = np.asarray(axis, dtype=float)
    w = w / np.linalg.norm(w)
    helper = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, w)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v, w


def zip_rings(inner, inner_ang, outer, outer_ang):
    """Triangulate the band between two closed rings, counter-clockwise.

    ``inner`` may have a single vertex (a fan around a pole).  Angles are in
    radians, increasing along each ring.
    """
    ni, no = len(inner), len(outer)
    if ni == 1:
        return [(inner[0], outer[j], outer[(j + 1) % no]) for j in range(no)]
    a0 = inner_ang[0]
    rel = (np.asarray(outer_ang) - a0 + np.pi) % (2 * np.pi) - np.pi
    j0 = int(np.argmin(np.abs(rel)))
    outer = list(outer[j0:]) + list(outer[:j0])
    oa = np.unwrap(np.concatenate([outer_ang[j0:], outer_ang[:j0]]))
    oa = oa - 2 * np.pi * np.round((oa[0] - a0) / (2 * np.pi))
    ia = np.unwrap(np.asarray(inner_ang, dtype=float))
    ia = np.append(ia, ia[0] + 2 * np.pi)
    oa = np.append(oa, oa[0] + 2 * np.pi)
    tris = []
    i = j = 0
    while i < ni or j < no:
        if j < no and (i == ni or oa[j + 1] <= ia[i + 1]):
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def rings_for_resolution(resolution):
    """Number of rings so that a 6k-per-ring disk has about resolution^2 triangles."""
    return max(2, int(round(resolution / math.sqrt(6.0))))


def build_disk_cap(domain, axis, d, theta, resolution):
    """Flat disk ``{x . axis = d}`` in a ball plus the spherical patch below it.

    The combinatorics depend only on ``resolution``, so caps at different
    offsets can be blended vertex by vertex.
    """
    if domain.kind != BALL:
        raise ValueError("disk-caps are defined for ball domains")
    R = domain.radii[0]
    d = float(d)
    if abs(d) >= R:
        raise InvalidOffset(f"|d| = {abs(d)} must be < R = {R}")
    u, v, w = orthonormal_frame(axis)
    c = domain.center
    m = rings_for_resolution(resolution)
    r = math.sqrt(R * R - d * d)

    verts = [c + d * w]
    ring_ids = [[0]]
    ring_angles = [np.zeros(1)]
    for k in range(1, m + 1):
        n = 6 * k
        ang = 2 * np.pi * np.arange(n) / n
        rho = r * k / m
        ids = list(range(len(verts), len(verts) + n))
        for t in ang:
            verts.append(c + d * w + rho * (math.cos(t) * u + math.sin(t) * v))
        ring_ids.append(ids)
        ring_angles.append(ang)
    sigma = []
    for k in range(1, m + 1):
        sigma += zip_rings(ring_ids[k - 1], ring_angles[k - 1], ring_ids[k], ring_angles[k])
    contact = ring_ids[m]

    # Gamma: polar angle measured from the south pole (-w) up to the contact
    # circle, with 2m rings.  Ring counts grow as 6j up to the contact count
    # 6m.  The polar spacing is graded, phi_j = phi_c * G(j / 2m), so that
    # the band touching the contact circle is about half as tall as the
    # circumferential spacing there.
    phi_c = math.acos(-d / R)
    mg = 2 * m
    beta = math.pi * math.sin(phi_c) * mg / (6 * m * phi_c)
    beta = min(max(beta, 0.1), 1.0)
    g_ids = [[len(verts)]]
    verts.append(c - R * w)
    g_angles = [np.zeros(1)]
    for j in range(1, mg):
        n = 6 * min(j, m)
        ang = 2 * np.pi * np.arange(n) / n
        sj = j / mg
        phi = phi_c * ((2 - beta) * sj - (1 - beta) * sj * sj)
        ids = list(range(len(verts), len(verts) + n))
        for t in ang:
            verts.append(c + R * (math.sin(phi) * (math.cos(t) * u + math.sin(t) * v)
                                  - math.cos(phi) * w))
        g_ids.append(ids)
        g_angles.append(ang)
    g_ids.append(contact)
    g_angles.append(ring_angles[m])
    gamma = []
    for j in range(1, mg + 1):
        gamma += zip_rings(g_ids[j - 1], g_angles[j - 1], g_ids[j], g_angles[j])
    # viewed from outside the ball the (u, v) sense is reversed
    gamma = [(t[0], t[2], t[1]) for t in gamma]

    V = np.array(verts)
    # snap wall vertices exactly onto the sphere
    wall = np.unique(np.array(gamma).ravel())
    V[wall] = domain.project_to_boundary(V[wall])
    meta = {"kind": "disk-cap", "axis": tuple(w), "d": d, "R": R, "resolution": int(resolution)}
    return SurfacePair(V, np.array(sigma), np.array(gamma), np.array(contact),
                       float(theta), meta=meta)


# ---------------------------------------------------------------------------
# validation


def validate(pair, domain):
    """List of :class:`Diagnostic`; empty iff every pair invariant holds."""
    out = []
    V = pair.vertices
    tol = domain.tol_boundary
    wall_ids = np.unique(np.concatenate([pair.gamma_vertex_ids, pair.contact_polyline]))
    if len(wall_ids):
        sd = np.abs(domain.signed_distance(V[wall_ids]))
        for vid, dist in zip(wall_ids[sd > tol].tolist(), sd[sd > tol].tolist()):
            out.append(Diagnostic("BoundaryViolation", vid, f"|signed distance| = {dist:.3e}"))

    min_area = 1e-14 * domain.bounding_radius**2
    for name, tris in (("sigma", pair.sigma_triangles), ("gamma", pair.gamma_triangles)):
        if len(tris) == 0:
            continue
        keys = np.sort(tris, axis=1)
        _, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
        for idx in first[counts > 1].tolist():
            out.append(Diagnostic("NonManifold", (name, idx), "duplicated triangle"))
        tris_u = tris[np.sort(first)]
        areas = triangle_areas(V, tris_u)
        for idx in np.nonzero(areas < min_area)[0].tolist():
            out.append(Diagnostic("Degenerate", (name, idx), f"area {areas[idx]:.3e}"))
        directed = triangle_edges(tris_u)
        und = np.sort(directed, axis=1)
        uniq, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        for e in uniq[counts > 2].tolist():
            out.append(Diagnostic("NonManifold", (name, tuple(e)), "edge shared by >2 triangles"))
        dir_keys = {tuple(e) for e in directed.tolist()}
        if len(dir_keys) < len(directed):
            out.append(Diagnostic("Orientation", name, "inconsistent triangle orientation"))

    contact = {_edge_key(e) for e in pair.contact_edges.tolist()}
    if len(set(pair.contact_polyline.tolist())) != len(pair.contact_polyline):
        out.append(Diagnostic("ContactMismatch", "polyline", "repeated contact vertex"))
    bs = {_edge_key(e) for e in boundary_edges(pair.sigma_triangles).tolist()}
    bg = {_edge_key(e) for e in boundary_edges(pair.gamma_triangles).tolist()}
    shared = bs & bg
    if len(pair.gamma_triangles) and shared != contact:
        out.append(Diagnostic("ContactMismatch", "edges",
                              f"{len(shared ^ contact)} edge(s) differ between the polyline "
                              "and the shared boundary"))
    if not len(pair.gamma_triangles) and contact and not contact <= bs:
        out.append(Diagnostic("ContactMismatch", "edges", "contact edges not on the Sigma boundary"))
    if len(pair.gamma_triangles) and contact:
        # shared edges must be traversed in opposite directions by the two meshes
        ds = {tuple(e) for e in boundary_edges(pair.sigma_triangles).tolist()}
        dg = {tuple(e) for e in boundary_edges(pair.gamma_triangles).tolist()}
        same = [e for e in ds & dg if _edge_key(e) in contact]
        if same:
            out.append(Diagnostic("Orientation", "contact", f"{len(same)} contact edge(s) co-oriented"))
    return out


# ---------------------------------------------------------------------------
# refinement and boundary frame


def refine(pair, domain):
    """Split every triangle 1 -> 4 and reproject new wall vertices."""
    V = list(pair.vertices)
    mid = {}

    def midpoint(i, j):
        key = _edge_key((i, j))
        if key not in mid:
            mid[key] = len(V)
            V.append(0.5 * (pair.vertices[i] + pair.vertices[j]))
        return mid[key]

    def split(tris):
        out = []
        for a, b, c in tris.tolist():
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        return np.array(out, dtype=np.int64).reshape(-1, 3)

    sigma = split(pair.sigma_triangles)
    gamma = split(pair.gamma_triangles)
    contact = []
    for a, b in pair.contact_edges.tolist():
        contact += [a, midpoint(a, b)]
    if not pair.contact_closed and len(pair.contact_polyline):
        contact.append(int(pair.contact_polyline[-1]))
    V = np.array(V)
    n_old = len(pair.vertices)
    # contact midpoints slide along Sigma's conormal onto the wall, so a
    # flat Sigma stays flat and the contact curve stays its plane section
    s_table = _edge_to_triangle(pair.sigma_triangles)
    on_contact = set()
    for a, b in pair.contact_edges.tolist():
        m = mid[_edge_key((a, b))]
        on_contact.add(m)
        tris = s_table.get(_edge_key((a, b)))
        if tris:
            eta = _conormal(pair.vertices, pair.sigma_triangles[tris[0]].tolist(), a, b)
            V[m] = _ray_to_boundary(domain, V[m], eta)
    wall_new = {mid[_edge_key(e)] for e in triangle_edges(pair.gamma_triangles).tolist()}
    ids = np.array(sorted(wall_new - on_contact), dtype=np.int64)
    ids = ids[ids >= n_old]
    if len(ids):
        V[ids] = domain.project_to_boundary(V[ids])
    left = np.array(sorted(m for m in on_contact
                           if abs(domain.signed_distance(V[m])) > domain.tol_boundary * 1e-3),
                    dtype=np.int64)
    if len(left):
        V[left] = domain.project_to_boundary(V[left])
    meta = dict(pair.meta)
    meta["refined"] = meta.get("refined", 0) + 1
    return replace(pair, vertices=V, sigma_triangles=sigma, gamma_triangles=gamma,
                   contact_polyline=np.array(contact, dtype=np.int64), meta=meta)


def _ray_to_boundary(domain, start, direction, max_iter=50):
    """Point ``start + s * direction`` on the wall, by Newton in ``s``."""
    x = np.array(start, dtype=float)
    for _ in range(max_iter):
        sd = float(domain.signed_distance(x))
        if abs(sd) <= 1e-15 * domain.bounding_radius:
            break
        slope = float(domain.outward_normal(domain.project_to_boundary(x), check=False) @ direction)
        if abs(slope) < 1e-3:
            return domain.project_to_boundary(x)
        x = x - (sd / slope) * direction
    return x


def _edge_to_triangle(tris):
    table = {}
    for t, (a, b, c) in enumerate(tris.tolist()):
        for e in ((a, b), (b, c), (c, a)):
            table.setdefault(_edge_key(e), []).append(t)
    return table


def _conormal(V, tri, i, j):
    """Unit conormal of edge (i, j) in triangle ``tri``, pointing away from it."""
    opp = [k for k in tri if k != i and k != j][0]
    tau = V[j] - V[i]
    tau = tau / np.linalg.norm(tau)
    w = 0.5 * (V[i] + V[j]) - V[opp]
    w = w - np.dot(w, tau) * tau
    return w / np.linalg.norm(w)


def extract_boundary_frame(pair, domain):
    V = pair.vertices
    edges = pair.contact_edges
    s_table = _edge_to_triangle(pair.sigma_triangles)
    g_table = _edge_to_triangle(pair.gamma_triangles)
    k = len(edges)
    eta, zeta, tau = np.zeros((k, 3)), np.zeros((k, 3)), np.zeros((k, 3))
    for n, (i, j) in enumerate(edges.tolist()):
        key = _edge_key((i, j))
        if key not in s_table or key not in g_table:
            raise DanglingContactEdge(f"contact edge {(i, j)} lacks a "
                                      f"{'Sigma' if key not in s_table else 'Gamma'} triangle")
        t = V[j] - V[i]
        tau[n] = t / np.linalg.norm(t)
        eta[n] = _conormal(V, pair.sigma_triangles[s_table[key][0]].tolist(), i, j)
        zeta[n] = _conormal(V, pair.gamma_triangles[g_table[key][0]].tolist(), i, j)
    mids = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]]) if k else np.zeros((0, 3))
    N = domain.outward_normal(domain.project_to_boundary(mids), check=False) if k else np.zeros((0, 3))
    return BoundaryFrame(edges, eta, zeta, N, tau, mids)
