"""Reference meshes used by tests, controls and the analysis instruments.

All of these return :class:`SurfacePair` objects.  Sheets without a wall
patch have an empty Gamma and a pinned rim.
"""

from __future__ import annotations

import math

import numpy as np

from .surface import SurfacePair, orthonormal_frame, rings_for_resolution, zip_rings


def _polar_sheet(radial, resolution, embed):
    """Ring mesh on a polar parameter disk; ``embed(s, t)`` maps to 3-D.

    ``radial`` maps ring index fraction in [0, 1] to the radial parameter.
    Returns vertices, triangles and the ids of the outer ring.
    """
    m = rings_for_resolution(resolution)
    verts = [embed(0.0, 0.0)]
    ids, angs = [[0]], [np.zeros(1)]
    for k in range(1, m + 1):
        n = 6 * k
        ang = 2 * np.pi * np.arange(n) / n
        s = radial(k / m)
        ring = list(range(len(verts), len(verts) + n))
        verts += [embed(s, t) for t in ang]
        ids.append(ring)
        angs.append(ang)
    tris = []
    for k in range(1, m + 1):
        tris += zip_rings(ids[k - 1], angs[k - 1], ids[k], angs[k])
    return np.array(verts), np.array(tris), np.array(ids[m])


def flat_disk(radius=1.0, resolution=32, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0),
              theta=math.pi / 2):
    """Flat disk with a pinned rim and no wall patch."""
    u, v, w = orthonormal_frame(normal)
    c = np.asarray(center, dtype=float)
    V, T, rim = _polar_sheet(lambda f: radius * f, resolution,
                             lambda s, t: c + s * (math.cos(t) * u + math.sin(t) * v))
    return SurfacePair(V, T, np.zeros((0, 3)), [], theta, contact_closed=False,
                       meta={"kind": "flat-disk", "radius": radius, "normal": tuple(w)})


def sphere_patch(R=1.0, polar_max=math.pi / 4, resolution=32, center=(0.0, 0.0, 0.0),
                 pole=(0.0, 0.0, 1.0), inward=False, theta=math.pi / 2):
    """Spherical cap of geodesic radius ``R * polar_max`` around ``pole``.

    Normals point away from the sphere center unless ``inward`` is set.
    """
    u, v, w = orthonormal_frame(pole)
    c = np.asarray(center, dtype=float)

    def embed(phi, t):
        return c + R * (math.sin(phi) * (math.cos(t) * u + math.sin(t) * v) + math.cos(phi) * w)

    V, T, rim = _polar_sheet(lambda f: polar_max * f, resolution, embed)
    if inward:
        T = T[:, [0, 2, 1]]
    return SurfacePair(V, T, np.zeros((0, 3)), [], theta, contact_closed=False,
                       meta={"kind": "sphere-patch", "R": R, "polar_max": polar_max})


def grid_sheet(nx, ny, x_range=(-1.0, 1.0), y_range=(-1.0, 1.0), height=None):
    """Triangulated rectangle with alternating diagonals.

    ``height(x, y)`` gives the z coordinate (default flat).  Returns
    vertices, triangles and the (ny+1, nx+1) id grid.
    """
    xs = np.linspace(*x_range, nx + 1)
    ys = np.linspace(*y_range, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    Z = np.zeros_like(X) if height is None else height(X, Y)
    V = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    ids = np.arange(V.shape[0]).reshape(ny + 1, nx + 1)
    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = ids[j, i], ids[j, i + 1], ids[j + 1, i + 1], ids[j + 1, i]
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return V, np.array(tris), ids


def square_patch(size=1.0, n=8, theta=math.pi / 2):
    """Flat unit-square sheet (side ``size``) with a pinned rim."""
    V, T, _ = grid_sheet(n, n, (0.0, size), (0.0, size))
    return SurfacePair(V, T, np.zeros((0, 3)), [], theta, contact_closed=False,
                       meta={"kind": "square"})


def cylinder_patch(r=0.5, length=1.0, resolution=32, span=math.pi / 2, theta=math.pi / 2):
    """Patch of the cylinder x^2 + y^2 = r^2 with outward normals."""
    n_around = max(4, resolution // 2)
    n_along = max(4, int(round(length / (span * r / n_around))))
    V, T, ids = grid_sheet(n_around, n_along, (-span / 2, span / 2), (-length / 2, length / 2))
    t, z = V[:, 0].copy(), V[:, 1].copy()
    V = np.column_stack([r * np.cos(t), r * np.sin(t), z])
    # (t, z) parametrization: d/dt x d/dz is outward
    return SurfacePair(V, T, np.zeros((0, 3)), [], theta, contact_closed=False,
                       meta={"kind": "cylinder", "r": r})


def single_triangle(theta=math.pi / 2):
    V = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, math.sqrt(3) / 2, 0.0]])
    return SurfacePair(V, [[0, 1, 2]], np.zeros((0, 3)), [], theta, contact_closed=False,
                       meta={"kind": "triangle"})


def wall_wedge(theta, n=8, half_width=1.0, depth=1.0):
    """Capillary wedge over the flat wall ``{z = 0}`` (domain ``{z >= 0}``).

    Sigma is the half-plane through the x-axis rising at angle ``theta``
    from the dry side of the wall, Gamma the wetted strip ``y <= 0``.  The
    pair is the exact discrete stationary configuration; every boundary edge
    except the contact line is a rim.  Returns the pair; the sheet direction
    is stored in ``meta['direction']``.
    """
    direction = np.array([0.0, math.cos(theta), math.sin(theta)])
    xs = np.linspace(-half_width, half_width, n + 1)
    ts = np.linspace(0.0, depth, n + 1)
    verts = []
    sig_ids = np.zeros((n + 1, n + 1), dtype=np.int64)
    for j, t in enumerate(ts):
        for i, x in enumerate(xs):
            sig_ids[j, i] = len(verts)
            verts.append(np.array([x, 0.0, 0.0]) + t * direction)
    gam_ids = np.zeros((n + 1, n + 1), dtype=np.int64)
    gam_ids[0] = sig_ids[0]
    for j in range(1, n + 1):
        for i, x in enumerate(xs):
            gam_ids[j, i] = len(verts)
            verts.append(np.array([x, -ts[j], 0.0]))

    def quads(ids, flip):
        tris = []
        for j in range(n):
            for i in range(n):
                a, b, c, d = ids[j, i], ids[j, i + 1], ids[j + 1, i + 1], ids[j + 1, i]
                pair = [(a, b, c), (a, c, d)] if (i + j) % 2 == 0 else [(a, b, d), (b, c, d)]
                tris += [(p[0], p[2], p[1]) for p in pair] if flip else pair
        return tris

    # outward from the wetted wedge: Gamma faces -z, Sigma faces away from it
    sigma = quads(sig_ids, flip=True)
    gamma = quads(gam_ids, flip=False)
    V = np.array(verts)
    pair = SurfacePair(V, sigma, gamma, sig_ids[0], theta, contact_closed=False,
                       meta={"kind": "wall-wedge", "direction": tuple(direction), "n": n})
    return pair


def add_pyramid_bump(pair, center, radius, height, direction=None):
    """Tent-shaped displacement of unconstrained Sigma vertices.

    Vertices within ``radius`` of ``center`` move by
    ``height * (1 - dist / radius)`` along ``direction`` (default: the
    mean Sigma normal of the displaced vertices).
    """
    V = np.array(pair.vertices)
    c = np.asarray(center, dtype=float)
    dist = np.linalg.norm(V - c, axis=1)
    movable = np.zeros(len(V), dtype=bool)
    movable[pair.sigma_vertex_ids] = True
    movable &= ~pair.constrained_mask & ~pair.rim_mask & (dist < radius)
    if direction is None:
        from .energy import vertex_normals
        n = vertex_normals(V, pair.sigma_triangles)[movable].sum(axis=0)
        direction = n / np.linalg.norm(n)
    direction = np.asarray(direction, dtype=float)
    V[movable] += (height * (1.0 - dist[movable] / radius))[:, None] * direction
    return pair.with_vertices(V)
