"""Analytic convex containers.

A :class:`ConvexDomain` is either a ball, an axis-aligned ellipsoid or a
level-set body ``{f <= 0}`` described by a level function with gradient and
Hessian.  Every public routine accepts a single point ``(3,)`` or a stack of
points ``(n, 3)`` and returns arrays of the matching shape.

Signed distances are negative inside.  The boundary tolerance used by every
"on the boundary" predicate is ``1e-9 * bounding_radius``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ellipeinc, ellipkinc

from .errors import NotOnBoundary, ProjectionFailed

BALL = "ball"
ELLIPSOID = "ellipsoid"
LEVEL_SET = "level-set"


def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _unstack(values, single):
    return values[0] if single else values


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """Immutable convex body M with C^2 boundary.

    Use the constructors :meth:`ball`, :meth:`ellipsoid`,
    :meth:`superquadric` or :meth:`halfspace` rather than the raw
    initializer.
    """

    kind: str
    radii: tuple
    center: np.ndarray
    bounding_radius: float
    level: Optional[Callable] = field(default=None, repr=False)
    level_grad: Optional[Callable] = field(default=None, repr=False)
    level_hess: Optional[Callable] = field(default=None, repr=False)
    label: str = ""
    max_iter: int = 200

    # -- constructors -----------------------------------------------------

    @classmethod
    def ball(cls, radius=1.0, center=(0.0, 0.0, 0.0)):
        radius = float(radius)
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        c = np.array(center, dtype=float)
        return cls(BALL, (radius,), c, radius, label=f"ball R={radius:g}")

    @classmethod
    def ellipsoid(cls, radii, center=(0.0, 0.0, 0.0)):
        r = tuple(float(v) for v in radii)
        if len(r) != 3 or min(r) <= 0:
            raise ValueError("ellipsoid needs three positive semi-axes")
        c = np.array(center, dtype=float)
        r_arr = np.array(r)

        def f(x):
            return np.sum(((x - c) / r_arr) ** 2, axis=-1) - 1.0

        def g(x):
            return 2.0 * (x - c) / r_arr**2

        def h(x):
            n = np.atleast_2d(x).shape[0]
            return np.broadcast_to(np.diag(2.0 / r_arr**2), (n, 3, 3)).copy()

        return cls(ELLIPSOID, r, c, max(r), f, g, h, label=f"ellipsoid {r}")

    @classmethod
    def superquadric(cls, radii, exponent=4, center=(0.0, 0.0, 0.0)):
        """Level-set body ``sum |(x_i - c_i)/r_i|^p <= 1`` with even ``p >= 2``."""
        p = int(exponent)
        if p < 2 or p % 2:
            raise ValueError("superquadric exponent must be even and >= 2")
        r_arr = np.array([float(v) for v in radii])
        c = np.array(center, dtype=float)

        def f(x):
            return np.sum(((x - c) / r_arr) ** p, axis=-1) - 1.0

        def g(x):
            return p * (x - c) ** (p - 1) / r_arr**p

        def h(x):
            d = p * (p - 1) * (x - c) ** (p - 2) / r_arr**p
            out = np.zeros(d.shape[:-1] + (3, 3))
            for i in range(3):
                out[..., i, i] = d[..., i]
            return out

        return cls(LEVEL_SET, tuple(r_arr), c, float(np.sqrt(np.sum(r_arr**2))),
                   f, g, h, label=f"superquadric p={p} {tuple(r_arr)}")

    @classmethod
    def halfspace(cls, normal=(0.0, 0.0, -1.0), offset=0.0, bounding_radius=1.0):
        """Flat wall ``{x . n <= offset}``; ``n`` is the outward normal.

        Not bounded, so ``bounding_radius`` only sets the tolerance scale.
        """
        n = np.array(normal, dtype=float)
        n /= np.linalg.norm(n)
        off = float(offset)

        def f(x):
            return x @ n - off

        def g(x):
            return np.broadcast_to(n, np.shape(x)).copy()

        def h(x):
            return np.zeros(np.shape(x)[:-1] + (3, 3))

        return cls(LEVEL_SET, (np.inf,), n * off, float(bounding_radius), f, g, h,
                   label="halfspace")

    # -- basic geometry ---------------------------------------------------

    @property
    def tol_boundary(self):
        return 1e-9 * self.bounding_radius

    @property
    def is_flat(self):
        return self.kind == LEVEL_SET and self.radii == (np.inf,)

    def signed_distance(self, x):
        pts, single = _as_points(x)
        if self.kind == BALL:
            d = np.linalg.norm(pts - self.center, axis=1) - self.radii[0]
        elif self.is_flat:
            d = self.level(pts)
        else:
            proj = self._project(pts)
            d = np.linalg.norm(pts - proj, axis=1)
            d = np.where(self.level(pts) < 0, -d, d)
        return _unstack(d, single)

    def contains(self, x):
        return self.signed_distance(x) <= self.tol_boundary

    def on_boundary(self, x, tol=None):
        tol = self.tol_boundary if tol is None else tol
        return np.abs(self.signed_distance(x)) <= tol

    def outward_normal(self, x, check=True):
        """Unit outward normal at boundary points.

        Raises :class:`NotOnBoundary` when ``check`` is set and a point is
        farther than ``tol_boundary`` from the boundary.
        """
        pts, single = _as_points(x)
        if check:
            bad = ~np.atleast_1d(self.on_boundary(pts))
            if np.any(bad):
                raise NotOnBoundary(f"{int(bad.sum())} point(s) not on the boundary, "
                                    f"first {pts[bad][0]}")
        return _unstack(self._normal(pts), single)

    def extended_normal(self, x):
        """Normal of the nearest boundary point (gradient of the distance)."""
        pts, single = _as_points(x)
        return _unstack(self._normal(self._project(pts)), single)

    def _normal(self, pts):
        if self.kind == BALL:
            v = pts - self.center
        else:
            v = self.level_grad(pts)
        return v / np.linalg.norm(v, axis=1)[:, None]

    def project_to_boundary(self, x):
        pts, single = _as_points(x)
        return _unstack(self._project(pts), single)

    def _project(self, pts):
        if self.kind == BALL:
            v = pts - self.center
            n = np.linalg.norm(v, axis=1)
            zero = n == 0
            if np.any(zero):
                v = v.copy()
                v[zero] = (1.0, 0.0, 0.0)
                n = np.where(zero, 1.0, n)
            return self.center + self.radii[0] * v / n[:, None]
        if self.kind == ELLIPSOID:
            return self._project_ellipsoid(pts)
        return self._project_level_set(pts)

    def _project_ellipsoid(self, pts):
        r = np.array(self.radii)
        y = pts - self.center
        k = int(np.argmin(r))
        rk = r[k]
        scale = self.bounding_radius
        y = y.copy()
        # The closed form needs a nonzero coordinate along the shortest axis.
        tiny = np.abs(y[:, k]) < 1e-12 * scale
        y[tiny, k] = np.where(y[tiny, k] < 0, -1.0, 1.0) * 1e-12 * scale
        t = -rk**2 + rk * np.abs(y[:, k])
        for _ in range(4 * self.max_iter):
            q = r * y / (r**2 + t[:, None])
            g = np.sum(q**2, axis=1) - 1.0
            dg = -2.0 * np.sum(q**2 / (r**2 + t[:, None]), axis=1)
            step = g / dg
            t = t - step
            if np.all((np.abs(step) <= 4e-16 * (np.abs(t) + rk**2)) | (np.abs(g) <= 1e-15)):
                break
        else:
            raise ProjectionFailed("ellipsoid projection did not converge")
        p = r**2 * y / (r**2 + t[:, None])
        # one Newton correction along the gradient removes residual level error
        f = np.sum((p / r) ** 2, axis=1) - 1.0
        gr = 2.0 * p / r**2
        p = p - (f / np.sum(gr**2, axis=1))[:, None] * gr
        return p + self.center

    def _onto_level(self, y, tol):
        """Newton steps along the gradient until |f| / |grad f| <= tol."""
        f, grad = self.level, self.level_grad
        for _ in range(50):
            fv = f(y)
            gv = grad(y)
            gg = np.sum(gv**2, axis=1)
            y = y - (fv / gg)[:, None] * gv
            if np.all(np.abs(fv) / np.sqrt(gg) <= tol):
                break
        return y

    def _project_level_set(self, pts):
        grad = self.level_grad
        y = pts.copy()
        # Degenerate points with vanishing gradient start along +e1.
        g0 = grad(y)
        flat = np.linalg.norm(g0, axis=1) < 1e-14
        if np.any(flat):
            y[flat] = self._ray_hit(y[flat], np.array([1.0, 0.0, 0.0]))
        tol = 1e-14 * self.bounding_radius
        y = self._onto_level(y, tol)
        for _ in range(self.max_iter):
            gv = grad(y)
            gn = np.linalg.norm(gv, axis=1)
            n = gv / gn[:, None]
            d = pts - y
            dn = np.sum(d * n, axis=1)
            tang = d - dn[:, None] * n
            tn = np.linalg.norm(tang, axis=1)
            active = tn > 1e-13 * self.bounding_radius
            if not np.any(active):
                return self._onto_level(y, tol)
            # Newton step along the surface: an offset dn along the normal
            # stretches tangential distances by 1 + kappa * dn.  Beyond the
            # focal distance fall back to a plain step; then backtrack until
            # the distance to the target decreases.
            t = tang / np.maximum(tn, 1e-300)[:, None]
            kappa = np.einsum("ni,nij,nj->n", t, self.level_hess(y), t) / gn
            stretch = 1.0 + kappa * dn
            scale = np.where(stretch > 0.1, 1.0 / np.maximum(stretch, 0.1), 1.0)
            dist = np.linalg.norm(d, axis=1)
            todo = active.copy()
            for _ in range(40):
                idx = np.flatnonzero(todo)
                trial = self._onto_level(y[idx] + scale[idx, None] * tang[idx], tol)
                # close to the foot point distances stop resolving the step;
                # there the Newton step converges on its own
                better = ((np.linalg.norm(pts[idx] - trial, axis=1) <= dist[idx])
                          | (tn[idx] < 1e-6 * self.bounding_radius))
                y[idx[better]] = trial[better]
                todo[idx[better]] = False
                if not np.any(todo):
                    break
                scale[todo] *= 0.5
        raise ProjectionFailed(f"level-set projection did not converge in {self.max_iter} iterations")

    def _ray_hit(self, starts, direction):
        """Bisection for the boundary crossing along ``start + s * direction``."""
        out = np.empty_like(starts)
        for i, s0 in enumerate(starts):
            lo, hi = 0.0, self.bounding_radius
            while self.level(s0 + hi * direction) < 0:
                hi *= 2.0
                if hi > 1e6 * self.bounding_radius:
                    raise ProjectionFailed("ray never leaves the domain")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if self.level(s0 + mid * direction) < 0:
                    lo = mid
                else:
                    hi = mid
            out[i] = s0 + 0.5 * (lo + hi) * direction
        return out

    # -- curvature --------------------------------------------------------

    def principal_curvatures(self, x):
        """Principal curvatures (convex => nonnegative) at boundary points."""
        pts, single = _as_points(x)
        if self.kind == BALL:
            k = np.full((len(pts), 2), 1.0 / self.radii[0])
            return _unstack(k, single)
        g = self.level_grad(pts)
        gn = np.linalg.norm(g, axis=1)
        n = g / gn[:, None]
        P = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
        S = P @ self.level_hess(pts) @ P / gn[:, None, None]
        w = np.linalg.eigvalsh(S)
        # the eigenvalue belonging to the normal direction is zero; drop it
        idx = np.argsort(np.abs(w), axis=1)[:, 1:]
        k = np.sort(np.take_along_axis(w, idx, axis=1), axis=1)
        return _unstack(k, single)

    def boundary_mean_curvature(self, x):
        """Mean-curvature vector ``-N div N`` (sum of principal curvatures)."""
        pts, single = _as_points(x)
        n = self.outward_normal(pts)
        div = np.sum(self.principal_curvatures(pts), axis=1)
        return _unstack(-div[:, None] * n, single)

    def min_curvature_radius(self, samples=2000):
        if self.kind == BALL:
            return self.radii[0]
        if self.kind == ELLIPSOID:
            return min(self.radii) ** 2 / max(self.radii)
        if self.is_flat:
            return np.inf
        kmax = np.max(self.principal_curvatures(self.sample_boundary(samples)))
        return np.inf if kmax <= 0 else 1.0 / kmax

    def sample_boundary(self, n, rng=None):
        """Boundary points along ``n`` directions from the center.

        Fibonacci directions when ``rng`` is None, uniform random otherwise.
        """
        if rng is None:
            i = np.arange(n) + 0.5
            z = 1.0 - 2.0 * i / n
            phi = np.pi * (1.0 + 5**0.5) * i
            s = np.sqrt(1.0 - z**2)
            dirs = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
        else:
            dirs = rng.normal(size=(n, 3))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        if self.kind == BALL:
            return self.center + self.radii[0] * dirs
        if self.kind == ELLIPSOID:
            r = np.array(self.radii)
            s = 1.0 / np.sqrt(np.sum((dirs / r) ** 2, axis=1))
            return self.center + s[:, None] * dirs
        if self.is_flat:
            raise ValueError("cannot sample an unbounded wall")
        return np.array([self._ray_hit(self.center[None], d)[0] for d in dirs])

    # -- global quantities ------------------------------------------------

    def _radial_quadrature(self, order=96):
        """Volume and boundary area of a star-shaped level set.

        With the boundary written as ``c + r(u) u`` over unit vectors u,
        ``vol = int r^3 / 3 du`` and ``area = int r^2 / (u . n) du``.  The
        sphere is integrated with Gauss-Legendre nodes in z and a uniform
        rule in the azimuth.
        """
        if self.is_flat:
            raise ValueError("an unbounded wall has no volume or area")
        z, wz = np.polynomial.legendre.leggauss(order)
        phi = np.linspace(0.0, 2 * np.pi, 2 * order, endpoint=False)
        Z, P = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1.0 - Z**2)
        U = np.stack([s * np.cos(P), s * np.sin(P), Z], axis=-1).reshape(-1, 3)
        W = np.repeat(wz, len(phi)) * (2 * np.pi / len(phi))
        lo = np.zeros(len(U))
        hi = np.full(len(U), self.bounding_radius)
        while np.any(self.level(self.center + hi[:, None] * U) < 0):
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            inside = self.level(self.center + mid[:, None] * U) < 0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        r = 0.5 * (lo + hi)
        pts = self.center + r[:, None] * U
        N = self._normal(pts)
        vol = float(np.sum(W * r**3) / 3.0)
        area = float(np.sum(W * r**2 / np.sum(U * N, axis=1)))
        return vol, area

    def volume(self):
        if self.kind == BALL:
            return 4.0 / 3.0 * np.pi * self.radii[0] ** 3
        if self.kind == ELLIPSOID:
            return 4.0 / 3.0 * np.pi * float(np.prod(self.radii))
        return self._radial_quadrature()[0]

    def boundary_area(self):
        if self.kind == BALL:
            return 4.0 * np.pi * self.radii[0] ** 2
        if self.kind == ELLIPSOID:
            c, b, a = sorted(self.radii)
            if np.isclose(a, c):
                return 4.0 * np.pi * a**2
            phi = np.arccos(c / a)
            m = (a**2 * (b**2 - c**2)) / (b**2 * (a**2 - c**2))
            s = np.sin(phi)
            return 2 * np.pi * c**2 + 2 * np.pi * a * b / s * (
                ellipeinc(phi, m) * s**2 + ellipkinc(phi, m) * np.cos(phi) ** 2)
        return self._radial_quadrature()[1]

    def describe(self):
        return {"kind": self.kind, "radii": self.radii,
                "center": tuple(float(v) for v in self.center)}
