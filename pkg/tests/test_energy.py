import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capminmax.domain import ConvexDomain
from capminmax.energy import (area_gradient, capillarity_energy, contact_angle_residual,
                              curvature_fields, energy_gradient, first_variation, wall_normals)
from capminmax.errors import InsufficientNeighborhood, NotTangential
from capminmax.meshes import (cylinder_patch, flat_disk, single_triangle, sphere_patch,
                              square_patch, wall_wedge)
from capminmax.surface import SurfacePair, build_disk_cap, refine

THETA = math.pi / 3


def star_fd(pair, v, d, step):
    """Central difference of F_a at vertex v, summed over its incident triangles."""
    tris = np.vstack([pair.sigma_triangles, pair.gamma_triangles])
    w = np.concatenate([np.ones(len(pair.sigma_triangles)),
                        np.full(len(pair.gamma_triangles), pair.a)])
    star = np.any(tris == v, axis=1)
    tris, w = tris[star], w[star]
    vals = []
    for s in (step, -step):
        V = np.array(pair.vertices)
        V[v] += s * d
        c = np.cross(V[tris[:, 1]] - V[tris[:, 0]], V[tris[:, 2]] - V[tris[:, 0]])
        vals.append(math.fsum(w * 0.5 * np.linalg.norm(c, axis=1)))
    return (vals[0] - vals[1]) / (2 * step) * pair.multiplicity


def test_energy_of_stationary_cap(cap64):
    rep = capillarity_energy(cap64)
    assert rep.F_a == pytest.approx(2.25 * math.pi, rel=1e-2)
    assert rep.F_a == rep.area_sigma + rep.a * rep.area_gamma


def test_energy_at_right_angle_is_sigma_area(ball):
    p = build_disk_cap(ball, (0, 0, 1), 0.5, math.pi / 2, 16)
    rep = capillarity_energy(p)
    assert rep.F_a == pytest.approx(rep.area_sigma, abs=1e-14)


def test_unit_square_energy():
    assert capillarity_energy(square_patch(1.0, 6)).F_a == pytest.approx(1.0, abs=1e-14)


def test_first_variation_zero_field(ball, cap16):
    assert first_variation(cap16, ball, np.zeros_like(cap16.vertices)) == 0.0


def test_first_variation_sign_matches_profile_derivative(ball):
    p = build_disk_cap(ball, (0, 0, 1), 0.2, THETA, 64)
    e = np.array([0.0, 0.0, 1.0])
    X = np.tile(e, (len(p.vertices), 1))
    N = wall_normals(p, ball)
    m = p.constrained_mask
    X[m] -= np.sum(X[m] * N[m], axis=1)[:, None] * N[m]
    a = p.a
    # F(d) = pi (1 - d^2) + 2 pi a (1 + d), F'(0.2) = 2 pi (a - 0.2) > 0
    assert first_variation(p, ball, X) > 0
    assert 2 * math.pi * (a - 0.2) > 0


def test_first_variation_rejects_normal_field(ball, cap16):
    X = np.zeros_like(cap16.vertices)
    X[cap16.gamma_vertex_ids] = cap16.vertices[cap16.gamma_vertex_ids]
    with pytest.raises(NotTangential):
        first_variation(cap16, ball, X)


def _smooth_tangential_fields(pair, domain, count, rng):
    N = wall_normals(pair, domain)
    m = pair.constrained_mask
    out = []
    for _ in range(count):
        A = rng.normal(size=(3, 3))
        b = rng.normal(size=3)
        X = pair.vertices @ A.T + b
        X[m] -= np.sum(X[m] * N[m], axis=1)[:, None] * N[m]
        X /= np.max(np.linalg.norm(X, axis=1))
        out.append(X)
    return out


def test_stationary_cap_first_variation_shrinks_under_refinement(ball):
    coarse = build_disk_cap(ball, (0, 0, 1), 0.5, THETA, 32)
    fine = refine(coarse, ball)
    ratios = []
    fields_c = _smooth_tangential_fields(coarse, ball, 20, np.random.default_rng(5))
    fields_f = _smooth_tangential_fields(fine, ball, 20, np.random.default_rng(5))
    hc = coarse.max_edge_length()
    worst_c = max(abs(first_variation(coarse, ball, X)) for X in fields_c)
    worst_f = max(abs(first_variation(fine, ball, X)) for X in fields_f)
    assert worst_c <= hc
    ratios.append(worst_c / worst_f)
    assert ratios[0] >= 1.5


def test_gradient_of_single_triangle_matches_difference_quotient():
    t = single_triangle()
    g = area_gradient(t.vertices, t.sigma_triangles)
    n = np.array([0.3, -0.4, 0.866])
    n /= np.linalg.norm(n)
    eps = 1e-5
    for v in range(3):
        fd = star_fd(t, v, n, eps)
        assert abs(g[v] @ n - fd) <= 1e-6 * max(abs(fd), np.linalg.norm(g[v]))


def test_symmetric_interior_vertex_has_zero_gradient():
    sq = square_patch(1.0, 8)
    g = area_gradient(sq.vertices, sq.sigma_triangles)
    inner = sq.sigma_interior_mask
    assert np.max(np.linalg.norm(g[inner], axis=1)) <= 1e-15


def test_stationary_gradient_shrinks_under_refinement(ball):
    r = [energy_gradient(build_disk_cap(ball, (0, 0, 1), 0.5, THETA, n), ball).grad_norm
         for n in (32, 64)]
    assert r[0] / r[1] >= 1.5


@pytest.mark.parametrize("theta,d,expected", [
    (THETA, 0.5, 0.0), (THETA, 0.0, 1 - math.sin(THETA)),
    (math.pi / 6, 0.5, math.sqrt(3) / 2 - 0.5)])
def test_contact_angle_residual_examples(ball, theta, d, expected):
    res = contact_angle_residual(build_disk_cap(ball, (0, 0, 1), d, theta, 64), ball)
    assert np.max(np.abs(res - expected)) <= 1e-2


def test_contact_residual_halves_under_refinement(ball):
    p = build_disk_cap(ball, (0, 0, 1), 0.5, THETA, 32)
    r0 = np.max(np.abs(contact_angle_residual(p, ball)))
    r1 = np.max(np.abs(contact_angle_residual(refine(p, ball), ball)))
    assert r0 / r1 >= 1.5


def _perturbed(pair, domain, amp, seed):
    rng = np.random.default_rng(seed)
    V = np.array(pair.vertices)
    V += amp * rng.normal(size=V.shape)
    m = pair.constrained_mask
    if np.any(m):
        V[m] = domain.project_to_boundary(V[m])
    return pair.with_vertices(V)


@pytest.mark.parametrize("case", ["cap", "perturbed-cap", "wedge", "sphere"])
def test_gradient_matches_finite_differences_everywhere(ball, case):
    if case == "cap":
        dom, p = ball, build_disk_cap(ball, (0, 0, 1), 0.3, THETA, 16)
    elif case == "perturbed-cap":
        dom = ball
        p = _perturbed(build_disk_cap(ball, (0, 0, 1), 0.3, THETA, 16), ball, 0.01, 1)
    elif case == "wedge":
        dom, p = ConvexDomain.halfspace(), _perturbed(wall_wedge(THETA, 6), ConvexDomain.halfspace(),
                                                        0.02, 2)
    else:
        dom, p = ball, _perturbed(sphere_patch(1.0, 0.8, 16), ball, 0.01, 3)
    rep = energy_gradient(p, dom)
    N = wall_normals(p, dom)
    h = p.max_edge_length()
    used = np.unique(np.concatenate([p.sigma_vertex_ids, p.gamma_vertex_ids]))
    for v in used:
        scale = np.linalg.norm(rep.grad[v])
        for e in np.eye(3):
            d = e - (e @ N[v]) * N[v]
            if np.linalg.norm(d) < 1e-8:
                continue
            fd = star_fd(p, v, d, 1e-5 * h)
            # roundoff in the difference quotient itself is about 1e-12
            assert abs(rep.grad[v] @ d - fd) <= max(1e-6 * scale, 1e-10), (v, e)


def test_wall_gradients_are_tangent(ball, cap64):
    p = _perturbed(cap64, ball, 0.005, 4)
    rep = energy_gradient(p, ball)
    N = wall_normals(p, ball)
    m = cap64.constrained_mask
    normal = np.abs(np.sum(rep.grad[m] * N[m], axis=1))
    assert np.all(normal <= 1e-10 * np.maximum(np.linalg.norm(rep.grad[m], axis=1), 1e-300))


def test_translation_and_scaling(ball, cap16):
    F = capillarity_energy(cap16).F_a
    shifted = cap16.with_vertices(cap16.vertices + np.array([3.0, -1.0, 2.0]))
    assert capillarity_energy(shifted).F_a == pytest.approx(F, rel=1e-13)
    for lam in (0.1, 2.5, 40.0):
        scaled = cap16.with_vertices(lam * cap16.vertices)
        assert capillarity_energy(scaled).F_a == pytest.approx(lam * lam * F, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_first_variation_is_linear(alpha, beta, seed):
    ball = ConvexDomain.ball(1.0)
    p = build_disk_cap(ball, (0, 0, 1), 0.4, THETA, 8)
    X, Y = _smooth_tangential_fields(p, ball, 2, np.random.default_rng(seed))
    lhs = first_variation(p, ball, alpha * X + beta * Y)
    rhs = alpha * first_variation(p, ball, X) + beta * first_variation(p, ball, Y)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_gradient_is_riesz_representative(ball, cap16):
    rep = energy_gradient(cap16, ball)
    for X in _smooth_tangential_fields(cap16, ball, 5, np.random.default_rng(9)):
        X[cap16.rim_mask] = 0
        assert first_variation(cap16, ball, X) == pytest.approx(float(np.sum(rep.grad * X)), abs=1e-12)


def test_flat_disk_curvature_vanishes():
    cf = curvature_fields(flat_disk(1.0, 32))
    inner = ~np.isnan(cf.A2)
    assert np.max(cf.A2[inner]) <= 1e-10
    H = cf.H[inner]
    assert np.max(np.linalg.norm(H, axis=1)) <= 1e-10


def test_sphere_patch_curvature():
    p = sphere_patch(1.0, math.pi / 4, 64)
    cf = curvature_fields(p)
    A2 = cf.A2[~np.isnan(cf.A2)]
    assert np.max(np.abs(A2 - 2.0)) <= 0.1
    # mean-curvature vectors are normal to the surface away from the boundary
    inner = p.sigma_interior_mask & ~cf.boundary_band
    H = cf.H[inner]
    radial = p.vertices[inner]
    cos = np.abs(np.sum(H * radial, axis=1)) / np.linalg.norm(H, axis=1)
    assert np.max(np.arccos(np.clip(cos, -1, 1))) <= 5 * p.max_edge_length()


def test_cylinder_curvature():
    cf = curvature_fields(cylinder_patch(0.5, 1.0, 64))
    A2 = cf.A2[~np.isnan(cf.A2)]
    assert np.max(np.abs(A2 - 4.0)) <= 0.2


def test_insufficient_neighborhood():
    with pytest.raises(InsufficientNeighborhood):
        curvature_fields(single_triangle(), include_boundary=True)


def test_multiplicity_scales_energy(cap16):
    double = SurfacePair(cap16.vertices, cap16.sigma_triangles, cap16.gamma_triangles,
                         cap16.contact_polyline, cap16.theta, multiplicity=2)
    assert capillarity_energy(double).F_a == pytest.approx(2 * capillarity_energy(cap16).F_a)


def test_record_keys(ball, cap16):
    from capminmax.energy import energy_report
    rec = energy_report(cap16, ball).to_record()
    assert list(rec) == ["area_sigma", "area_gamma", "a", "F_a", "grad_norm",
                         "max_contact_residual"]
