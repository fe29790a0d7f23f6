import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capminmax.domain import ConvexDomain
from capminmax.errors import NotOnBoundary, ProjectionFailed

DOMAINS = {
    "ball": ConvexDomain.ball(1.3, center=(0.1, -0.2, 0.3)),
    "ellipsoid": ConvexDomain.ellipsoid((2.0, 1.0, 0.7)),
    "superquadric": ConvexDomain.superquadric((1.0, 1.2, 0.9), exponent=4),
}


def test_signed_distance_examples():
    unit = ConvexDomain.ball(1.0)
    assert unit.signed_distance((0, 0, 0)) == pytest.approx(-1.0, abs=1e-15)
    assert unit.signed_distance((1, 0, 0)) == pytest.approx(0.0, abs=1e-15)
    assert ConvexDomain.ball(2.0).signed_distance((3, 0, 0)) == pytest.approx(1.0, abs=1e-15)


def test_outward_normal_examples():
    np.testing.assert_allclose(ConvexDomain.ball(1.0).outward_normal((0, 0, 1)), [0, 0, 1],
                               atol=1e-15)
    np.testing.assert_allclose(ConvexDomain.ellipsoid((2, 1, 1)).outward_normal((2, 0, 0)),
                               [1, 0, 0], atol=1e-12)
    with pytest.raises(NotOnBoundary):
        ConvexDomain.ball(1.0).outward_normal((0, 0, 0))


def test_projection_examples():
    unit = ConvexDomain.ball(1.0)
    np.testing.assert_allclose(unit.project_to_boundary((0, 0, 2)), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(unit.project_to_boundary((0.3, 0, 0)), [1, 0, 0], atol=1e-15)


def test_level_set_center_projection_is_deterministic():
    dom = DOMAINS["superquadric"]
    try:
        p = dom.project_to_boundary(dom.center)
    except ProjectionFailed:
        return
    # the documented choice: the +e1 direction
    assert abs(dom.signed_distance(p)) <= 1e-12
    assert p[0] > 0 and abs(p[1]) < 1e-9 and abs(p[2]) < 1e-9


def test_min_curvature_radius_examples():
    assert ConvexDomain.ball(2.0).min_curvature_radius() == pytest.approx(2.0)
    assert ConvexDomain.ball(1.0).min_curvature_radius() == pytest.approx(1.0)
    assert ConvexDomain.ellipsoid((2, 1, 1)).min_curvature_radius() == pytest.approx(0.5, rel=1e-9)


def test_boundary_mean_curvature_examples():
    np.testing.assert_allclose(ConvexDomain.ball(1.0).boundary_mean_curvature((1, 0, 0)),
                               [-2, 0, 0], atol=1e-12)
    np.testing.assert_allclose(ConvexDomain.ball(2.0).boundary_mean_curvature((0, 2, 0)),
                               [0, -1, 0], atol=1e-12)
    big = ConvexDomain.ball(1e6)
    assert np.linalg.norm(big.boundary_mean_curvature((1e6, 0, 0))) <= 3e-6
    with pytest.raises(NotOnBoundary):
        ConvexDomain.ball(1.0).boundary_mean_curvature((0.5, 0, 0))


def test_ellipsoid_mean_curvature_against_closed_form():
    # at the tip (a, 0, 0) both principal curvatures are a / b^2 and a / c^2
    a, b, c = 2.0, 1.0, 0.7
    dom = ConvexDomain.ellipsoid((a, b, c))
    H = dom.boundary_mean_curvature((a, 0, 0))
    np.testing.assert_allclose(H, [-(a / b**2 + a / c**2), 0, 0], rtol=1e-9)


@pytest.mark.parametrize("name", sorted(DOMAINS))
def test_normal_matches_distance_gradient(name):
    dom = DOMAINS[name]
    rng = np.random.default_rng(7)
    pts = dom.sample_boundary(100, rng=rng)
    step = 1e-5
    for p in pts:
        grad = np.array([(dom.signed_distance(p + step * e) - dom.signed_distance(p - step * e))
                         / (2 * step) for e in np.eye(3)])
        grad /= np.linalg.norm(grad)
        n = dom.outward_normal(p)
        assert abs(np.linalg.norm(n) - 1) <= 1e-12
        assert np.linalg.norm(n - grad) <= 1e-6


@pytest.mark.parametrize("name", sorted(DOMAINS))
def test_projection_idempotent_and_on_boundary(name):
    dom = DOMAINS[name]
    rng = np.random.default_rng(3)
    x = dom.center + rng.uniform(-1.5, 1.5, size=(200, 3)) * dom.bounding_radius
    x = x[np.linalg.norm(x - dom.center, axis=1) > 1e-3]
    p = dom.project_to_boundary(x)
    assert np.max(np.abs(dom.signed_distance(p))) <= 1e-12
    assert np.max(np.linalg.norm(dom.project_to_boundary(p) - p, axis=1)) <= 1e-12


@pytest.mark.parametrize("name", sorted(DOMAINS))
def test_convexity_probe(name):
    dom = DOMAINS[name]
    rng = np.random.default_rng(11)
    p = dom.sample_boundary(1000, rng=rng)
    q = dom.sample_boundary(1000, rng=rng)
    assert np.all(dom.signed_distance(0.5 * (p + q)) <= 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.2, 5.0), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_ball_distance_sign_convention(R, x):
    dom = ConvexDomain.ball(R)
    x = np.array(x)
    d = dom.signed_distance(x)
    assert d == pytest.approx(np.linalg.norm(x) - R, abs=1e-12)
    if np.linalg.norm(x) > 1e-6:
        p = dom.project_to_boundary(x)
        np.testing.assert_allclose(p, R * x / np.linalg.norm(x), atol=1e-12)


def test_halfspace_is_flat_wall():
    dom = ConvexDomain.halfspace()
    assert dom.is_flat
    np.testing.assert_allclose(dom.outward_normal((0.3, -0.2, 0.0)), [0, 0, -1], atol=1e-15)
    assert math.isinf(dom.min_curvature_radius())


def test_superquadric_volume_and_area_quadrature():
    # p = 2 is an ellipsoid with closed forms
    e = ConvexDomain.ellipsoid((1.0, 0.7, 0.5))
    q = ConvexDomain.superquadric((1.0, 0.7, 0.5), exponent=2)
    assert q.volume() == pytest.approx(e.volume(), rel=1e-12)
    assert q.boundary_area() == pytest.approx(e.boundary_area(), rel=1e-12)
    # Dirichlet integral: vol = 8 r1 r2 r3 Gamma(1 + 1/p)^3 / Gamma(1 + 3/p)
    s = ConvexDomain.superquadric((1.0, 0.8, 0.6), exponent=4)
    exact = 8 * 0.48 * math.gamma(1.25) ** 3 / math.gamma(1.75)
    assert s.volume() == pytest.approx(exact, rel=1e-12)
    # nested bodies: inscribed ellipsoid < superquadric < bounding box
    inner = ConvexDomain.ellipsoid((1.0, 0.8, 0.6)).boundary_area()
    assert inner < s.boundary_area() < 2 * (2 * 1.6 + 2 * 1.2 + 1.6 * 1.2)
