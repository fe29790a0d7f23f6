import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capminmax.errors import DanglingContactEdge, InvalidOffset
from capminmax.meshes import single_triangle
from capminmax.surface import (SurfacePair, boundary_edges, build_disk_cap,
                               extract_boundary_frame, refine, triangle_areas, validate)

THETA = math.pi / 3


def test_disk_and_cap_areas(ball, cap64):
    assert cap64.sigma_area() == pytest.approx(math.pi * 0.75, rel=5e-3)
    assert cap64.gamma_area() == pytest.approx(2 * math.pi * 1.5, rel=5e-3)


def test_near_degenerate_offset(ball):
    p = build_disk_cap(ball, (0, 0, 1), 0.999, THETA, 64)
    assert validate(p, ball) == []
    assert p.sigma_area() == pytest.approx(math.pi * (1 - 0.999**2), rel=5e-3)


def test_invalid_offset(ball):
    with pytest.raises(InvalidOffset):
        build_disk_cap(ball, (0, 0, 1), 1.0, THETA, 16)


def test_a_is_cosine(cap16):
    assert abs(cap16.a - math.cos(cap16.theta)) <= 1e-15


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.95, 0.95),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_disk_cap_valid_for_any_axis(d, axis):
    from capminmax.domain import ConvexDomain
    ball = ConvexDomain.ball(1.0)
    p = build_disk_cap(ball, axis, d, THETA, 16)
    assert validate(p, ball) == []
    r = math.sqrt(1 - d * d)
    c = p.vertices[p.contact_polyline]
    w = np.asarray(axis) / np.linalg.norm(axis)
    np.testing.assert_allclose(c @ w, d, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(c - d * w, axis=1), r, atol=1e-12)


def test_validate_detects_pushed_gamma_vertex(ball, cap16):
    V = np.array(cap16.vertices)
    g = np.setdiff1d(cap16.gamma_vertex_ids, cap16.contact_polyline)[5]
    V[g] *= 1 - 1e-3
    diags = validate(cap16.with_vertices(V), ball)
    assert [d.kind for d in diags] == ["BoundaryViolation"]
    assert diags[0].where == g


def test_validate_detects_duplicated_triangle(ball, cap16):
    sigma = np.vstack([cap16.sigma_triangles, cap16.sigma_triangles[:1]])
    p = SurfacePair(cap16.vertices, sigma, cap16.gamma_triangles, cap16.contact_polyline,
                    cap16.theta)
    kinds = [d.kind for d in validate(p, ball)]
    assert kinds.count("NonManifold") == 1


def test_refine_quadruples_triangles(ball, cap16):
    r = refine(cap16, ball)
    assert len(r.sigma_triangles) == 4 * len(cap16.sigma_triangles)
    assert len(r.gamma_triangles) == 4 * len(cap16.gamma_triangles)
    assert validate(r, ball) == []


def test_refine_area_converges_second_order(ball):
    p = build_disk_cap(ball, (0, 0, 1), 0.5, THETA, 16)
    exact = math.pi * 0.75
    errs = []
    for _ in range(3):
        errs.append(abs(p.sigma_area() - exact))
        p = refine(p, ball)
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_refine_keeps_flat_sigma_flat(ball, cap16):
    r = refine(refine(cap16, ball), ball)
    np.testing.assert_allclose(r.vertices[r.sigma_vertex_ids, 2], 0.5, atol=1e-14)


def test_refine_single_triangle(ball):
    t = single_triangle()
    r = refine(t, ball)
    assert len(r.sigma_triangles) == 4
    assert r.sigma_area() == pytest.approx(t.sigma_area(), abs=1e-15)


def test_refine_keeps_old_vertices(ball, cap16):
    r = refine(cap16, ball)
    n = len(cap16.vertices)
    inner = np.setdiff1d(cap16.sigma_vertex_ids, cap16.contact_polyline)
    assert np.array_equal(r.vertices[inner], cap16.vertices[inner])
    h = cap16.max_edge_length()
    # new wall vertices sit within h^2 of the edge midpoints they came from
    new_wall = np.setdiff1d(r.gamma_vertex_ids, np.arange(n))
    assert np.all(np.abs(ball.signed_distance(r.vertices[new_wall])) <= 1e-12)
    lift = 1 - np.linalg.norm(r.vertices[new_wall], axis=1)
    assert np.all(np.abs(lift) <= h * h)


def test_conormals_of_plane_section(ball, cap64):
    fr = extract_boundary_frame(cap64, ball)
    assert np.max(np.abs(np.sum(fr.eta * fr.N, axis=1) - math.sqrt(3) / 2)) <= 1e-2
    assert np.max(np.abs(np.sum(fr.zeta * fr.N, axis=1))) <= 1e-2


def test_equatorial_disk_meets_wall_orthogonally(ball):
    fr = extract_boundary_frame(build_disk_cap(ball, (0, 0, 1), 0.0, THETA, 64), ball)
    assert np.max(np.abs(np.sum(fr.eta * fr.N, axis=1) - 1.0)) <= 1e-2


def test_frame_invariants(ball, cap64):
    fr = extract_boundary_frame(cap64, ball)
    for v in (fr.eta, fr.zeta, fr.N, fr.tau):
        assert np.max(np.abs(np.linalg.norm(v, axis=1) - 1)) <= 1e-12
    assert np.max(np.abs(np.sum(fr.eta * fr.tau, axis=1))) <= 1e-12
    assert np.max(np.abs(np.sum(fr.zeta * fr.tau, axis=1))) <= 1e-12


def test_dangling_contact_edge(ball, cap16):
    # drop the Gamma triangle on one contact edge
    e = cap16.contact_edges[0]
    keep = ~np.array([set(e) <= set(t) for t in cap16.gamma_triangles.tolist()])
    p = SurfacePair(cap16.vertices, cap16.sigma_triangles, cap16.gamma_triangles[keep],
                    cap16.contact_polyline, cap16.theta)
    with pytest.raises(DanglingContactEdge):
        extract_boundary_frame(p, ball)


def test_contact_polyline_equals_both_boundaries(cap16):
    key = lambda e: tuple(sorted(e))  # noqa: E731
    bs = {key(e) for e in boundary_edges(cap16.sigma_triangles).tolist()}
    bg = {key(e) for e in boundary_edges(cap16.gamma_triangles).tolist()}
    bc = {key(e) for e in cap16.contact_edges.tolist()}
    assert bs == bg == bc


def test_no_degenerate_triangles(ball, cap64):
    for tris in (cap64.sigma_triangles, cap64.gamma_triangles):
        assert triangle_areas(cap64.vertices, tris).min() >= 1e-14


def test_pair_is_immutable(cap16):
    with pytest.raises(ValueError):
        cap16.vertices[0, 0] = 1.0
