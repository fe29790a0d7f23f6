import math

import numpy as np
import pytest

from capminmax.errors import NotConverged
from capminmax.fbsolver import (FBProblem, FBSolution, contact_slope, exact_error, fb_residuals,
                                kink_band, near_contact_slope, solve_fb, wedge_problem)

A = 0.5
SLOPE = math.sqrt(3.0)


def _wedge(X, Y):
    return np.maximum(SLOPE * Y, 0.0)


@pytest.fixture(scope="module")
def wedge65():
    prob = wedge_problem(65, A)
    return prob, solve_fb(prob)


def test_contact_slope_value():
    assert contact_slope(0.5) == pytest.approx(SLOPE, rel=1e-15)


def test_wedge_is_reproduced(wedge65):
    prob, sol = wedge65
    err = exact_error(sol, prob, _wedge)
    band = kink_band(sol.contact_set)
    assert np.max(err[~band]) <= 1e-6
    assert np.max(err[band]) <= prob.spacing
    assert sol.clamp_activations == 0
    assert np.min(sol.g_field - prob.h_field) >= -1e-12


def test_slope_next_to_contact_set(wedge65):
    prob, sol = wedge65
    assert near_contact_slope(sol, prob) == pytest.approx(SLOPE, rel=2e-2)


def test_planar_data_above_obstacle():
    prob = FBProblem.from_functions(33, 1.0, lambda X, Y: np.zeros_like(X),
                                    lambda X, Y: 3.0 + 0.3 * X - 0.2 * Y, A)
    sol = solve_fb(prob)
    X, Y = prob.mesh()
    assert not sol.contact_set.any()
    # exact up to the linear-solve roundoff
    assert np.max(np.abs(sol.g_field - (3.0 + 0.3 * X - 0.2 * Y))) <= 1e-10


def test_tilted_wall_meets_at_capillary_angle():
    # planes g = m x + s y over h = m x meet along y = 0; the angle between
    # their upward normals is arccos(a) exactly when s^2 = (1 + m^2)(1 - a^2)/a^2
    m = 0.3
    s = math.sqrt((1 + m * m) * (1 - A * A)) / A
    n_g = np.array([-m, -s, 1.0]) / math.sqrt(1 + m * m + s * s)
    n_h = np.array([-m, 0.0, 1.0]) / math.sqrt(1 + m * m)
    assert math.acos(n_g @ n_h) == pytest.approx(math.acos(A), abs=1e-14)
    exact = lambda X, Y: m * X + np.maximum(s * Y, 0.0)  # noqa: E731
    prob = FBProblem.from_functions(65, 1.0, lambda X, Y: m * X, exact, A)
    sol = solve_fb(prob)
    err = exact_error(sol, prob, exact)
    assert np.max(err[~kink_band(sol.contact_set)]) <= 1e-6


def _exact_solution(prob):
    X, Y = prob.mesh()
    g = _wedge(X, Y)
    contact = (Y <= 0) & (g <= prob.h_field)
    contact[[0, -1], :] = False
    contact[:, [0, -1]] = False
    return FBSolution(g, contact, 0.0, 0.0, 0)


def test_residuals_of_exact_solution():
    prob = wedge_problem(33, A)
    interior, contact = fb_residuals(_exact_solution(prob), prob)
    assert interior <= 1e-10 and contact <= 1e-10


def test_residuals_detect_noise(wedge65):
    prob, sol = wedge65
    base, _ = fb_residuals(sol, prob)
    rng = np.random.default_rng(0)
    g = sol.g_field + 1e-3 * rng.normal(size=sol.g_field.shape)
    noisy = FBSolution(g, sol.contact_set, 0.0, 0.0, 0)
    assert fb_residuals(noisy, prob)[0] > 10 * max(base, 1e-12)


def test_residuals_agree_with_solver(wedge65):
    prob, sol = wedge65
    interior, contact = fb_residuals(sol, prob)
    assert abs(interior - sol.interior_residual) <= 1e-12
    assert abs(contact - sol.contact_residual) <= 1e-12


def test_comparison_principle():
    X, Y = np.meshgrid(np.linspace(-1, 1, 33), np.linspace(-1, 1, 33))
    lifts = [0.0, 0.05, 0.05 + 0.1 * (1 + X) / 2]
    fields = []
    for lift in lifts:
        lift_fn = (lambda L: lambda X_, Y_: np.maximum(SLOPE * Y_, 0.0) + L)(lift)
        prob = FBProblem.from_functions(33, 1.0, lambda X_, Y_: np.zeros_like(X_), lift_fn, A)
        fields.append(solve_fb(prob).g_field)
    for lo, hi in zip(fields, fields[1:]):
        assert np.all(hi >= lo - 1e-9)


def test_refinement_on_offset_grids():
    shift = 2.0 / 64 / 3
    errs = []
    for n in (65, 129):
        prob = wedge_problem(n, A, offset=shift)
        sol = solve_fb(prob)
        errs.append(np.max(exact_error(sol, prob, _wedge)[kink_band(sol.contact_set)]))
    assert errs[0] / errs[1] >= 1.8


def test_not_converged_carries_iterate():
    with pytest.raises(NotConverged) as info:
        solve_fb(wedge_problem(17, A), tol=1e-30, max_iter=3)
    assert info.value.solution is None or info.value.solution.g_field.shape == (17, 17)


@pytest.mark.parametrize("bad", ["a", "below", "grid"])
def test_problem_validation(bad):
    x = np.linspace(-1, 1, 9)
    Z = np.zeros((9, 9))
    kw = dict(x=x, y=x, h_field=Z, dirichlet=Z, a=A)
    if bad == "a":
        kw["a"] = 1.0
    elif bad == "below":
        kw["dirichlet"] = Z - 1.0
    else:
        kw["x"] = x ** 3
    with pytest.raises(ValueError):
        FBProblem(**kw)
