from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflected_ou.convexbody import Ball, WholeSpace
from reflected_ou.errors import NonCauchy
from reflected_ou.resolvent import (
    GridConfig,
    bernoulli,
    feynman_kac,
    grid_solve,
    neumann_limit,
    one_sided_derivatives,
)
from reflected_ou.spectral import SpectralModel
from reflected_ou.testfunctions import constant, coordinate
from reflected_ou.verify import resolvent_estimates

ONE = SpectralModel.constant(1)
SMALL = GridConfig(nodes=512)


@settings(max_examples=50, deadline=None)
@given(s=st.floats(-700, 700))
def test_bernoulli_function_matches_definition(s):
    b = float(bernoulli(np.array([s]))[0])
    ref = 1.0 if abs(s) < 1e-12 else s / np.expm1(s)
    assert b == pytest.approx(ref, rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("eps", [1e-1, 1e-3, None])
@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_constant_source_gives_constant_resolvent(eps, lam):
    sol = grid_solve(ONE, Ball(1, 1.0), eps, lam, constant(1, 1.0), SMALL)
    np.testing.assert_allclose(sol.nodal, 1 / lam, rtol=1e-9)


def test_constant_source_in_two_dimensions():
    sol = grid_solve(SpectralModel((1.0, 2.0)), Ball(2, 1.0), 1e-2, 1.0, constant(2, 3.0), GridConfig(nodes=48))
    np.testing.assert_allclose(sol.nodal, 3.0, rtol=1e-8)


def test_whole_space_resolvent_of_coordinate():
    # N x = -alpha x on the whole line, so (lam - N)^{-1} x = x / (lam + alpha).
    sol = grid_solve(ONE, WholeSpace(1), 1e-2, 1.0, coordinate(1, 0), GridConfig(nodes=2048))
    pts = sol.points[:, 0]
    mid = np.abs(pts) < 1.0
    # The box is truncated at a few standard deviations with reflecting faces.
    np.testing.assert_allclose(sol.nodal[mid], pts[mid] / 2.0, atol=2e-4)


def test_feynman_kac_constant_source():
    est = feynman_kac(ONE, Ball(1, 1.0), 1e-2, 2.0, constant(1, 1.0), [0.3], paths=50, seed=0, h=1e-2,
                      target_tol=1e-3)
    assert est.value == pytest.approx(0.5, abs=1e-3)


def test_feynman_kac_is_reproducible_and_close_to_grid():
    body, f = Ball(1, 1.0), coordinate(1, 0)
    a = feynman_kac(ONE, body, 1e-2, 1.0, f, [0.4], paths=400, seed=9, h=1e-2, f_sup=1.0, jobs=1)
    b = feynman_kac(ONE, body, 1e-2, 1.0, f, [0.4], paths=400, seed=9, h=1e-2, f_sup=1.0, jobs=3)
    assert a.value == b.value
    grid = grid_solve(ONE, body, 1e-2, 1.0, f, GridConfig(nodes=1024)).interp(np.array([[0.4]]))[0]
    assert abs(a.value - grid) < 4 * a.std_error + 0.02


def test_resolvent_estimates_hold_for_coordinate():
    reps = resolvent_estimates(ONE, Ball(1, 1.0), 1e-2, 1.0, coordinate(1, 0), SMALL)
    assert reps and all(r.passed for r in reps)


def test_one_sided_derivatives_are_exact_for_quadratics():
    x = np.linspace(-1, 1, 41)
    left, right = one_sided_derivatives(x**2, x[1] - x[0])
    assert left == pytest.approx(-2.0) and right == pytest.approx(2.0)


def test_neumann_limit_extrapolates_towards_neumann_solution():
    eps = [10 ** (-k / 2) for k in range(2, 7)]
    f = coordinate(1, 0)
    sols = [grid_solve(ONE, Ball(1, 1.0), e, 1.0, f, GridConfig(nodes=1024)) for e in eps]
    lim = neumann_limit(sols)
    assert all(b < a for a, b in zip(lim.increments, lim.increments[1:]))
    direct = grid_solve(ONE, Ball(1, 1.0), None, 1.0, f, GridConfig(nodes=1024))
    on_k = direct.interp(lim.points)
    assert np.abs(lim.extrapolated - on_k).max() < np.abs(lim.finest - on_k).max()


def test_neumann_limit_rejects_non_cauchy_sequences():
    f = coordinate(1, 0)
    sols = [grid_solve(ONE, Ball(1, 1.0), e, 1.0, f, SMALL) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    sols[2], sols[3] = sols[3], sols[2]
    with pytest.raises((NonCauchy, ValueError)):
        neumann_limit(sols)
