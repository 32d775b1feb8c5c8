from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflected_ou.convexbody import Ball
from reflected_ou.errors import NotContracting, SubcriticalLambda
from reflected_ou.perturb import (
    DriftSpec,
    contraction_bound,
    gradient_density_error,
    invariant_density,
    l1_dissipativity,
    lambda0,
    perturbed_resolvent,
    t_lambda_apply,
    zeta_ibp,
)
from reflected_ou.resolvent import GridConfig, grid_solve
from reflected_ou.spectral import SpectralModel
from reflected_ou.testfunctions import Polynomial, constant, coordinate, from_polynomial
from reflected_ou.verify import EstimatorConfig

ONE = SpectralModel.constant(1)
BALL = Ball(1, 1.0)
GRID = GridConfig(nodes=256)
QUARTER_X2 = from_polynomial(Polynomial(1, {(2,): 0.25}), "x^2/4")


def test_threshold_and_bound_formulas():
    assert lambda0(0.5) == pytest.approx(0.5)
    assert contraction_bound(2.0, 0.3) == pytest.approx(0.3)


def test_gradient_drift_points_downhill():
    d = DriftSpec.gradient(QUARTER_X2, 1)
    np.testing.assert_allclose(d(np.array([[1.0], [-2.0]]))[:, 0], [-0.5, 1.0])
    d.validate(np.linspace(-1, 1, 11)[:, None])


def test_bounded_drift_validation_catches_wrong_sup():
    d = DriftSpec.bounded(lambda x: 2 * np.ones_like(x), 1.0, 1)
    with pytest.raises(ValueError):
        d.validate(np.zeros((3, 1)))


def test_zero_drift_converges_in_one_step():
    res = perturbed_resolvent(ONE, BALL, DriftSpec.constant([0.0]), 1.0, coordinate(1, 0), GRID)
    assert res.iterations == 1
    ref = grid_solve(ONE, BALL, None, 1.0, coordinate(1, 0), GRID)
    np.testing.assert_allclose(res.values, ref.nodal, atol=1e-12)


def test_constant_psi_is_killed_by_t_lambda():
    r = t_lambda_apply(ONE, BALL, DriftSpec.constant([0.3]), 1.0, constant(1, 2.0), grid=GRID)
    assert np.abs(r.values).max() < 1e-10


@settings(max_examples=8, deadline=None)
@given(f=st.floats(-0.5, 0.5), lam=st.floats(1.0, 5.0))
def test_t_lambda_norm_respects_bound(f, lam):
    r = t_lambda_apply(ONE, BALL, DriftSpec.constant([f]), lam, coordinate(1, 0), grid=GRID)
    assert r.ratio <= r.bound * 1.05 + 1e-12


def test_series_matches_direct_solve():
    res = perturbed_resolvent(ONE, BALL, DriftSpec.constant([0.3]), 1.0, coordinate(1, 0), GRID)
    assert res.sup_difference < 1e-8
    assert res.observed_ratio <= res.bound


def test_subcritical_lambda_is_refused():
    with pytest.raises(SubcriticalLambda):
        perturbed_resolvent(ONE, BALL, DriftSpec.constant([1.0]), 1.5, coordinate(1, 0), GRID)


def test_strong_drift_at_small_lambda_does_not_contract():
    with pytest.raises(NotContracting):
        perturbed_resolvent(ONE, BALL, DriftSpec.constant([3.0]), 0.05, coordinate(1, 0), GRID,
                            enforce_threshold=False)


def test_gradient_drift_density_is_exponential_of_potential():
    dens = invariant_density(ONE, BALL, DriftSpec.gradient(QUARTER_X2, 1), GRID)
    assert gradient_density_error(dens, QUARTER_X2) < 1e-7
    assert dens.residual < 1e-7


def test_zero_drift_density_is_one():
    dens = invariant_density(ONE, BALL, DriftSpec.constant([0.0]), GRID)
    np.testing.assert_allclose(dens.density, 1.0, atol=1e-10)


def test_constant_drift_density_is_invariant_and_dissipative():
    drift = DriftSpec.constant([0.3])
    dens = invariant_density(ONE, BALL, drift, GRID)
    assert dens.density.min() > 0
    assert max(dens.invariance.values()) < 1e-8
    fs = [coordinate(1, 0), from_polynomial(Polynomial(1, {(2,): 1.0, (0,): -0.3}), "x^2-0.3")]
    assert max(l1_dissipativity(ONE, BALL, drift, fs, GRID, density=dens)) <= 1e-8


def test_zeta_ibp_for_quadratic_potential():
    rep = zeta_ibp(ONE, BALL, QUARTER_X2, coordinate(1, 0), [1.0], EstimatorConfig(method="quadrature"))
    assert rep.passed, rep.line()
