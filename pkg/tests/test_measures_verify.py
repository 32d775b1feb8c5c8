from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from reflected_ou.convexbody import Ball, Ellipsoid, WholeSpace
from reflected_ou.measures import mu_rule, nu_eps_rule, nu_rejection, nu_rule, wilson_interval
from reflected_ou.spectral import SpectralModel
from reflected_ou.testfunctions import Polynomial, constant, coordinate, from_polynomial, trig
from reflected_ou.verify import (
    EstimatorConfig,
    dirichlet_form_identity,
    ibp_mu,
    ibp_nu,
    ibp_nu_eps,
    invariance,
    log_sobolev,
    trace_inequality,
)

ONE = SpectralModel.constant(1)
QUAD = EstimatorConfig(method="quadrature")


def test_mass_of_unit_interval_is_erf_one():
    # nu = mu restricted to [-1, 1] with mu = N(0, 1/2).
    rule = nu_rule(ONE, Ball(1, 1.0))
    assert abs(rule.meta["mass"] - erf(1.0)) < 1e-12
    assert abs(rule.expect(lambda x: np.ones(len(x))).value - 1.0) < 1e-12


def test_mu_rule_second_moment():
    m = SpectralModel((1.0, 3.0))
    est = mu_rule(m).expect(lambda x: x[:, 1] ** 2)
    assert abs(est.value - m.lambdas[1]) < 1e-12


def test_rejection_mass_agrees_with_quadrature():
    m = SpectralModel((1.0, 2.0))
    body = Ellipsoid([1.0, 2.0])
    exact = nu_rule(m, body).meta["mass"]
    s = nu_rejection(m, body, np.random.default_rng(0), 400_000)
    assert abs(s.meta["mass"] - exact) < 4 * s.meta["mass_error"]


def test_penalized_mass_decreases_to_restricted_mass():
    body = Ball(1, 1.0)
    masses = [nu_eps_rule(ONE, body, e).meta["mass"] for e in (1e-1, 1e-2, 1e-3)]
    assert masses[0] > masses[1] > masses[2] > erf(1.0)


def test_wilson_interval_covers_rate():
    lo, hi = wilson_interval(30, 100)
    assert lo < 0.3 < hi


def test_ibp_with_constant_function_is_zero():
    rep = ibp_nu(ONE, Ball(1, 1.0), constant(1, 1.0), [1.0], QUAD)
    assert rep.passed and abs(rep.lhs) < 1e-14 and abs(rep.rhs) < 1e-14


def test_ibp_with_zero_direction_is_zero():
    phi = from_polynomial(Polynomial(1, {(3,): 1.0}), "x^3")
    rep = ibp_nu(ONE, Ball(1, 1.0), phi, [0.0], QUAD)
    assert rep.lhs == 0.0 and rep.rhs == 0.0


@settings(max_examples=10, deadline=None)
@given(k=st.integers(1, 5), c=st.floats(-2, 2))
def test_ibp_on_interval_for_monomials(k, c):
    phi = from_polynomial(Polynomial(1, {(k,): 1.0, (0,): c}), "p")
    assert ibp_nu(ONE, Ball(1, 1.0), phi, [1.0], QUAD).passed


def test_ibp_for_odd_function_has_symmetric_boundary_terms():
    rep = ibp_nu(ONE, Ball(1, 1.0), coordinate(1, 0), [1.0], QUAD)
    assert rep.passed
    assert abs(rep.lhs) > 0.1


def test_ibp_in_two_dimensions_on_ellipse():
    m = SpectralModel((1.0, 2.0))
    rep = ibp_nu(m, Ellipsoid([1.0, 3.0]), trig([1.0, 1.0], "sin"), [0.6, 0.8], QUAD)
    assert rep.passed, rep.line()


def test_gaussian_ibp_on_whole_space():
    m = SpectralModel((1.0, 2.0))
    rep = ibp_mu(m, trig([0.5, 1.0], "cos"), constant(2, 1.0), [1.0, -1.0], QUAD)
    assert rep.passed


def test_penalized_ibp_needs_coefficient_two():
    body = Ball(1, 1.0)
    phi = coordinate(1, 0)
    assert ibp_nu_eps(ONE, body, 0.1, phi, [1.0], QUAD).passed
    wrong = ibp_nu_eps(ONE, body, 0.1, phi, [1.0], QUAD, coefficient=1.0)
    assert not wrong.passed


def test_invariance_on_whole_space_is_exact():
    for rep in invariance(ONE, WholeSpace(1), from_polynomial(Polynomial(1, {(4,): 1.0}), "x^4"), (1e-1,), QUAD):
        assert abs(rep.lhs) < 1e-10


def test_penalized_invariance_on_interval():
    phi = from_polynomial(Polynomial(1, {(2,): 1.0}), "x^2")
    reps = invariance(ONE, Ball(1, 1.0), phi, (1e-1, 1e-2), QUAD, tolerance=1e-6)
    assert all(r.passed for r in reps)


def test_log_sobolev_constant_function_is_tight():
    rep = log_sobolev(ONE, Ball(1, 1.0), constant(1, 2.0), QUAD)
    assert abs(rep.residual) < 1e-12


def test_log_sobolev_holds_for_positive_function():
    phi = from_polynomial(Polynomial(1, {(0,): 1.0, (2,): 1.0}), "1+x^2")
    assert log_sobolev(ONE, Ball(1, 1.0), phi, QUAD).passed
    assert log_sobolev(ONE, Ball(1, 1.0), phi, QUAD, constant="sharp").passed


def test_trace_inequality_ratio_is_finite():
    rep = trace_inequality(ONE, Ball(1, 1.0), coordinate(1, 0), QUAD)
    assert rep.passed and math.isfinite(rep.lhs)


def test_dirichlet_form_is_symmetric_identity():
    phi = from_polynomial(Polynomial(1, {(2,): 1.0}), "x^2")
    psi = coordinate(1, 0)
    assert dirichlet_form_identity(ONE, Ball(1, 1.0), phi, psi, QUAD).passed


@pytest.mark.parametrize("method", ["quadrature", "monte_carlo"])
def test_estimators_agree_in_two_dimensions(method):
    m = SpectralModel((1.0, 2.0))
    cfg = EstimatorConfig(method=method, samples=400_000, seed=3)
    rep = ibp_nu(m, Ball(2, 1.0), coordinate(2, 0), [1.0, 0.0], cfg)
    assert rep.passed, rep.line()
