from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from reflected_ou.convexbody import QuadraticLevel
from reflected_ou.errors import HypothesisViolated
from reflected_ou.spectral import SpectralModel
from reflected_ou.surface import (
    coarea_check,
    histogram_density,
    hill_tail_index,
    hypothesis_integrals,
    pushforward_density,
    shell_integral,
    sigma_curve,
)


def test_coarea_with_quadrature_in_two_dimensions():
    m = SpectralModel.constant(2)
    rep = coarea_check(m, QuadraticLevel([1.0, 1.0]), lambda x: np.ones(len(x)), r_max=20.0, kind="quadrature")
    assert rep.passed, rep.line()


def test_coarea_with_nonconstant_integrand():
    m = SpectralModel((1.0, 2.0))
    rep = coarea_check(m, QuadraticLevel([1.0, 1.0]), lambda x: np.cos(x[:, 0]), r_max=20.0, kind="quadrature")
    assert rep.passed, rep.line()


def test_shell_quadrature_and_monte_carlo_agree():
    m = SpectralModel.constant(2)
    g = QuadraticLevel([1.0, 2.0])
    f = lambda x: 1.0 + x[:, 0] ** 2
    q = shell_integral(m, g, f, 0.5, kind="quadrature")
    mc = shell_integral(m, g, f, 0.5, kind="monte_carlo", samples=400_000, seed=1, h_shell=0.01)
    assert abs(q.value - mc.value) < 4 * mc.error + 0.02 * abs(q.value)


def test_sigma_curve_shape():
    rows = sigma_curve(SpectralModel.constant(2), QuadraticLevel([1.0, 1.0]), np.array([0.5, 1.0]))
    assert rows.shape == (2, 3)
    assert np.all(rows[:, 1] > 0)


def test_density_of_squared_norm_is_scaled_chi_square():
    # With mu = N(0, I/2) in three dimensions, 2|x|^2 is chi-square with three degrees of freedom.
    m = SpectralModel.constant(3)
    g = QuadraticLevel([1.0, 1.0, 1.0])
    rs = [0.5, 1.0, 2.0]
    est = pushforward_density(m, g, rs, samples=400_000, seed=2, check_hypothesis=False)
    for e in est:
        ref = 2 * stats.chi2(3).pdf(2 * e.r)
        assert abs(e.value - ref) < 4 * e.std_error + 0.01 * ref


def test_histogram_cross_check():
    m = SpectralModel.constant(3)
    g = QuadraticLevel([1.0, 1.0, 1.0])
    est = histogram_density(m, g, 1.0, 0.05, 400_000, seed=3)
    assert abs(est.value - 2 * stats.chi2(3).pdf(2.0)) < 0.02


def test_hypothesis_integrals_finite_in_three_dimensions():
    hyp = hypothesis_integrals(SpectralModel.constant(3), QuadraticLevel([1.0, 1.0, 1.0]), samples=200_000)
    assert not hyp.any_divergent
    # J1 = E[1/<Qx, x>] = E[2/|x|^2] = 4 E[1/chi2_3] = 4; the integrand has infinite variance.
    assert hyp.values["J1"] == pytest.approx(4.0, rel=0.1)


def test_hypothesis_integrals_diverge_on_the_line():
    hyp = hypothesis_integrals(SpectralModel.constant(1), QuadraticLevel([1.0]), samples=200_000)
    assert hyp.diverges["J1"] and hyp.diverges["I1"]
    assert not hyp.diverges["I3"]


def test_density_refuses_divergent_hypothesis():
    with pytest.raises(HypothesisViolated):
        pushforward_density(SpectralModel.constant(1), QuadraticLevel([1.0]), 1.0, samples=50_000)


def test_hill_tail_index_recovers_pareto_index():
    x = np.random.default_rng(0).pareto(2.0, 200_000) + 1.0
    assert hill_tail_index(x) == pytest.approx(2.0, rel=0.15)
    assert hill_tail_index(np.ones(100)) == float("inf")
