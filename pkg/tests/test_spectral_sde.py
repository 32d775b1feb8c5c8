from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflected_ou.convexbody import Ball, WholeSpace
from reflected_ou.rng import PathNoise
from reflected_ou.sde import Scheme, simulate
from reflected_ou.spectral import SpectralModel, ou_coefficients, ou_step_exact, sample_mu, white_noise


def test_dirichlet_laplacian_eigenvalues():
    m = SpectralModel.dirichlet_laplacian(3, length=1.0)
    np.testing.assert_allclose(m.alpha, (np.pi * np.arange(1, 4)) ** 2)
    np.testing.assert_allclose(m.lambdas, 1 / (2 * m.alpha))


def test_mu_samples_have_covariance_q():
    m = SpectralModel((1.0, 4.0))
    x = sample_mu(m, np.random.default_rng(1), 200_000)
    np.testing.assert_allclose(x.var(axis=0), m.lambdas, rtol=0.02)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_white_noise_is_linear(a, b):
    m = SpectralModel((1.0, 2.0, 5.0))
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 3))
    z1, z2 = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(
        white_noise(m, a * z1 + b * z2, x), a * white_noise(m, z1, x) + b * white_noise(m, z2, x), atol=1e-10
    )


def test_white_noise_isometry():
    m = SpectralModel((1.0, 3.0))
    z = np.array([0.6, 0.8])
    x = sample_mu(m, np.random.default_rng(4), 400_000)
    assert abs(np.mean(white_noise(m, z, x) ** 2) - 1.0) < 0.01


def test_exact_ou_step_moments():
    m = SpectralModel((0.5, 2.0))
    h = 0.3
    decay, std = ou_coefficients(m, h)
    x0 = np.array([1.0, -2.0])
    np.testing.assert_allclose(ou_step_exact(m, x0, h, noise=np.zeros(2)), x0 * np.exp(-m.alpha * h))
    draws = ou_step_exact(m, np.tile(x0, (200_000, 1)), h, rng=np.random.default_rng(5))
    np.testing.assert_allclose(draws.mean(axis=0), x0 * decay, atol=0.01)
    np.testing.assert_allclose(draws.var(axis=0), (1 - np.exp(-2 * m.alpha * h)) / (2 * m.alpha), rtol=0.02)
    np.testing.assert_allclose(std**2, (1 - np.exp(-2 * m.alpha * h)) / (2 * m.alpha))


def test_path_noise_depends_only_on_path_id():
    a = PathNoise(7, np.arange(6), 2).next_block(4)
    b = PathNoise(7, np.arange(3, 6), 2).next_block(4)
    np.testing.assert_array_equal(a[:, 3:], b)


@pytest.mark.parametrize("kind", ["penalized", "projected"])
def test_simulation_is_independent_of_jobs(kind):
    m = SpectralModel.constant(2)
    scheme = Scheme.penalized(1e-2) if kind == "penalized" else Scheme.projected()
    args = (m, Ball(2, 1.0), scheme, [0.1, 0.2], 0.5, 1e-2, 13, 5)
    one = simulate(*args, jobs=1)
    four = simulate(*args, jobs=4)
    np.testing.assert_array_equal(one.states, four.states)


def test_projected_scheme_stays_in_body():
    m = SpectralModel.constant(2, 0.1)
    body = Ball(2, 0.5)
    ens = simulate(m, body, Scheme.projected(), [0.0, 0.0], 2.0, 1e-2, 50, 1, full_storage=True)
    assert np.all(np.linalg.norm(ens.states, axis=2) <= 0.5 + 1e-9)


def test_whole_space_penalized_scheme_is_exact_ou():
    m = SpectralModel.constant(1)
    ens = simulate(m, WholeSpace(1), Scheme.penalized(1e-3), [0.0], 5.0, 1e-2, 4000, 2, stride=500)
    assert abs(ens.states[:, -1, 0].var() - 0.5) < 0.05


def test_ensemble_writes_columnar_csv(tmp_path):
    m = SpectralModel.constant(1)
    ens = simulate(m, Ball(1, 1.0), Scheme.penalized(1e-2), [0.0], 0.1, 1e-2, 3, 0, full_storage=True)
    csv, man = ens.write(tmp_path)
    rows = np.loadtxt(csv, delimiter=",", skiprows=1)
    assert rows.shape == (3 * 11, 3)
    assert man.exists()
