from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reflected_ou.convexbody import Ball, Ellipsoid, IntegrandBody, WholeSpace
from reflected_ou.errors import ReflectedOUError

coords = st.floats(-6, 6, allow_nan=False, allow_infinity=False)


def bodies():
    return [Ball(3, 1.3), Ellipsoid([1.0, 4.0, 0.5])]


@pytest.mark.parametrize("body", bodies(), ids=lambda b: b.name)
@settings(max_examples=60, deadline=None)
@given(x=arrays(float, 3, elements=coords), y=arrays(float, 3, elements=coords))
def test_projection_is_nonexpansive_and_idempotent(body, x, y):
    px, _ = body.project_points(x[None])
    py, _ = body.project_points(y[None])
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-8
    ppx, d = body.project_points(px)
    np.testing.assert_allclose(ppx, px, atol=1e-9)
    assert d[0] <= 1e-9


@pytest.mark.parametrize("body", bodies(), ids=lambda b: b.name)
@settings(max_examples=60, deadline=None)
@given(x=arrays(float, 3, elements=coords))
def test_projection_satisfies_variational_inequality(body, x):
    # <x - Px, k - Px> <= 0 for every k in K; sample k from the body's interior.
    p = body.project_points(x[None])[0][0]
    ks = np.random.default_rng(0).uniform(-3, 3, size=(400, 3))
    ks = ks[body.contains(ks)]
    assert np.all((ks - p) @ (x - p) <= 1e-7 * (1 + np.linalg.norm(x)))


def test_ball_projection_matches_closed_form():
    b = Ball(2, 2.0)
    x = np.array([[3.0, 4.0], [0.5, 0.1]])
    p, d = b.project_points(x)
    np.testing.assert_allclose(p[0], [1.2, 1.6], atol=1e-10)
    np.testing.assert_allclose(d, [3.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(p[1], x[1])


def test_exterior_normal_of_ball_is_radial():
    b = Ball(3, 1.0)
    y = np.array([0.0, 0.6, 0.8])
    np.testing.assert_allclose(b.exterior_normal(y), y, atol=1e-12)
    with pytest.raises(ReflectedOUError):
        b.exterior_normal(np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(x=arrays(float, 2, elements=coords), v=arrays(float, 2, elements=st.floats(-2, 2)))
def test_projection_jacobian_is_positive_semidefinite(x, v):
    e = Ellipsoid([1.0, 3.0])
    q = e.projection_jacobian_quadratic_form(x, v)
    assert q >= -1e-6 * (1 + v @ v)


def test_penalty_gradient_vanishes_inside_and_points_out():
    b = Ball(2, 1.0)
    g = b.penalty_gradient(np.array([[0.2, 0.1], [2.0, 0.0]]), eps=0.5)
    np.testing.assert_allclose(g[0], 0.0)
    np.testing.assert_allclose(g[1], [2.0, 0.0])


def test_whole_space_projection_is_identity():
    w = WholeSpace(2)
    x = np.array([[10.0, -3.0]])
    np.testing.assert_allclose(w.project_points(x)[0], x)


def test_integrand_body_contains_origin_and_projects_inside():
    body = IntegrandBody(2, [0.0, 0.0, 1.0], 1.0, 1.0)
    assert body.contains(np.zeros(2))
    p, _ = body.project_points(np.array([[5.0, 5.0]]))
    assert body.contains(p[0] * (1 - 1e-9))
