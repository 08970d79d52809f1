from math import factorial

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goafem.quadrature import (gauss_jacobi_rule, gauss_legendre_extended,
                               gauss_points_on_segment, quad_rule)

# int_0^1 x^(-9/20) sin(pi x) dx, 35 digits from mpmath
with mpmath.workdps(40):
    SINGULAR_SINE = mpmath.quad(lambda x: x ** mpmath.mpf("-0.45") * mpmath.sin(mpmath.pi * x),
                                [0, 1])


def triangle_monomial(a, b):
    # int over the reference triangle of x^a y^b
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("order", range(1, 13))
def test_interval_exactness(order):
    rule = quad_rule(1, order)
    assert rule.exactness_degree >= order
    x = rule.points[:, 0]
    for k in range(order + 1):
        assert rule.weights @ x ** k == pytest.approx(1.0 / (k + 1), rel=1e-14, abs=1e-15)


def test_two_point_gauss_integrates_cubic():
    rule = quad_rule(1, 3)
    assert len(rule) == 2
    assert abs(rule.weights @ rule.points[:, 0] ** 3 - 0.25) <= 1e-15


def test_interval_rule_is_not_exact_beyond_its_degree():
    rule = quad_rule(1, 3)
    x = rule.points[:, 0]
    assert abs(rule.weights @ x ** 4 - 0.2) > 1e-4


@pytest.mark.parametrize("order", range(1, 13))
def test_triangle_exactness(order):
    rule = quad_rule(2, order)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
    assert np.all(rule.weights > 0)
    x, y = rule.points.T
    assert np.all(x >= 0) and np.all(y >= 0) and np.all(x + y <= 1)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            exact = triangle_monomial(a, b)
            assert rule.weights @ (x ** a * y ** b) == pytest.approx(exact, rel=1e-13)


def test_triangle_x2y2():
    rule = quad_rule(2, 4)
    x, y = rule.points.T
    assert rule.weights @ (x ** 2 * y ** 2) == pytest.approx(1 / 180, rel=1e-13)


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_quad_rule_rejects_bad_order(bad):
    with pytest.raises(ValueError):
        quad_rule(1, bad)


def test_quad_rule_rejects_bad_dimension():
    with pytest.raises(ValueError):
        quad_rule(3, 2)
    with pytest.raises(ValueError):
        quad_rule(2, 4, extended=True)


@pytest.mark.parametrize("n", [1, 2, 5, 8, 13])
def test_extended_legendre_against_mpmath(n):
    x, w = gauss_legendre_extended(n)
    assert x.dtype == np.longdouble and w.dtype == np.longdouble
    with mpmath.workdps(40):
        coeffs = mpmath.taylor(lambda t: mpmath.legendre(n, t), 0, n)[::-1]
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
        nodes = np.sort([float((mpmath.re(r) + 1) / 2) for r in roots])
    assert np.allclose(np.sort(x.astype(float)), nodes, rtol=0, atol=1e-16)
    for k in range(2 * n):
        err = np.sum(w * x ** k) - np.longdouble(1) / (k + 1)
        assert abs(err) <= 2e-18


def test_extended_rule_agrees_with_double_rule():
    for order in (3, 7, 10):
        ext = quad_rule(1, order, extended=True)
        dbl = quad_rule(1, order)
        assert ext.points.dtype == np.longdouble
        assert np.allclose(ext.points.astype(float), dbl.points, atol=2e-16)
        assert np.allclose(ext.weights.astype(float), dbl.weights, atol=2e-16)


@given(alpha=st.floats(-0.95, 3.0), n=st.integers(1, 10))
def test_gauss_jacobi_exactness(alpha, n):
    rule = gauss_jacobi_rule(alpha, n)
    x = rule.points[:, 0]
    assert np.all((x > 0) & (x < 1))
    for k in range(2 * n):
        exact = 1.0 / (k + alpha + 1.0)
        assert rule.weights @ x ** k == pytest.approx(exact, rel=1e-12)


def test_gauss_jacobi_weight_one_is_gauss_legendre():
    gj = gauss_jacobi_rule(0.0, 2)
    gl = quad_rule(1, 3)
    assert np.allclose(np.sort(gj.points[:, 0]), np.sort(gl.points[:, 0]), atol=1e-15)
    assert np.allclose(np.sort(gj.weights), np.sort(gl.weights), atol=1e-15)


def test_gauss_jacobi_singular_power():
    rule = gauss_jacobi_rule(-9 / 20, 4)
    assert abs(rule.weights.sum() - 20 / 11) <= 1e-13


def test_gauss_jacobi_singular_sine():
    rule = gauss_jacobi_rule(-9 / 20, 8)
    val = rule.weights @ np.sin(np.pi * rule.points[:, 0])
    assert abs(val - float(SINGULAR_SINE)) <= 1e-12
    assert abs(val - 0.95925303932778833) <= 1e-12


def test_mpmath_oracle_matches_published_value():
    # the published value carries 17 significant digits
    with mpmath.workdps(40):
        assert abs(SINGULAR_SINE - mpmath.mpf("0.95925303932778833")) <= 1e-17


@pytest.mark.parametrize("alpha, n", [(-1.0, 3), (-2.0, 3), (0.5, 0)])
def test_gauss_jacobi_rejects(alpha, n):
    with pytest.raises(ValueError):
        gauss_jacobi_rule(alpha, n)


def test_segment_points_integrate_linear_functions(rng):
    a = rng.random((6, 2))
    b = rng.random((6, 2))
    pts, w = gauss_points_on_segment(a, b, 2)
    assert pts.shape == (6, 2, 2) and w.shape == (6, 2)
    length = np.linalg.norm(b - a, axis=1)
    assert np.allclose(w.sum(axis=1), length, rtol=1e-14)
    c = np.array([0.3, -1.7])
    f = 2.0 + pts @ c
    exact = length * (2.0 + 0.5 * (a + b) @ c)
    assert np.allclose(np.sum(w * f, axis=1), exact, rtol=1e-13)
