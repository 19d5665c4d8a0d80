import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifactor_copula.quadrature import DEFAULT_NQ, gauss_legendre


@pytest.mark.parametrize("nq", [2, 3, 7, 25, 50])
def test_weights_and_symmetry(nq):
    rule = gauss_legendre(nq)
    assert rule.nq == nq
    assert abs(rule.weights.sum() - 1.0) < 1e-12
    assert np.all(np.diff(rule.nodes) > 0)
    assert np.all((rule.nodes > 0) & (rule.nodes < 1))
    np.testing.assert_allclose(rule.nodes + rule.nodes[::-1], 1.0, atol=1e-12)
    assert np.all(rule.weights > 0)


@pytest.mark.parametrize("nq", [5, 25, 40])
def test_matches_numpy_leggauss(nq):
    x, w = np.polynomial.legendre.leggauss(nq)
    rule = gauss_legendre(nq)
    np.testing.assert_allclose(rule.nodes, 0.5 * (x + 1), atol=1e-14)
    np.testing.assert_allclose(rule.weights, 0.5 * w, atol=1e-14)


def test_x4_with_three_points():
    assert abs(gauss_legendre(3).integrate(lambda x: x**4) - 0.2) < 1e-14


@settings(max_examples=60, deadline=None)
@given(nq=st.integers(2, 30), seed=st.integers(0, 2**32 - 1))
def test_polynomial_exactness(nq, seed):
    rng = np.random.default_rng(seed)
    deg = 2 * nq - 1
    coef = rng.uniform(-1, 1, deg + 1)
    exact = np.sum(coef / np.arange(1, deg + 2))
    approx = gauss_legendre(nq).integrate(lambda x: np.polynomial.polynomial.polyval(x, coef))
    assert abs(approx - exact) < 1e-12


def test_cached_and_readonly():
    r = gauss_legendre()
    assert r is gauss_legendre(DEFAULT_NQ)
    with pytest.raises(ValueError):
        r.nodes[0] = 0.5


@pytest.mark.parametrize("bad", [0, 1, -3, 2.5])
def test_rejects_small_nq(bad):
    with pytest.raises(ValueError):
        gauss_legendre(bad)
