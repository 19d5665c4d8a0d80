import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifactor_copula.diagnostics import (DiagnosticError, contingency, diagnostics_table,
                                         matched_copula, polychoric, semi_polychoric,
                                         split_boundary)
from bifactor_copula.model import build_spec
from bifactor_copula.simulate import SimDesign, draw


def discretised_normal(rho, n, K, seed):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=n)
    cuts = np.array([-1.0, -0.3, 0.4, 1.1])[:K - 1]
    return np.searchsorted(cuts, z[:, 0]), np.searchsorted(cuts, z[:, 1])


def test_polychoric_independent():
    x, y = discretised_normal(0.0, 10_000, 5, 1)
    assert abs(polychoric(contingency(x, y, 5, 5))) < 0.05


def test_polychoric_recovers_latent_correlation():
    x, y = discretised_normal(0.5, 10_000, 5, 2)
    assert polychoric(contingency(x, y, 5, 5)) == pytest.approx(0.5, abs=0.03)


@pytest.mark.parametrize("rho", [-0.7, 0.2, 0.85])
def test_polychoric_binary_matches_tetrachoric_limit(rho):
    x, y = discretised_normal(rho, 20_000, 2, 3)
    assert polychoric(contingency(x, y, 2, 2)) == pytest.approx(rho, abs=0.04)


def test_polychoric_diagonal_clamps():
    assert polychoric(np.diag([30.0, 40.0, 30.0])) == 0.999
    assert polychoric(np.fliplr(np.diag([30.0, 40.0, 30.0]))) == -0.999


def test_polychoric_symmetric():
    x, y = discretised_normal(0.4, 2000, 4, 4)
    T = contingency(x, y, 4, 4)
    assert polychoric(T) == pytest.approx(polychoric(T.T), abs=1e-9)


@pytest.mark.parametrize("table", [np.array([[5.0, 3.0]]), np.array([[0, 0], [0, 9.0]]),
                                   np.array([[1.0, -1.0], [2.0, 2.0]])])
def test_polychoric_degenerate(table):
    with pytest.raises(DiagnosticError):
        polychoric(table)


def test_split_boundary_nearest_median():
    codes = np.repeat([0, 1, 2, 3, 4], [10, 15, 30, 25, 20])
    # cumulative proportions 0.1, 0.25, 0.55, 0.8: 0.55 is nearest one half
    assert split_boundary(codes, 5, "upper") == 3
    tie = np.repeat([0, 1, 2, 3], [25, 25, 25, 25])
    assert split_boundary(tie, 4, "upper") == split_boundary(tie, 4, "lower") == 2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(3, 6))
def test_reversal_swaps_tails(seed, K):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, K, 400)
    y = np.clip(x + rng.integers(-1, 2, 400), 0, K - 1)
    up = semi_polychoric(x, y, "upper", K, K)
    lo = semi_polychoric(K - 1 - x, K - 1 - y, "lower", K, K)
    assert up.n == lo.n
    assert up.flagged == lo.flagged
    if not up.flagged:
        assert up.rho == pytest.approx(lo.rho, abs=1e-6)


def test_sparse_quadrant_flagged():
    x = np.array([0, 1, 2, 0, 1, 2] * 5)
    r = semi_polychoric(x, x[::-1], "upper", 3, 3)
    assert r.flagged and np.isnan(r.rho)
    with pytest.raises(ValueError):
        semi_polychoric(x, x, "middle")


@pytest.fixture(scope="module")
def gumbel_pairs():
    s = build_spec("secondorder", (4,), 5, ["indep", "gumbel"], common_taus=0.55)
    return draw(SimDesign(s, 10_000, seed=6)).codes


def test_gumbel_upper_exceeds_lower(gumbel_pairs):
    Y = gumbel_pairs
    lo = np.mean([semi_polychoric(Y[:, a], Y[:, b], "lower", 5, 5).rho for a in range(4) for b in range(a)])
    up = np.mean([semi_polychoric(Y[:, a], Y[:, b], "upper", 5, 5).rho for a in range(4) for b in range(a)])
    assert up > lo + 0.1


def test_normal_tails_balanced():
    x, y = discretised_normal(0.5, 20_000, 5, 8)
    lo = semi_polychoric(x, y, "lower", 5, 5)
    up = semi_polychoric(x, y, "upper", 5, 5)
    assert abs(lo.rho - up.rho) < 0.08


def test_matched_copula():
    assert matched_copula("bvn", 0.42).theta == 0.42
    assert matched_copula("t5", 0.42).theta == 0.42
    g = matched_copula("gumbel", 0.5)
    assert g.tau == pytest.approx(1 / 3)
    assert matched_copula("gumbel", -0.2) is None


def test_table_theoretical_rows():
    from bifactor_copula.copulas import theoretical_semicorrelations
    for fam, rho, want in [("bvn", 0.42, (0.21, 0.21)), ("frank", 0.17, (0.04, 0.04))]:
        assert theoretical_semicorrelations(matched_copula(fam, rho)) == pytest.approx(want, abs=0.01)


def test_diagnostics_table_independence():
    s = build_spec("bifactor", (3, 3), 4, ["indep"] * 3)
    ds = draw(SimDesign(s, 5000, seed=2))
    tab = diagnostics_table(ds, ["bvn", "gumbel", "frank"])
    assert [sc.label for sc in tab.scopes] == ["all pairs", "g1", "g2"]
    assert tab.scopes[0].n_pairs == 15 and tab.scopes[1].n_pairs == 3
    for sc in tab.scopes:
        assert abs(sc.rho) < 0.05
        assert abs(sc.lower) < 0.1 and abs(sc.upper) < 0.1
        for fam in ("bvn", "frank"):
            assert np.all(np.abs(sc.theoretical[fam]) < 0.05)
    out = tab.render()
    assert "observed" in out and "gumbel" in out
    json.dumps(tab.to_dict())


def test_three_categories_keep_two_per_half():
    codes = np.repeat([0, 1, 2], [30, 40, 30])
    assert split_boundary(codes, 3, "upper") == 1
    assert split_boundary(codes, 3, "lower") == 2
