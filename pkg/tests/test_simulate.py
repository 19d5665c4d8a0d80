import numpy as np
import pytest
from scipy import stats

from bifactor_copula import copulas as C
from bifactor_copula.diagnostics import contingency, polychoric
from bifactor_copula.model import build_spec
from bifactor_copula.simulate import (SimDesign, draw, make_rng, replication_seeds,
                                      table1_design)


def test_independence_frequencies_uniform():
    s = build_spec("bifactor", (3, 3), 4, ["indep"] * 3)
    ds = draw(SimDesign(s, 100_000, seed=9))
    for j in range(6):
        counts = np.bincount(ds.codes[:, j], minlength=4)
        assert stats.chisquare(counts).pvalue > 1e-3


def test_second_order_frequencies_follow_cutpoints():
    cut = [[0.1, 0.5, 0.8]] * 4
    s = build_spec("secondorder", (2, 2), cut, ["gumbel", "frank", "t5"], common_taus=0.6, group_taus=0.5)
    ds = draw(SimDesign(s, 100_000, seed=1))
    for j in range(4):
        counts = np.bincount(ds.codes[:, j], minlength=4)
        assert stats.chisquare(counts, 1e5 * np.array([0.1, 0.4, 0.3, 0.2])).pvalue > 1e-3


def test_gaussian_polychorics_match_loadings():
    theta = np.array([0.7, 0.6, 0.5, 0.6, 0.5, 0.4])
    delta = np.array([0.5, 0.6, 0.4, 0.5, 0.3, 0.6])
    s = build_spec("bifactor", (3, 3), 5, ["bvn"] * 3, common_params=theta, group_params=delta)
    ds = draw(SimDesign(s, 100_000, seed=5))
    gam = delta * np.sqrt(1 - theta ** 2)
    same = np.equal.outer([0, 0, 0, 1, 1, 1], [0, 0, 0, 1, 1, 1])
    R = np.outer(theta, theta) + np.outer(gam, gam) * same
    for j1, j2 in [(0, 1), (1, 2), (3, 5), (0, 4), (2, 3)]:
        r = polychoric(contingency(ds.codes[:, j1], ds.codes[:, j2], 5, 5))
        assert r == pytest.approx(R[j1, j2], abs=0.015)


def test_seeded_draws_identical():
    d = table1_design(3)["secondorder"]
    a, b = draw(d), draw(d)
    assert np.array_equal(a.codes, b.codes)
    c = draw(SimDesign(d.spec, d.n, seed=1))
    assert not np.array_equal(a.codes, c.codes)


def test_replication_streams_independent_and_reproducible():
    s1 = replication_seeds(7, 3)
    s2 = replication_seeds(7, 3)
    x1 = [make_rng(s).random(4) for s in s1]
    x2 = [make_rng(s).random(4) for s in s2]
    np.testing.assert_array_equal(x1, x2)
    assert not np.allclose(x1[0], x1[1])
    assert isinstance(make_rng(0).bit_generator, np.random.Philox)


def test_table1_designs():
    des = table1_design(3)
    assert des["bifactor"].spec.n_free == 32
    assert des["bifactor"].n == 500
    so = table1_design(5)["secondorder"].spec
    assert so.n_free == 20
    assert so.common_links[0].theta == pytest.approx(1 / (1 - 0.40))
    bf = table1_design(5)["bifactor"].spec
    assert bf.common_links[0].theta == pytest.approx(1 / (1 - 0.45))
    np.testing.assert_allclose([c.tau for c in bf.common_links[::4]], [0.45, 0.55, 0.65, 0.75])
    np.testing.assert_allclose([c.tau for c in bf.group_links[::4]], [0.30, 0.35, 0.40, 0.50])
    np.testing.assert_allclose([c.tau for c in so.group_links], [0.30, 0.35, 0.40, 0.45])
    np.testing.assert_allclose(bf.cutpoints[3], [0.2, 0.4, 0.6, 0.8])
    with pytest.raises(ValueError):
        table1_design(4)


def test_group_exchangeability():
    # groups sharing the same link taus give matching within-group polychorics
    s = build_spec("bifactor", (4, 4), 3, ["gumbel"] * 3, common_taus=0.5, group_taus=0.35)
    ds = draw(SimDesign(s, 20_000, seed=3))
    avg = []
    for g in range(2):
        items = range(4 * g, 4 * g + 4)
        rs = [polychoric(contingency(ds.codes[:, a], ds.codes[:, b], 3, 3))
              for a in items for b in items if a < b]
        avg.append(np.mean(rs))
    assert abs(avg[0] - avg[1]) < 0.02


def test_design_validation():
    s = build_spec("bifactor", (3,), 3, ["bvn"] * 2)
    with pytest.raises(ValueError):
        SimDesign(s, 0)
