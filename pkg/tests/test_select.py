import numpy as np
import pytest

from bifactor_copula import select as S
from bifactor_copula.estimate import fit
from bifactor_copula.model import build_spec
from bifactor_copula.select import SelectionError, select_families, vuong_interval
from bifactor_copula.simulate import SimDesign, draw

CANDS = ("bvn", "gumbel", "sgumbel", "frank")


@pytest.fixture(scope="module")
def gumbel_data():
    # K=5: with three categories a 4-item group carries too little tail information
    s = build_spec("bifactor", (4, 4), 5, ["gumbel"] * 3, common_taus=0.55, group_taus=0.4)
    return draw(SimDesign(s, 800, seed=31))


@pytest.fixture(scope="module")
def trace(gumbel_data):
    return select_families(gumbel_data, "bifactor", CANDS)


def test_trace_shape(trace):
    assert len(trace.families) == 3
    assert [st.slot for st in trace.steps] == [0, 1, 2]
    assert all(set(st.aic) == set(CANDS) for st in trace.steps)
    assert len(trace.records()) == 3 * len(CANDS)


def test_gumbel_truth_found(trace):
    assert trace.families == ("gumbel", "gumbel", "gumbel")


def test_final_aic_not_worse_than_all_bvn(trace):
    assert trace.start.families == ("bvn",) * 3
    assert trace.final.aic <= trace.start.aic
    aics = [min(st.aic.values()) for st in trace.steps]
    assert all(b <= a + 1e-6 for a, b in zip(aics, aics[1:]))


def test_selection_deterministic(gumbel_data, trace):
    again = select_families(gumbel_data, "bifactor", CANDS)
    assert again.families == trace.families
    assert again.final.loglik == trace.final.loglik


def test_single_candidate(gumbel_data):
    tr = select_families(gumbel_data, "secondorder", ["bvn"])
    assert tr.families == ("bvn",) * 3
    assert all(list(st.aic) == ["bvn"] for st in tr.steps)
    assert tr.final is tr.start


def test_tie_rule():
    assert S._pick({"gumbel": 10.0, "bvn": 10.0 + 1e-9}, CANDS) == "bvn"
    assert S._pick({"frank": 5.0, "gumbel": 5.0}, CANDS) == "gumbel"
    assert S._pick({"frank": 4.0, "gumbel": 5.0}, CANDS) == "frank"


def test_failed_candidate_skipped(gumbel_data, monkeypatch):
    real = S.fit

    def flaky(ds, structure, fams, *args, **kw):
        if "frank" in fams:
            raise ValueError("boom")
        return real(ds, structure, fams, *args, **kw)

    monkeypatch.setattr(S, "fit", flaky)
    with pytest.warns(RuntimeWarning, match="frank"):
        tr = select_families(gumbel_data, "secondorder", ["bvn", "frank"])
    assert all("frank" not in st.aic for st in tr.steps)


def test_all_candidates_fail(gumbel_data, monkeypatch):
    def broken(ds, structure, fams, *args, **kw):
        if fams[0] != "bvn" or set(fams) != {"bvn"}:
            raise ValueError("boom")
        raise ValueError("start fails too")

    real = S.fit
    calls = {"n": 0}

    def first_ok(ds, structure, fams, *args, **kw):
        calls["n"] += 1
        if calls["n"] == 1:
            return real(ds, structure, fams, *args, **kw)
        return broken(ds, structure, fams)

    monkeypatch.setattr(S, "fit", first_ok)
    with pytest.warns(RuntimeWarning), pytest.raises(SelectionError):
        select_families(gumbel_data, "secondorder", ["gumbel", "frank"])


def test_empty_candidates(gumbel_data):
    with pytest.raises(ValueError):
        select_families(gumbel_data, "bifactor", [])


# --- Vuong -----------------------------------------------------------------------


def test_vuong_identical_fits(gumbel_data, trace):
    lo, hi = vuong_interval(trace.final, trace.final, gumbel_data)
    assert lo <= 0 <= hi
    assert lo == pytest.approx(-hi, abs=1e-15)


def test_vuong_antisymmetric(gumbel_data, trace):
    ab = vuong_interval(trace.start, trace.final, gumbel_data)
    ba = vuong_interval(trace.final, trace.start, gumbel_data)
    assert ab[0] == pytest.approx(-ba[1], abs=1e-14)
    assert ab[1] == pytest.approx(-ba[0], abs=1e-14)


def test_vuong_favours_true_family(gumbel_data, trace):
    lo, hi = vuong_interval(trace.start, trace.final, gumbel_data)
    assert lo > 0


def test_vuong_penalties(gumbel_data, trace):
    plain = vuong_interval(trace.start, trace.final, gumbel_data)
    assert vuong_interval(trace.start, trace.final, gumbel_data, penalty="aic") == pytest.approx(plain)
    with pytest.raises(ValueError):
        vuong_interval(trace.start, trace.final, gumbel_data, penalty="hqic")
    small = fit(gumbel_data, "secondorder", ["bvn"] * 3, compute_se=False)
    a = vuong_interval(small, trace.start, gumbel_data)
    b = vuong_interval(small, trace.start, gumbel_data, penalty="bic")
    shift = (trace.start.n_free - small.n_free) * np.log(800) / 1600
    assert b[0] == pytest.approx(a[0] - shift, abs=1e-12)


def test_vuong_dataset_mismatch(gumbel_data, trace):
    other = draw(SimDesign(trace.final.spec_hat, 800, seed=99))
    with pytest.raises(ValueError):
        vuong_interval(trace.start, trace.final, other)
