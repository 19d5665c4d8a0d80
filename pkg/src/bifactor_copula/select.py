"""Stepwise AIC selection of copula families per factor, and the Vuong interval."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .copulas import DEFAULT_FAMILIES, NumericalFailure, get_family
from .estimate import (FitResult, InvalidStartError, _as_dataset, data_fingerprint, estimate_cutpoints,
                       fit)
from .model import row_loglik, _codes
from .quadrature import QuadratureRule, gauss_legendre

AIC_TIE = 1e-8


class SelectionError(RuntimeError):
    pass


@dataclass
class SelectionStep:
    slot: int
    aic: dict
    chosen: str


@dataclass
class SelectionTrace:
    """Candidates, per-step AIC tables, chosen family per factor slot and the final fit."""

    candidates: tuple
    steps: list
    families: tuple
    final: FitResult
    start: FitResult

    def records(self) -> list[dict]:
        out = []
        for k, st in enumerate(self.steps):
            for fam, aic in st.aic.items():
                out.append({"step": k + 1, "slot": st.slot, "candidate": fam, "aic": aic,
                            "chosen": fam == st.chosen})
        return out


def _warm_start(fit_res: FitResult) -> dict:
    spec = fit_res.spec_hat
    return {"common_taus": [c.tau for c in spec.common_links],
            "group_taus": [c.tau for c in spec.group_links]}


def _pick(aics: dict, order: Sequence[str]) -> str:
    best = min(aics.values())
    tied = [f for f in aics if aics[f] <= best + AIC_TIE]
    if "bvn" in tied:
        return "bvn"
    return min(tied, key=lambda f: list(order).index(f))


def select_families(data, structure: str, candidates: Sequence[str] = DEFAULT_FAMILIES,
                    rule: QuadratureRule | None = None, *, group_sizes=None,
                    warm_start: bool = True, **fit_options) -> SelectionTrace:
    """Sequential AIC sweep: X0 links first, then each group factor in turn.

    Starts from the all-BVN model; the family of each slot is fixed at the AIC
    minimiser before moving on. Ties go to BVN, then to candidate order. Each
    candidate is fitted from the default start and, unless ``warm_start`` is
    False, also from the current best model's tau estimates; the fit with the
    higher log-likelihood is kept.
    """
    candidates = tuple(get_family(c).tag for c in candidates)
    if not candidates:
        raise ValueError("candidate set is empty")
    ds = _as_dataset(data, group_sizes)
    rule = rule or gauss_legendre()
    cut = estimate_cutpoints(ds)
    G = ds.G
    fams = ["bvn"] * (G + 1)
    opts = dict(fit_options)
    opts.setdefault("compute_se", False)
    current = fit(ds, structure, fams, rule, cutpoints=cut, **opts)
    start_fit = current
    steps = []
    for slot in range(G + 1):
        aics = {}
        fits = {}
        for cand in candidates:
            trial = list(fams)
            trial[slot] = cand
            if trial == fams:
                fits[cand], aics[cand] = current, current.aic
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    r = fit(ds, structure, trial, rule, cutpoints=cut, **opts)
                    if warm_start:
                        # the delta likelihood has ridges; keep the better of two starts
                        r2 = fit(ds, structure, trial, rule, cutpoints=cut, start=_warm_start(current), **opts)
                        if r2.loglik > r.loglik:
                            r = r2
                if not np.isfinite(r.aic):
                    raise NumericalFailure("non-finite AIC")
            except (NumericalFailure, InvalidStartError, FloatingPointError, ValueError) as exc:
                warnings.warn(f"candidate {cand} for slot {slot} skipped: {exc}", RuntimeWarning,
                              stacklevel=2)
                continue
            fits[cand], aics[cand] = r, r.aic
        if not aics:
            raise SelectionError(f"every candidate failed for factor slot {slot}")
        chosen = _pick(aics, candidates)
        fams[slot] = chosen
        current = fits[chosen]
        steps.append(SelectionStep(slot, aics, chosen))
    return SelectionTrace(candidates, steps, tuple(fams), current, start_fit)


def vuong_interval(fit_a: FitResult, fit_b: FitResult, data, rule: QuadratureRule | None = None,
                   penalty: str | None = None, z: float = 1.96) -> tuple[float, float]:
    """Normal interval for the mean per-row log-likelihood difference B minus A.

    ``penalty`` is None (plain), ``"aic"`` or ``"bic"`` (parameter-count
    corrections applied to the mean). An interval entirely above zero favours B.
    """
    Y = _codes(data)
    key = data_fingerprint(Y)
    if fit_a.data_key != key or fit_b.data_key != key:
        raise ValueError("both fits must come from the supplied dataset")
    rule = rule or gauss_legendre()
    D = row_loglik(fit_b.spec_hat, Y, rule) - row_loglik(fit_a.spec_hat, Y, rule)
    n = len(D)
    mean = D.mean()
    dq = fit_b.n_free - fit_a.n_free
    if penalty == "aic":
        mean -= dq / n
    elif penalty == "bic":
        mean -= dq * np.log(n) / (2 * n)
    elif penalty is not None:
        raise ValueError(f"unknown penalty {penalty!r}")
    half = z * D.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return float(mean - half), float(mean + half)
