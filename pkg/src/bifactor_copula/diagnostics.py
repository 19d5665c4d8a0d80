"""Polychoric correlations, quadrant semi-correlations and the observed-vs-theoretical table."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .bvn import bvn_rectangles
from .copulas import DEFAULT_FAMILIES, CopulaSpec, get_family, theoretical_semicorrelations
from .data import OrdinalDataset
from .model import _codes

RHO_BOUND = 0.999
MIN_QUADRANT = 30


class DiagnosticError(ValueError):
    pass


def contingency(x, y, kx: int | None = None, ky: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    kx = kx or int(x.max()) + 1
    ky = ky or int(y.max()) + 1
    return np.bincount(x * ky + y, minlength=kx * ky).reshape(kx, ky).astype(float)


def _normal_cuts(margin: np.ndarray) -> np.ndarray:
    cum = np.cumsum(margin)[:-1] / margin.sum()
    return np.concatenate([[-np.inf], special.ndtri(np.clip(cum, 0.0, 1.0)), [np.inf]])


def polychoric(table) -> float:
    """Two-step ML polychoric correlation of a two-way contingency table."""
    T = np.asarray(table, dtype=float)
    if T.ndim != 2 or np.any(T < 0):
        raise DiagnosticError("expected a two-way table of non-negative counts")
    rows = T.sum(axis=1) > 0
    cols = T.sum(axis=0) > 0
    if rows.sum() < 2 or cols.sum() < 2:
        raise DiagnosticError("polychoric needs at least two non-empty rows and columns")
    T = T[rows][:, cols]
    a1 = _normal_cuts(T.sum(axis=1))
    a2 = _normal_cuts(T.sum(axis=0))
    mask = T > 0

    def nll(r):
        P = bvn_rectangles(a1, a2, r)
        return -float(np.sum(T[mask] * np.log(np.maximum(P[mask], 1e-300))))

    res = optimize.minimize_scalar(nll, bounds=(-RHO_BOUND, RHO_BOUND), method="bounded",
                                   options={"xatol": 1e-8})
    r = float(res.x)
    # bounded search stops just inside the edge when the optimum is the bound
    for edge in (-RHO_BOUND, RHO_BOUND):
        if nll(edge) <= res.fun:
            r = edge
    return r


@dataclass(frozen=True)
class SemiCorrelation:
    rho: float
    n: int
    flagged: bool
    reason: str = ""

    def __float__(self):
        return float(self.rho)


def split_boundary(codes: np.ndarray, K: int, tail: str) -> int:
    """Category boundary whose normal-scale cutpoint is nearest 0.

    Returns k such that the upper half is {y >= k}. Only boundaries leaving at
    least two categories in the requested half are eligible when K >= 3. Ties
    are resolved to make the requested half larger, so reversing the
    categories swaps tails exactly.
    """
    counts = np.bincount(codes, minlength=K)[:K]
    cum = np.cumsum(counts)[:-1] / counts.sum()
    dist = np.abs(special.ndtri(np.clip(cum, 1e-300, 1 - 1e-16)))
    k = np.arange(1, K)
    if K >= 3:
        dist = np.where((K - k >= 2) if tail == "upper" else (k >= 2), dist, np.inf)
    ties = k[dist <= dist.min() + 1e-12]
    return int(ties.min() if tail == "upper" else ties.max())


def semi_polychoric(x, y, tail: str, kx: int | None = None, ky: int | None = None,
                    min_obs: int = MIN_QUADRANT) -> SemiCorrelation:
    """Polychoric correlation of respondents with both responses in the lower or upper half."""
    if tail not in ("lower", "upper"):
        raise ValueError("tail must be 'lower' or 'upper'")
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    kx = kx or int(x.max()) + 1
    ky = ky or int(y.max()) + 1
    bx = split_boundary(x, kx, tail)
    by = split_boundary(y, ky, tail)
    if tail == "upper":
        keep = (x >= bx) & (y >= by)
        xs, ys, kx2, ky2 = x[keep] - bx, y[keep] - by, kx - bx, ky - by
    else:
        keep = (x < bx) & (y < by)
        xs, ys, kx2, ky2 = x[keep], y[keep], bx, by
    n = int(keep.sum())
    if n < min_obs:
        return SemiCorrelation(float("nan"), n, True, f"only {n} observations in the quadrant")
    try:
        r = polychoric(contingency(xs, ys, kx2, ky2))
    except DiagnosticError as exc:
        return SemiCorrelation(float("nan"), n, True, str(exc))
    return SemiCorrelation(r, n, False)


def matched_copula(family: str, rho_n: float) -> CopulaSpec | None:
    """Copula of a family matched to a normal-scores correlation.

    Elliptical families take rho directly; the others go through Kendall's
    tau = 2 asin(rho) / pi. Returns None when the family cannot reach it.
    """
    fam = get_family(family)
    if fam.tag in ("bvn",) or fam.tag.startswith("t"):
        return CopulaSpec(fam.tag, float(rho_n))
    tau = 2.0 / math.pi * math.asin(rho_n)
    try:
        return CopulaSpec(fam.tag, fam.tau_to_param(tau))
    except ValueError:
        return None


@dataclass
class ScopeSummary:
    label: str
    n_pairs: int
    rho: float
    lower: float
    upper: float
    n_flagged: int
    theoretical: dict = field(default_factory=dict)


@dataclass
class DiagnosticsTable:
    """Average observed polychoric and semi-correlations per scope with theoretical rows."""

    scopes: list
    families: tuple

    def to_dict(self) -> dict:
        return {"families": list(self.families),
                "scopes": [{"scope": s.label, "pairs": s.n_pairs, "rho_N": s.rho, "rho_N_lower": s.lower,
                            "rho_N_upper": s.upper, "flagged_semicorrelations": s.n_flagged,
                            "theoretical": {f: {"lower": v[0], "upper": v[1]}
                                            for f, v in s.theoretical.items()}}
                           for s in self.scopes]}

    def render(self) -> str:
        def fmt(v):
            return "   -  " if v is None or not np.isfinite(v) else f"{v:6.2f}"

        head = f"{'':10s}" + "".join(f"| {s.label:^22s}" for s in self.scopes)
        sub = f"{'':10s}" + "".join(f"| {'rho':>6s} {'lower':>6s} {'upper':>6s} " for _ in self.scopes)
        lines = [head, sub, "-" * len(sub)]
        lines.append(f"{'observed':10s}" + "".join(
            f"| {fmt(s.rho)} {fmt(s.lower)} {fmt(s.upper)} " for s in self.scopes))
        for fam in self.families:
            lines.append(f"{fam:10s}" + "".join(
                f"| {fmt(s.rho)} {fmt(s.theoretical[fam][0])} {fmt(s.theoretical[fam][1])} "
                for s in self.scopes))
        return "\n".join(lines)


def pairwise(data) -> dict:
    """Polychoric and semi-polychoric correlations for every item pair."""
    Y = _codes(data)
    K = getattr(data, "n_categories", None) or tuple(int(k) for k in Y.max(axis=0) + 1)
    out = {}
    for j1, j2 in itertools.combinations(range(Y.shape[1]), 2):
        x, y = Y[:, j1], Y[:, j2]
        out[(j1, j2)] = (polychoric(contingency(x, y, K[j1], K[j2])),
                         semi_polychoric(x, y, "lower", K[j1], K[j2]),
                         semi_polychoric(x, y, "upper", K[j1], K[j2]))
    return out


def diagnostics_table(data, families: Sequence[str] = DEFAULT_FAMILIES) -> DiagnosticsTable:
    """Observed averages over all pairs and within each group, plus theoretical rows."""
    if not isinstance(data, OrdinalDataset):
        data = OrdinalDataset(np.asarray(data))
    fams = tuple(get_family(f).tag for f in families)
    pw = pairwise(data)
    group_of = np.repeat(np.arange(data.G), data.group_sizes)
    scopes = [("all pairs", list(pw))]
    for g, label in enumerate(data.group_labels):
        scopes.append((label, [p for p in pw if group_of[p[0]] == g and group_of[p[1]] == g]))
    out = []
    for label, pairs in scopes:
        if not pairs:
            continue
        rho = np.mean([pw[p][0] for p in pairs])
        lo = [pw[p][1].rho for p in pairs if not pw[p][1].flagged]
        up = [pw[p][2].rho for p in pairs if not pw[p][2].flagged]
        flagged = sum(pw[p][1].flagged + pw[p][2].flagged for p in pairs)
        theo = {}
        for fam in fams:
            spec = matched_copula(fam, float(rho))
            theo[fam] = theoretical_semicorrelations(spec) if spec is not None else (float("nan"),) * 2
        out.append(ScopeSummary(label, len(pairs), float(rho), float(np.mean(lo)) if lo else float("nan"),
                                float(np.mean(up)) if up else float("nan"), flagged, theo))
    return DiagnosticsTable(out, fams)
