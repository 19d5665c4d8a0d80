"""Limited-information M2 goodness of fit and bivariate discrepancy summaries.

Margins are stacked univariate then bivariate, excluding category 0, with
item pairs in lexicographic order. Derivatives of the bivariate margins are
obtained by replacing one item's band table with its derivative table inside
the same quadrature sum, so every column is exact for the discretised model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats

from .model import (BIFACTOR, MarginEvaluator, ModelSpec, Tables, _check_rows, _codes, bank_margins,
                    build_tables, univariate_probabilities)
from .quadrature import QuadratureRule, gauss_legendre

EIG_RTOL = 1e-10


class DegreesOfFreedomError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# cell layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellLayout:
    """Stacked margin cells: (item1, cat1, item2, cat2) with -1 for univariate."""

    items: np.ndarray  # (s, 2)
    cats: np.ndarray  # (s, 2)
    n_uni: int

    @property
    def s(self) -> int:
        return len(self.items)


def cell_layout(K) -> CellLayout:
    K = [int(k) for k in K]
    items, cats = [], []
    for j, k in enumerate(K):
        for y in range(1, k):
            items.append((j, -1))
            cats.append((y, 0))
    n_uni = len(items)
    for j1, j2 in itertools.combinations(range(len(K)), 2):
        for y1 in range(1, K[j1]):
            for y2 in range(1, K[j2]):
                items.append((j1, j2))
                cats.append((y1, y2))
    return CellLayout(np.array(items, dtype=np.int64).reshape(-1, 2),
                      np.array(cats, dtype=np.int64).reshape(-1, 2), n_uni)


def expected_s(d: int, K: int) -> int:
    return d * (K - 1) + d * (d - 1) // 2 * (K - 1) ** 2


# ---------------------------------------------------------------------------
# pi2, p2
# ---------------------------------------------------------------------------


def _pi2(spec: ModelSpec, lay: CellLayout, ev: MarginEvaluator) -> np.ndarray:
    pi = np.empty(lay.s)
    uni = univariate_probabilities(spec)
    u = slice(0, lay.n_uni)
    pi[u] = [uni[j][y] for j, y in zip(lay.items[u, 0], lay.cats[u, 0])]
    b = slice(lay.n_uni, lay.s)
    if lay.s > lay.n_uni:
        pi[b] = ev.probabilities(lay.items[b], lay.cats[b])
    return pi


def sample_p2(Y: np.ndarray, lay: CellLayout) -> np.ndarray:
    n = len(Y)
    p = np.empty(lay.s)
    for k in range(lay.s):
        j1, j2 = lay.items[k]
        y1, y2 = lay.cats[k]
        hit = Y[:, j1] == y1
        if j2 >= 0:
            hit &= Y[:, j2] == y2
        p[k] = np.count_nonzero(hit) / n
    return p


def pi2_and_p2(spec: ModelSpec, data, rule: QuadratureRule | None = None):
    """Model and sample stacked margins, categories 1..K-1 only."""
    Y = _check_rows(spec, _codes(data))
    lay = cell_layout(spec.n_categories)
    ev = MarginEvaluator(spec, rule)
    return _pi2(spec, lay, ev), sample_p2(Y, lay)


# ---------------------------------------------------------------------------
# Delta2
# ---------------------------------------------------------------------------


def parameter_labels(spec: ModelSpec) -> list[tuple]:
    """Column labels of Delta2: cutpoints (normal scale), then theta, then delta."""
    cols = [("alpha", j, k) for j, a in enumerate(spec.cutpoints) for k in range(1, len(a) + 1)]
    return cols + [(kind, i) for kind, i in spec.free_index()]


def delta2(spec: ModelSpec, rule: QuadratureRule | None = None) -> np.ndarray:
    """s x q Jacobian of the stacked margins."""
    rule = rule or gauss_legendre()
    tab = build_tables(spec, rule, derivatives=True, cut_derivatives=True)
    lay = cell_layout(spec.n_categories)
    return _delta2(spec, tab, lay)


def _delta2(spec: ModelSpec, tab: Tables, lay: CellLayout) -> np.ndarray:
    d = spec.d
    Kmax = tab.f.shape[1]
    nq = tab.rule.nq
    labels = parameter_labels(spec)
    col = {lab: c for c, lab in enumerate(labels)}
    D = np.zeros((lay.s, len(labels)))
    alpha = [special.ndtri(a) for a in spec.cutpoints]
    phi = [np.exp(-0.5 * al ** 2) / np.sqrt(2 * np.pi) for al in alpha]

    # univariate rows: exact bands
    for r in range(lay.n_uni):
        j, y = lay.items[r, 0], lay.cats[r, 0]
        Kj = len(alpha[j]) + 1
        if y + 1 <= Kj - 1:
            D[r, col[("alpha", j, y + 1)]] += phi[j][y]
        if y >= 1:
            D[r, col[("alpha", j, y)]] -= phi[j][y - 1]
    if lay.s == lay.n_uni:
        return D

    # bank blocks
    blocks = [tab.f.reshape(d * Kmax, nq, nq)]
    base_f = 0
    off = d * Kmax
    dth_off = off
    blocks.append(tab.dtheta.reshape(d * Kmax, nq, nq))
    off += d * Kmax
    if spec.structure == BIFACTOR:
        dd_off = off
        blocks.append(tab.ddelta.reshape(d * Kmax, nq, nq))
    else:
        dd_off = off
        gof = spec.groups.group_of
        blocks.append((tab.dfdx * tab.dnode[gof][:, None]).reshape(d * Kmax, nq, nq))
    off += d * Kmax
    cut_off = off
    blocks.append(tab.dcut.reshape(d * (Kmax + 1), nq, nq))
    off += d * (Kmax + 1)
    blocks.append(np.ones((1, nq, nq)))
    bank = np.concatenate(blocks)

    group_of = spec.groups.group_of
    rows, cols, coef, ids = [], [], [], []
    brow = np.arange(lay.n_uni, lay.s)
    it = lay.items[brow]
    ct = lay.cats[brow]
    for slot in (0, 1):
        other = 1 - slot
        j = it[:, slot]
        y = ct[:, slot]
        jo = it[:, other]
        yo = ct[:, other]
        other_id = base_f + jo * Kmax + yo

        def add(mask, repl_id, colidx, c):
            rows.append(brow[mask])
            cols.append(colidx[mask] if np.ndim(colidx) else np.full(mask.sum(), colidx))
            coef.append(np.broadcast_to(c, mask.shape)[mask])
            pair = np.stack([repl_id, other_id], axis=1) if slot == 0 else np.stack([other_id, repl_id], axis=1)
            ids.append(pair[mask])

        for jj in range(d):
            sel = j == jj
            if not sel.any():
                continue
            if ("theta", jj) in col:
                add(sel, dth_off + j * Kmax + y, col[("theta", jj)], 1.0)
            if spec.structure == BIFACTOR and ("delta", jj) in col:
                add(sel, dd_off + j * Kmax + y, col[("delta", jj)], 1.0)
            if spec.structure != BIFACTOR and ("delta", int(group_of[jj])) in col:
                add(sel, dd_off + j * Kmax + y, col[("delta", int(group_of[jj]))], 1.0)
            Kj = len(alpha[jj]) + 1
            for k in range(1, Kj):
                up = sel & (y + 1 == k)
                if up.any():
                    add(up, cut_off + j * (Kmax + 1) + k, col[("alpha", jj, k)], phi[jj][k - 1])
                lo = sel & (y == k)
                if lo.any():
                    add(lo, cut_off + j * (Kmax + 1) + k, col[("alpha", jj, k)], -phi[jj][k - 1])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    coef = np.concatenate(coef)
    ids = np.concatenate(ids)
    # group ids follow the items of each term's cell
    term_items = lay.items[rows]
    g = group_of[term_items]
    order = np.argsort(g, axis=1, kind="stable")
    ids = np.take_along_axis(ids, order, axis=1)
    g = np.take_along_axis(g, order, axis=1)
    vals = bank_margins(bank, ids, g, tab.rule)
    np.add.at(D, (rows, cols), coef * vals)
    return D


# ---------------------------------------------------------------------------
# Xi2
# ---------------------------------------------------------------------------


def xi2(spec: ModelSpec, rule: QuadratureRule | None = None, chunk: int = 200_000) -> np.ndarray:
    """Covariance matrix of the stacked margin indicators (per observation)."""
    rule = rule or gauss_legendre()
    ev = MarginEvaluator(spec, rule)
    lay = cell_layout(spec.n_categories)
    return _xi2(spec, lay, ev, chunk)


def _xi2(spec: ModelSpec, lay: CellLayout, ev: MarginEvaluator, chunk: int) -> np.ndarray:
    # every entry, including the cell means, comes from the same quadrature
    # mixture, so the result is an exact covariance matrix
    s = lay.s
    pi = ev.probabilities(lay.items, np.where(lay.items < 0, 0, lay.cats))
    ia, ib = np.triu_indices(s)
    joint = np.empty(len(ia))
    for start in range(0, len(ia), chunk):
        a = ia[start:start + chunk]
        b = ib[start:start + chunk]
        items = np.concatenate([lay.items[a], lay.items[b]], axis=1)
        cats = np.concatenate([lay.cats[a], lay.cats[b]], axis=1)
        zero = np.zeros(len(a), dtype=bool)
        # second cell's slots that repeat an item of the first cell
        for k in (2, 3):
            for m in (0, 1):
                same = (items[:, k] >= 0) & (items[:, k] == items[:, m])
                zero |= same & (cats[:, k] != cats[:, m])
                items[:, k] = np.where(same, -1, items[:, k])
        cats = np.where(items < 0, 0, cats)
        p = ev.probabilities(items, cats)
        p[zero] = 0.0
        joint[start:start + chunk] = p
    X = np.empty((s, s))
    X[ia, ib] = joint
    X[ib, ia] = joint
    X -= np.outer(pi, pi)
    return X


# ---------------------------------------------------------------------------
# M2
# ---------------------------------------------------------------------------


@dataclass
class M2Result:
    m2: float
    df: int
    p_value: float
    s: int
    q: int
    n: int
    dropped: int = 0
    note: str = ""
    max_discrepancies: "DiscrepancyTable | None" = None

    def to_dict(self) -> dict:
        out = {"m2": self.m2, "df": self.df, "p_value": self.p_value, "s": self.s, "q": self.q,
               "n": self.n, "dropped_eigenvalues": self.dropped, "note": self.note}
        if self.max_discrepancies is not None:
            out["discrepancies"] = self.max_discrepancies.to_dict()
        return out


def orthogonal_complement(D: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of the column space of D (full QR)."""
    s, q = D.shape
    Q, R = linalg.qr(D, mode="full")
    diag = np.abs(np.diag(R)) if q else np.zeros(0)
    rank = int(np.sum(diag > 1e-10 * max(1.0, diag.max() if q else 1.0)))
    if rank < q:
        raise DegreesOfFreedomError(
            f"Delta2 has rank {rank} < {q} parameters; degrees of freedom would need adjustment "
            f"(smallest |R_kk| = {diag.min():.3g})")
    return Q[:, q:]


def c2_complement(D: np.ndarray, Xi: np.ndarray) -> tuple[np.ndarray, int]:
    """Weight matrix via the orthogonal complement; returns (C2, dropped eigenvalues)."""
    Dc = orthogonal_complement(D)
    W = Dc.T @ Xi @ Dc
    W = 0.5 * (W + W.T)
    lam, V = linalg.eigh(W)
    keep = lam > EIG_RTOL * lam.max()
    Winv = (V[:, keep] / lam[keep]) @ V[:, keep].T
    return Dc @ Winv @ Dc.T, int((~keep).sum())


def c2_inverse(D: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """Weight matrix via the inverse of Xi2 (oracle for the complement form)."""
    Xinv = linalg.inv(Xi)
    XD = Xinv @ D
    return Xinv - XD @ linalg.solve(D.T @ XD, XD.T)


def m2(spec: ModelSpec, data, rule: QuadratureRule | None = None, discrepancy: bool = True) -> M2Result:
    """M2 statistic of a fitted model with cutpoints counted as estimated parameters."""
    rule = rule or gauss_legendre()
    Y = _check_rows(spec, _codes(data))
    n = len(Y)
    lay = cell_layout(spec.n_categories)
    tab = build_tables(spec, rule, derivatives=True, cut_derivatives=True)
    ev = MarginEvaluator(spec, rule, tables=tab)
    pi = _pi2(spec, lay, ev)
    p = sample_p2(Y, lay)
    D = _delta2(spec, tab, lay)
    Xi = _xi2(spec, lay, ev, 200_000)
    s, q = D.shape
    if s <= q:
        raise DegreesOfFreedomError(f"s = {s} margins do not exceed q = {q} parameters")
    C2, dropped = c2_complement(D, Xi)
    e = p - pi
    stat = max(float(n * e @ C2 @ e), 0.0)
    df = s - q - dropped
    note = f"{dropped} near-zero eigenvalue(s) dropped; df reduced accordingly" if dropped else ""
    res = M2Result(stat, df, float(stats.chi2.sf(stat, df)), s, q, n, dropped, note)
    if discrepancy:
        res.max_discrepancies = discrepancies(spec, Y, rule, evaluator=ev)
    return res


# ---------------------------------------------------------------------------
# discrepancies
# ---------------------------------------------------------------------------


@dataclass
class DiscrepancyTable:
    """n * max |p - pi| per item pair over all K1 x K2 cells, with averages."""

    pairs: list
    values: np.ndarray
    within_group: dict
    all_pairs: float

    def to_dict(self) -> dict:
        return {"pairs": [[int(a), int(b), float(v)] for (a, b), v in zip(self.pairs, self.values)],
                "within_group": {str(k): float(v) for k, v in self.within_group.items()},
                "all_pairs": float(self.all_pairs)}


def discrepancies(spec: ModelSpec, data, rule: QuadratureRule | None = None,
                  evaluator: MarginEvaluator | None = None, group_labels=None) -> DiscrepancyTable:
    Y = _check_rows(spec, _codes(data))
    n = len(Y)
    ev = evaluator or MarginEvaluator(spec, rule)
    K = spec.n_categories
    pairs = list(itertools.combinations(range(spec.d), 2))
    items, cats, owner = [], [], []
    for k, (j1, j2) in enumerate(pairs):
        for y1 in range(K[j1]):
            for y2 in range(K[j2]):
                items.append((j1, j2))
                cats.append((y1, y2))
                owner.append(k)
    items = np.array(items)
    cats = np.array(cats)
    owner = np.array(owner)
    pi = ev.probabilities(items, cats)
    # sample frequencies via joint codes per pair
    obs = np.empty(len(items))
    pos = 0
    for j1, j2 in pairs:
        k1, k2 = K[j1], K[j2]
        counts = np.bincount(Y[:, j1] * k2 + Y[:, j2], minlength=k1 * k2)
        obs[pos:pos + k1 * k2] = counts / n
        pos += k1 * k2
    dev = np.zeros(len(pairs))
    np.maximum.at(dev, owner, np.abs(obs - pi))
    dev *= n
    group_of = spec.groups.group_of
    labels = list(group_labels) if group_labels else [f"g{g + 1}" for g in range(spec.G)]
    within = {}
    for g in range(spec.G):
        sel = [k for k, (a, b) in enumerate(pairs) if group_of[a] == g and group_of[b] == g]
        within[labels[g]] = float(dev[sel].mean()) if sel else float("nan")
    return DiscrepancyTable(pairs, dev, within, float(dev.mean()) if len(dev) else 0.0)
