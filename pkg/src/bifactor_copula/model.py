"""Joint pmf, margins and log-likelihood of bi-factor and second-order copula models.

Both structures reduce to the same double sum once per-item band tables
``f[j, y, q1, q2]`` are built on the quadrature grid: ``q1`` indexes the
common (or second-order) factor node and ``q2`` the group-factor node. For the
second-order model the group nodes are the dependent nodes obtained by
inverting the group-to-common link, so the same engine evaluates both.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import special

from . import _kernels
from . import copulas as cop
from .copulas import CopulaSpec, get_family
from .quadrature import QuadratureRule, gauss_legendre

BIFACTOR = "bifactor"
SECONDORDER = "secondorder"
STRUCTURES = (BIFACTOR, SECONDORDER)
PMF_FLOOR = 1e-300


class SmallGroupWarning(UserWarning):
    pass


def normalize_structure(structure: str) -> str:
    key = str(structure).strip().lower().replace("-", "").replace("_", "")
    if key in ("bifactor", "bi"):
        return BIFACTOR
    if key in ("secondorder", "second", "2ndorder"):
        return SECONDORDER
    raise ValueError(f"unknown structure {structure!r}")


@dataclass(frozen=True)
class GroupStructure:
    """Sizes of the non-overlapping item groups; items are ordered group by group."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"group sizes must be positive, got {self.sizes!r}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def G(self) -> int:
        return len(self.sizes)

    @property
    def d(self) -> int:
        return sum(self.sizes)

    @property
    def group_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.G), self.sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def members(self, g: int) -> range:
        off = self.offsets
        return range(int(off[g]), int(off[g + 1]))

    @property
    def has_small_groups(self) -> bool:
        return any(s <= 2 for s in self.sizes)


def equal_cutpoints(K: int) -> np.ndarray:
    """Cutpoints k/K for K equally weighted categories."""
    return np.arange(1, K) / K


def _check_cutpoints(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise ValueError("each item needs at least one interior cutpoint")
    if np.any(a <= 0) or np.any(a >= 1) or np.any(np.diff(a) <= 0):
        raise ValueError(f"cutpoints must be strictly increasing in (0, 1): {a}")
    return a


@dataclass(frozen=True)
class ModelSpec:
    """A fully parameterised bi-factor or second-order copula model.

    ``common_links[j]`` links item j to the common factor (bi-factor) or to its
    group factor (second-order). ``group_links`` holds one copula per item for
    the bi-factor model (item to group factor given the common factor) and one
    per group for the second-order model (group factor to second-order factor).
    ``frozen`` marks bi-factor group links excluded from estimation.
    """

    structure: str
    groups: GroupStructure
    cutpoints: tuple
    common_links: tuple
    group_links: tuple
    frozen: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "structure", normalize_structure(self.structure))
        if not isinstance(self.groups, GroupStructure):
            object.__setattr__(self, "groups", GroupStructure(tuple(self.groups)))
        d, G = self.groups.d, self.groups.G
        cps = tuple(_check_cutpoints(a) for a in self.cutpoints)
        if len(cps) != d:
            raise ValueError(f"expected {d} cutpoint vectors, got {len(cps)}")
        object.__setattr__(self, "cutpoints", cps)
        common = tuple(self.common_links)
        grp = tuple(self.group_links)
        if len(common) != d:
            raise ValueError(f"expected {d} common links, got {len(common)}")
        n_grp = d if self.structure == BIFACTOR else G
        if len(grp) != n_grp:
            raise ValueError(f"expected {n_grp} group links, got {len(grp)}")
        object.__setattr__(self, "common_links", common)
        object.__setattr__(self, "group_links", grp)
        frozen = tuple(bool(f) for f in self.frozen) if self.frozen else (False,) * n_grp
        if len(frozen) != n_grp:
            raise ValueError("frozen flags must match the group links")
        object.__setattr__(self, "frozen", frozen)

    @property
    def d(self) -> int:
        return self.groups.d

    @property
    def G(self) -> int:
        return self.groups.G

    @property
    def n_categories(self) -> np.ndarray:
        return np.array([len(a) + 1 for a in self.cutpoints])

    def factor_families(self) -> tuple[str, ...]:
        """Family per factor slot: X0 first, then one per group."""
        if self.structure == BIFACTOR:
            x0 = self.common_links[0].family
            per_group = []
            for g in range(self.G):
                fams = [self.group_links[j].family for j in self.groups.members(g)
                        if not (self.frozen[j] and self.groups.sizes[g] == 1)]
                per_group.append(fams[0] if fams else "indep")
            return (x0, *per_group)
        x0 = self.group_links[0].family
        return (x0, *(self.common_links[self.groups.members(g)[0]].family for g in range(self.G)))

    # free copula parameters ------------------------------------------------------
    def free_index(self) -> list[tuple[str, int]]:
        """Ordered free copula parameters: all ``("theta", j)`` then ``("delta", i)``."""
        idx = [("theta", j) for j, c in enumerate(self.common_links) if c.fam.n_params]
        idx += [("delta", i) for i, c in enumerate(self.group_links)
                if c.fam.n_params and not self.frozen[i]]
        return idx

    @property
    def n_free(self) -> int:
        return len(self.free_index())

    def free_values(self) -> np.ndarray:
        return np.array([self._link(kind, i).theta for kind, i in self.free_index()])

    def _link(self, kind: str, i: int) -> CopulaSpec:
        return self.common_links[i] if kind == "theta" else self.group_links[i]

    def with_free_values(self, values: Sequence[float]) -> "ModelSpec":
        common = list(self.common_links)
        grp = list(self.group_links)
        for (kind, i), val in zip(self.free_index(), values, strict=True):
            target = common if kind == "theta" else grp
            target[i] = CopulaSpec(target[i].family, float(val))
        return replace(self, common_links=tuple(common), group_links=tuple(grp))

    def with_cutpoints(self, cutpoints) -> "ModelSpec":
        return replace(self, cutpoints=tuple(cutpoints))


def build_spec(structure: str, group_sizes: Sequence[int], cutpoints, families: Sequence[str],
               common_taus=None, group_taus=None, common_params=None, group_params=None) -> ModelSpec:
    """Assemble a ModelSpec from one family per factor slot.

    ``families[0]`` is the family of the links to X0 (bi-factor: item links;
    second-order: group-factor links) and ``families[g + 1]`` the family of the
    links into group factor g. Parameters are given either on Kendall's tau
    scale or natively, per link; scalars broadcast. Unspecified links start at
    tau = 0.3. Bi-factor groups of size one drop their group link and groups of
    size two freeze the first group link at the tau = 0.95 cap.
    """
    structure = normalize_structure(structure)
    groups = GroupStructure(tuple(group_sizes))
    d, G = groups.d, groups.G
    families = tuple(get_family(f).tag for f in families)
    if len(families) != G + 1:
        raise ValueError(f"need {G + 1} families (X0 plus one per group), got {len(families)}")
    if isinstance(cutpoints, int):
        cutpoints = [equal_cutpoints(cutpoints)] * d
    cutpoints = list(cutpoints)
    if groups.has_small_groups and structure == BIFACTOR:
        warnings.warn("groups of size <= 2 are weakly identified; group links adjusted",
                      SmallGroupWarning, stacklevel=2)
    gof = groups.group_of

    def expand(val, n):
        if val is None:
            return None
        arr = np.broadcast_to(np.asarray(val, dtype=float), (n,))
        return [float(x) for x in arr]

    def make(fam, tau, par):
        f = get_family(fam)
        if f.n_params == 0:
            return CopulaSpec(f.tag, 0.0)
        if par is not None:
            return CopulaSpec(f.tag, par)
        t = 0.3 if tau is None else tau
        return CopulaSpec.from_tau(f.tag, t)

    if structure == BIFACTOR:
        ct, cp = expand(common_taus, d), expand(common_params, d)
        gt, gp = expand(group_taus, d), expand(group_params, d)
        common = [make(families[0], ct and ct[j], cp and cp[j]) for j in range(d)]
        grp, frozen = [], []
        for j in range(d):
            g = gof[j]
            fam = families[g + 1]
            size = groups.sizes[g]
            first = j == groups.members(g)[0]
            if size == 1:
                grp.append(CopulaSpec("indep", 0.0))
                frozen.append(True)
            elif size == 2 and first and get_family(fam).n_params:
                grp.append(CopulaSpec(fam, cop.upper_cap(fam)))
                frozen.append(True)
            else:
                grp.append(make(fam, gt and gt[j], gp and gp[j]))
                frozen.append(False)
    else:
        ct, cp = expand(common_taus, d), expand(common_params, d)
        gt, gp = expand(group_taus, G), expand(group_params, G)
        common = [make(families[gof[j] + 1], ct and ct[j], cp and cp[j]) for j in range(d)]
        grp = [make(families[0], gt and gt[g], gp and gp[g]) for g in range(G)]
        frozen = [False] * G
    return ModelSpec(structure, groups, tuple(cutpoints), tuple(common), tuple(grp), tuple(frozen))


# ---------------------------------------------------------------------------
# quadrature tables
# ---------------------------------------------------------------------------


@dataclass
class Tables:
    """Per-item band tables on the (common node, group node) grid.

    ``f[j, y]`` is the conditional probability of category y; rows beyond an
    item's category count are zero. Derivative tables are filled only when
    requested: ``dtheta``/``ddelta`` per item, ``dcut[j, k]`` the derivative of
    the conditional cdf at cutpoint k (uniform scale), and for the second-order
    model ``dfdx`` with the node sensitivities ``dnode[g]``.
    """

    rule: QuadratureRule
    f: np.ndarray
    dtheta: np.ndarray | None = None
    ddelta: np.ndarray | None = None
    dcut: np.ndarray | None = None
    dfdx: np.ndarray | None = None
    dnode: np.ndarray | None = None
    nodes: np.ndarray | None = None


def _pad_cut(a: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], a, [1.0]])


def build_tables(spec: ModelSpec, rule: QuadratureRule | None = None, derivatives: bool = False,
                 cut_derivatives: bool = False) -> Tables:
    rule = rule or gauss_legendre()
    x = rule.nodes
    nq = len(x)
    d = spec.d
    Kmax = int(spec.n_categories.max())
    f = np.zeros((d, Kmax, nq, nq))
    dth = np.zeros_like(f) if derivatives else None
    dde = np.zeros_like(f) if derivatives and spec.structure == BIFACTOR else None
    dcut = np.zeros((d, Kmax + 1, nq, nq)) if cut_derivatives else None
    dfdx = np.zeros_like(f) if derivatives and spec.structure == SECONDORDER else None
    dnode = None
    nodes = None
    gof = spec.groups.group_of

    if spec.structure == BIFACTOR:
        x0 = x[:, None, None]  # (q1, 1, 1) after the cutpoint axis
        xg = x[None, None, :]
        for j in range(d):
            a = _pad_cut(spec.cutpoints[j])
            K = len(a) - 1
            th, de = spec.common_links[j], spec.group_links[j]
            ai = a[1:-1][:, None]
            U = np.empty((K + 1, nq))
            U[0], U[K] = 0.0, 1.0
            U[1:K] = th.fam.ccdf(th.theta, ai, x[None, :])
            Ui = U[1:K][:, :, None]
            H = np.empty((K + 1, nq, nq))
            H[0], H[K] = 0.0, 1.0
            H[1:K] = de.fam.ccdf(de.theta, Ui, xg[0])
            f[j, :K] = np.diff(H, axis=0)
            if derivatives or cut_derivatives:
                c_de = de.fam.pdf(de.theta, xg[0], Ui)
            if derivatives:
                dU = th.fam.ccdf_dtheta(th.theta, ai, x[None, :])[:, :, None]
                dH = np.zeros((K + 1, nq, nq))
                dH[1:K] = c_de * dU
                dth[j, :K] = np.diff(dH, axis=0)
                dH[1:K] = de.fam.ccdf_dtheta(de.theta, Ui, xg[0])
                dde[j, :K] = np.diff(dH, axis=0)
            if cut_derivatives:
                c_th = th.fam.pdf(th.theta, x[None, :], ai)[:, :, None]
                dcut[j, 1:K] = c_de * c_th
    else:
        G = spec.G
        nodes = np.empty((G, nq, nq))
        if derivatives:
            dnode = np.empty((G, nq, nq))
        for g in range(G):
            de = spec.group_links[g]
            X = de.fam.inv_ccdf(de.theta, x[None, :], x[:, None])
            nodes[g] = X
            if derivatives:
                dnode[g] = -de.fam.ccdf_dtheta(de.theta, X, x[:, None]) / de.fam.pdf(de.theta, x[:, None], X)
        for j in range(d):
            a = _pad_cut(spec.cutpoints[j])
            K = len(a) - 1
            th = spec.common_links[j]
            X = nodes[gof[j]][None]
            ai = a[1:-1][:, None, None]
            H = np.empty((K + 1, nq, nq))
            H[0], H[K] = 0.0, 1.0
            H[1:K] = th.fam.ccdf(th.theta, ai, X)
            f[j, :K] = np.diff(H, axis=0)
            if derivatives:
                dH = np.zeros((K + 1, nq, nq))
                dH[1:K] = th.fam.ccdf_dtheta(th.theta, ai, X)
                dth[j, :K] = np.diff(dH, axis=0)
                dH[1:K] = th.fam.ccdf_du(th.theta, ai, X)
                dfdx[j, :K] = np.diff(dH, axis=0)
            if cut_derivatives:
                dcut[j, 1:K] = th.fam.pdf(th.theta, X, ai)
    f = np.clip(f, 0.0, 1.0)
    return Tables(rule, f, dth, dde, dcut, dfdx, dnode, nodes)


# ---------------------------------------------------------------------------
# pmf / log-likelihood engine
# ---------------------------------------------------------------------------


def _check_rows(spec: ModelSpec, Y) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.shape[1] != spec.d:
        raise ValueError(f"data has {Y.shape[1]} items, model has {spec.d}")
    if not np.issubdtype(Y.dtype, np.integer):
        if not np.all(np.equal(np.mod(Y, 1), 0)):
            raise ValueError("ordinal codes must be integers")
        Y = Y.astype(int)
    K = spec.n_categories
    if np.any(Y < 0) or np.any(Y >= K[None, :]):
        raise ValueError("category code outside 0..K-1 for the model's cutpoints")
    return Y


def _group_pass(tab: Tables, spec: ModelSpec, Y: np.ndarray):
    """Per group: gathered tables (n, m, nq, nq) and integrated factor (n, nq)."""
    w2 = tab.rule.weights
    out = []
    for g in range(spec.G):
        idx = np.fromiter(spec.groups.members(g), dtype=int)
        F = tab.f[idx[None, :], Y[:, idx]]
        P = np.prod(F, axis=1)
        out.append((idx, F, P @ w2))
    return out


def row_probabilities(spec: ModelSpec, Y, rule: QuadratureRule | None = None,
                      tables: Tables | None = None, chunk: int = 2000) -> np.ndarray:
    """Model probability of each response row."""
    Y = _check_rows(spec, Y)
    tab = tables or build_tables(spec, rule)
    w1 = tab.rule.weights
    if _kernels.HAVE_NUMBA:
        return _kernels.row_probabilities(tab.f, np.ascontiguousarray(Y, dtype=np.int64),
                                          spec.groups.offsets.astype(np.int64), w1)
    res = np.empty(len(Y))
    for s in range(0, len(Y), chunk):
        Yc = Y[s:s + chunk]
        prod = np.ones((len(Yc), len(w1)))
        for _, _, I in _group_pass(tab, spec, Yc):
            prod *= I
        res[s:s + chunk] = prod @ w1
    return res


def pmf(spec: ModelSpec, y, rule: QuadratureRule | None = None) -> float:
    """Joint probability of a single response vector."""
    return float(row_probabilities(spec, np.asarray(y)[None, :], rule)[0])


def item_band_bifactor(spec: ModelSpec, j: int, y: int, x_g: float, x_0: float) -> float:
    """Conditional probability of category ``y`` for item ``j`` given both factors."""
    if spec.structure != BIFACTOR:
        raise ValueError("item_band_bifactor needs a bi-factor spec")
    a = _pad_cut(spec.cutpoints[j])
    if not 0 <= y < len(a) - 1:
        raise ValueError(f"category {y} out of range for item {j}")
    th, de = spec.common_links[j], spec.group_links[j]

    def H(k):
        if k == 0:
            return 0.0
        if k == len(a) - 1:
            return 1.0
        u = th.fam.ccdf(th.theta, a[k], x_0)
        return float(de.fam.ccdf(de.theta, u, x_g))

    return H(y + 1) - H(y)


def _compress(Y: np.ndarray):
    uniq, inv, counts = np.unique(Y, axis=0, return_inverse=True, return_counts=True)
    return uniq, np.asarray(inv).ravel(), counts


def row_loglik(spec: ModelSpec, Y, rule: QuadratureRule | None = None) -> np.ndarray:
    """Per-row log-likelihood contributions (pmf floored at 1e-300)."""
    Y = _check_rows(spec, Y)
    uniq, inv, _ = _compress(Y)
    p = row_probabilities(spec, uniq, rule)
    return np.log(np.maximum(p, PMF_FLOOR))[inv]


def loglik(spec: ModelSpec, data, rule: QuadratureRule | None = None) -> float:
    """Joint log-likelihood: sum over rows of log pmf."""
    Y = _codes(data)
    Y = _check_rows(spec, Y)
    uniq, _, counts = _compress(Y)
    p = row_probabilities(spec, uniq, rule)
    return float(np.dot(counts, np.log(np.maximum(p, PMF_FLOOR))))


def _codes(data) -> np.ndarray:
    return np.asarray(getattr(data, "codes", data))


def _loo_products(F: np.ndarray) -> np.ndarray:
    """Leave-one-out products along axis 1."""
    m = F.shape[1]
    out = np.empty_like(F)
    if m == 1:
        out[:] = 1.0
        return out
    # prefix products into out, then multiply by running suffix
    out[:, 0] = 1.0
    out[:, 1] = F[:, 0]
    for k in range(2, m):
        np.multiply(out[:, k - 1], F[:, k - 1], out=out[:, k])
    suf = F[:, m - 1].copy()
    for k in range(m - 2, -1, -1):
        out[:, k] *= suf
        if k:
            suf *= F[:, k]
    return out


def loglik_and_grad(spec: ModelSpec, data, rule: QuadratureRule | None = None) -> tuple[float, np.ndarray]:
    """Log-likelihood and its gradient with respect to the free copula parameters."""
    if not _kernels.HAVE_NUMBA:
        return _loglik_and_grad_numpy(spec, data, rule)
    Y = _check_rows(spec, _codes(data))
    uniq, _, counts = _compress(Y)
    tab = build_tables(spec, rule, derivatives=True)
    bif = spec.structure == BIFACTOR
    dde = tab.ddelta if bif else tab.dfdx
    dnode = np.zeros((1, 1, 1)) if bif else tab.dnode
    ll, g_theta, g_delta = _kernels.loglik_grad_rows(
        tab.f, tab.dtheta, dde, dnode, np.ascontiguousarray(uniq, dtype=np.int64),
        counts.astype(float), spec.groups.offsets.astype(np.int64), tab.rule.weights, bif)
    grad = np.array([g_theta[i] if kind == "theta" else g_delta[i] for kind, i in spec.free_index()])
    return float(ll), grad


def _loglik_and_grad_numpy(spec: ModelSpec, data, rule: QuadratureRule | None = None,
                           chunk: int = 1000) -> tuple[float, np.ndarray]:
    Y = _check_rows(spec, _codes(data))
    uniq, _, counts = _compress(Y)
    tab = build_tables(spec, rule, derivatives=True)
    free = spec.free_index()
    d, G = spec.d, spec.G
    w = tab.rule.weights
    # full-length gradients; free entries are picked out at the end
    g_theta = np.zeros(d)
    g_delta = np.zeros(d if spec.structure == BIFACTOR else G)
    ll = 0.0
    for s in range(0, len(uniq), chunk):
        Yc = uniq[s:s + chunk]
        cnt = counts[s:s + chunk]
        passes = _group_pass(tab, spec, Yc)
        I = np.stack([p[2] for p in passes], axis=1)  # (n, G, nq)
        others = _loo_products(I)
        p = np.prod(I, axis=1) @ w
        p_safe = np.maximum(p, PMF_FLOOR)
        ll += float(np.dot(cnt, np.log(p_safe)))
        scale = cnt / p_safe
        for g, (idx, F, _) in enumerate(passes):
            Lw = _loo_products(F)
            Lw *= w
            og = others[:, g, :] * (w * scale[:, None])  # (n, nq)
            yg = Yc[:, idx]
            Dt = tab.dtheta[idx[None, :], yg]
            g_theta[idx] += np.einsum("nq,nmq->m", og, np.einsum("nmqr,nmqr->nmq", Lw, Dt))
            if spec.structure == BIFACTOR:
                Dd = tab.ddelta[idx[None, :], yg]
                g_delta[idx] += np.einsum("nq,nmq->m", og, np.einsum("nmqr,nmqr->nmq", Lw, Dd))
            else:
                Dx = tab.dfdx[idx[None, :], yg]
                S = np.einsum("nmqr,nmqr->nqr", Lw, Dx)
                g_delta[g] += float(np.einsum("nq,nqr,qr->", og, S, tab.dnode[g]))
    grad = np.array([g_theta[i] if kind == "theta" else g_delta[i] for kind, i in free])
    return ll, grad


# ---------------------------------------------------------------------------
# low-dimensional margins
# ---------------------------------------------------------------------------


def bank_margins(bank: np.ndarray, ids: np.ndarray, grp: np.ndarray, rule: QuadratureRule,
                 chunk: int = 2048) -> np.ndarray:
    """Integrate products of bank tables, one cell per row of ``ids``.

    ``bank`` is (B, nq, nq); ``ids`` and ``grp`` are (c, m) with slots sorted by
    group id within each cell. Padding slots must point at an all-ones table
    and repeat the previous slot's group.
    """
    w = rule.weights
    ids = np.asarray(ids)
    grp = np.asarray(grp)
    c, m = ids.shape
    out = np.empty(c)
    for s in range(0, c, chunk):
        sl = slice(s, s + chunk)
        ic, gc = ids[sl], grp[sl]
        acc = bank[ic[:, 0]].copy()
        total = np.ones((len(ic), len(w)))
        for k in range(1, m):
            new = gc[:, k] != gc[:, k - 1]
            T = bank[ic[:, k]]
            if new.any():
                contracted = acc[new] @ w
                total[new] *= contracted
                acc[new] = T[new]
            same = ~new
            if same.any():
                acc[same] *= T[same]
        total *= acc @ w
        out[sl] = total @ w
    return out


class MarginEvaluator:
    """Evaluates up to 4-dimensional margins from cached band tables."""

    def __init__(self, spec: ModelSpec, rule: QuadratureRule | None = None, tables: Tables | None = None):
        self.spec = spec
        self.rule = rule or gauss_legendre()
        self.tables = tables or build_tables(spec, self.rule)
        d, Kmax = self.tables.f.shape[:2]
        nq = self.rule.nq
        self.Kmax = Kmax
        self.bank = np.concatenate([self.tables.f.reshape(d * Kmax, nq, nq), np.ones((1, nq, nq))])
        self.ones_id = d * Kmax
        self.group_of = spec.groups.group_of

    def cell_ids(self, items: np.ndarray, cats: np.ndarray):
        """Bank ids and group ids for cells given as (c, m) item/category arrays (-1 pads)."""
        items = np.asarray(items)
        cats = np.asarray(cats)
        pad = items < 0
        g = np.where(pad, np.iinfo(np.int64).max, self.group_of[np.where(pad, 0, items)])
        order = np.argsort(g * (self.spec.d + 1) + np.where(pad, self.spec.d, items), axis=1, kind="stable")
        items = np.take_along_axis(items, order, axis=1)
        cats = np.take_along_axis(cats, order, axis=1)
        g = np.take_along_axis(g, order, axis=1)
        pad = items < 0
        ids = np.where(pad, self.ones_id, np.where(pad, 0, items) * self.Kmax + cats)
        # padding inherits the previous slot's group so it never opens a new factor
        for k in range(1, g.shape[1]):
            g[:, k] = np.where(pad[:, k], g[:, k - 1], g[:, k])
        return ids, g, order

    def probabilities(self, items, cats) -> np.ndarray:
        items = np.atleast_2d(np.asarray(items))
        cats = np.atleast_2d(np.asarray(cats))
        ids, g, _ = self.cell_ids(items, cats)
        return bank_margins(self.bank, ids, g, self.rule)


def margin(spec: ModelSpec, items: Sequence[int], categories: Sequence[int],
           rule: QuadratureRule | None = None) -> float:
    """Joint probability of categories for 1 to 4 distinct items."""
    items = [int(i) for i in items]
    cats = [int(y) for y in categories]
    if not 1 <= len(items) <= 4:
        raise ValueError("margins are defined for 1 to 4 items")
    if len(set(items)) != len(items):
        raise ValueError(f"duplicate items in margin: {items}")
    if len(cats) != len(items):
        raise ValueError("one category per item required")
    K = spec.n_categories
    for i, y in zip(items, cats):
        if not 0 <= i < spec.d:
            raise ValueError(f"item {i} out of range")
        if not 0 <= y < K[i]:
            raise ValueError(f"category {y} out of range for item {i}")
    ev = MarginEvaluator(spec, rule)
    return float(ev.probabilities(np.array([items]), np.array([cats]))[0])


def univariate_probabilities(spec: ModelSpec) -> list[np.ndarray]:
    """Exact category probabilities a_{y+1} - a_y of each item."""
    return [np.diff(_pad_cut(a)) for a in spec.cutpoints]


def normal_cutpoints(spec: ModelSpec) -> list[np.ndarray]:
    return [special.ndtri(a) for a in spec.cutpoints]
