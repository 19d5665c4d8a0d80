"""Two-step IFM estimation: cutpoints from proportions, then copula parameters by BFGS."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .copulas import NumericalFailure, get_family
from .data import OrdinalDataset
from .model import (ModelSpec, build_spec, loglik, loglik_and_grad, _codes)
from .quadrature import QuadratureRule, gauss_legendre


class DegenerateItemError(ValueError):
    pass


class InvalidStartError(ValueError):
    pass


def _as_dataset(data, group_sizes=None) -> OrdinalDataset:
    if isinstance(data, OrdinalDataset):
        if group_sizes is not None and tuple(group_sizes) != data.group_sizes:
            return OrdinalDataset(data.codes, data.item_names, data.n_categories, (), tuple(group_sizes))
        return data
    return OrdinalDataset(np.asarray(data), group_sizes=tuple(group_sizes) if group_sizes else ())


def estimate_cutpoints(data, n_categories: Sequence[int] | None = None) -> list[np.ndarray]:
    """Cumulative sample proportions per item.

    Empty categories get proportion 1/(2n) before renormalising, which keeps
    the cutpoints strictly increasing without dropping categories.
    """
    if isinstance(data, OrdinalDataset):
        n_categories = n_categories or data.n_categories
    Y = _codes(data)
    n, d = Y.shape
    K = n_categories or tuple(int(k) for k in Y.max(axis=0) + 1)
    eps = 1.0 / (2 * n)
    cuts = []
    for j in range(d):
        counts = np.bincount(Y[:, j], minlength=K[j])[:K[j]].astype(float)
        if np.count_nonzero(counts) < 2:
            raise DegenerateItemError(f"item {j} has a single observed category")
        p = counts / n
        if np.any(p == 0):
            p = np.where(p == 0, eps, p)
            p /= p.sum()
        cuts.append(np.cumsum(p)[:-1])
    return cuts


# ---------------------------------------------------------------------------
# reparameterisation
# ---------------------------------------------------------------------------


def _links(spec: ModelSpec):
    return [spec.common_links[i] if kind == "theta" else spec.group_links[i]
            for kind, i in spec.free_index()]


def to_unconstrained(spec: ModelSpec) -> np.ndarray:
    return np.array([c.fam.to_unconstrained(c.theta) for c in _links(spec)])


def from_unconstrained(spec: ModelSpec, z: np.ndarray) -> np.ndarray:
    return np.array([c.fam.from_unconstrained(zi) for c, zi in zip(_links(spec), z)])


def _dparam_dz(spec: ModelSpec, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.empty(len(z))
    for k, (c, zi) in enumerate(zip(_links(spec), z)):
        out[k] = (c.fam.from_unconstrained(zi + h) - c.fam.from_unconstrained(zi - h)) / (2 * h)
    return out


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    history: list = field(default_factory=list)


def bfgs(fun_grad, x0: np.ndarray, max_iter: int = 500, gtol: float = 1e-5, ftol: float = 1e-9,
         max_backtrack: int = 40) -> BFGSResult:
    """Minimise with BFGS and Armijo backtracking; accepted iterates never increase f."""
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise InvalidStartError("objective or gradient is not finite at the starting point")
    history = [f]
    m = len(x)
    H = np.eye(m)
    scaled = False
    if m == 0 or np.max(np.abs(g)) < gtol:
        return BFGSResult(x, f, g, 0, True, "gradient below tolerance", history)
    for it in range(1, max_iter + 1):
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            H = np.eye(m)
            p = -g
            slope = float(g @ p)
        # cap step length on the unconstrained scale
        pmax = np.max(np.abs(p))
        if pmax > 2.0:
            p *= 2.0 / pmax
            slope = float(g @ p)
        t = 1.0
        for _ in range(max_backtrack):
            x_new = x + t * p
            f_new, g_new = fun_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope and np.all(np.isfinite(g_new)):
                break
            t *= 0.5
        else:
            return BFGSResult(x, f, g, it, bool(np.max(np.abs(g)) < gtol), "line search failed", history)
        s = x_new - x
        y = g_new - g
        rel = abs(f - f_new) / max(1.0, abs(f))
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if np.max(np.abs(g)) < gtol:
            return BFGSResult(x, f, g, it, True, "gradient below tolerance", history)
        if rel < ftol:
            return BFGSResult(x, f, g, it, True, "relative objective change below tolerance", history)
        sy = float(s @ y)
        if sy > 1e-12 * max(1.0, float(np.linalg.norm(s) * np.linalg.norm(y))):
            if not scaled:
                H = np.eye(m) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
    return BFGSResult(x, f, g, max_iter, False, "iteration cap reached", history)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    """Estimated model with log-likelihood, AIC and standard errors."""

    spec_hat: ModelSpec
    loglik: float
    aic: float
    se_native: np.ndarray
    se_tau: np.ndarray
    iterations: int
    converged: bool
    n: int
    message: str = ""
    families: tuple = ()
    data_key: str = ""

    @property
    def n_free(self) -> int:
        return self.spec_hat.n_free

    @property
    def se(self) -> dict:
        return {"native": self.se_native, "tau": self.se_tau}

    def estimates(self) -> list[dict]:
        """One record per copula link: kind, index, family, native value, tau, SEs."""
        spec = self.spec_hat
        col = {key: k for k, key in enumerate(spec.free_index())}
        rows = []
        for kind, links in (("theta", spec.common_links), ("delta", spec.group_links)):
            for i, c in enumerate(links):
                k = col.get((kind, i))
                rows.append({
                    "kind": kind, "index": i, "family": c.family, "param": c.theta, "tau": c.tau,
                    "free": k is not None,
                    "se_param": float(self.se_native[k]) if k is not None else float("nan"),
                    "se_tau": float(self.se_tau[k]) if k is not None else float("nan"),
                })
        return rows

    def taus(self, kind: str) -> np.ndarray:
        links = self.spec_hat.common_links if kind == "theta" else self.spec_hat.group_links
        return np.array([c.tau for c in links])


def data_fingerprint(codes: np.ndarray) -> str:
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    return hashlib.sha1(codes.tobytes() + str(codes.shape).encode()).hexdigest()


def _objective(spec: ModelSpec, Y: np.ndarray, rule: QuadratureRule, gradient: str, h: float = 1e-5):
    def fg(z):
        try:
            theta = from_unconstrained(spec, z)
            sp = spec.with_free_values(theta)
            if gradient == "analytic":
                ll, gth = loglik_and_grad(sp, Y, rule)
            else:
                ll = loglik(sp, Y, rule)
                gz = np.empty(len(z))
                for k in range(len(z)):
                    hk = h * max(1.0, abs(z[k]))
                    zp, zm = z.copy(), z.copy()
                    zp[k] += hk
                    zm[k] -= hk
                    gz[k] = (loglik(spec.with_free_values(from_unconstrained(spec, zp)), Y, rule)
                             - loglik(spec.with_free_values(from_unconstrained(spec, zm)), Y, rule)) / (2 * hk)
                return -ll, -gz
        except (NumericalFailure, FloatingPointError, ValueError):
            return np.inf, np.full(len(z), np.nan)
        return -ll, -gth * _dparam_dz(spec, z)
    return fg


def fit(data, structure: str, families: Sequence[str], rule: QuadratureRule | None = None, *,
        group_sizes: Sequence[int] | None = None, cutpoints=None, start: ModelSpec | dict | None = None,
        max_iter: int = 500, gtol: float = 1e-5, ftol: float = 1e-9, gradient: str = "analytic",
        compute_se: bool = True) -> FitResult:
    """Fit a bi-factor or second-order copula model by two-step IFM.

    ``families`` has one entry for X0 and one per group factor. ``start`` may
    be a ModelSpec or a dict with ``common_taus``/``group_taus``; the default
    start puts every free link at tau = 0.3. ``gradient`` is ``"analytic"`` or
    ``"fd"`` (central differences on the unconstrained scale).
    """
    ds = _as_dataset(data, group_sizes)
    rule = rule or gauss_legendre()
    Y = ds.codes
    if cutpoints is None:
        cutpoints = estimate_cutpoints(ds)
    if isinstance(start, ModelSpec):
        start = {"common_taus": [c.tau for c in start.common_links],
                 "group_taus": [c.tau for c in start.group_links]}
    start = dict(start or {})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = build_spec(structure, ds.group_sizes, cutpoints, families)
    req = {}
    for kind, key, links in (("theta", "common_taus", base.common_links),
                             ("delta", "group_taus", base.group_links)):
        val = start.get(key)
        req[kind] = None if val is None else np.broadcast_to(np.asarray(val, dtype=float), (len(links),))
    # start taus are clamped away from parameter-space edges and into each family's range
    vals = []
    for (kind, i), c in zip(base.free_index(), _links(base)):
        t = c.tau if req[kind] is None else req[kind][i]
        t = float(np.clip(t, -0.9, 0.9))
        if c.fam.tag in ("gumbel", "sgumbel"):
            t = max(t, 0.02)
        if c.fam.tag == "frank" and abs(t) < 0.01:
            t = 0.01
        vals.append(c.fam.tau_to_param(t))
    base = base.with_free_values(vals)
    fg = _objective(base, Y, rule, gradient)
    res = bfgs(fg, to_unconstrained(base), max_iter=max_iter, gtol=gtol, ftol=ftol)
    spec_hat = base.with_free_values(from_unconstrained(base, res.x))
    ll = -res.fun
    q = spec_hat.n_free
    se_native = se_tau = np.full(q, np.nan)
    if compute_se:
        se_native, se_tau = standard_errors(spec_hat, Y, rule)
    return FitResult(spec_hat, ll, -2.0 * ll + 2.0 * q, se_native, se_tau, res.iterations,
                     res.converged, ds.n, res.message, tuple(get_family(f).tag for f in families),
                     data_fingerprint(Y))


def standard_errors(fit_or_spec, data, rule: QuadratureRule | None = None) -> tuple[np.ndarray, np.ndarray]:
    """SEs from the inverse negative numerical Hessian of the copula log-likelihood.

    Returns (native-scale SEs, Kendall-tau SEs by the delta method). A Hessian
    that is not positive definite yields NaN SEs and a warning.
    """
    spec = fit_or_spec.spec_hat if isinstance(fit_or_spec, FitResult) else fit_or_spec
    rule = rule or gauss_legendre()
    Y = _codes(data)
    theta = spec.free_values()
    q = len(theta)
    if q == 0:
        return np.zeros(0), np.zeros(0)
    links = _links(spec)
    Hs = np.empty((q, q))
    for k in range(q):
        c = links[k]
        lo, hi = c.fam.lower, c.fam.upper
        h = 1e-5 * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] = min(theta[k] + h, hi)
        tm[k] = max(theta[k] - h, lo)
        gp = loglik_and_grad(spec.with_free_values(tp), Y, rule)[1]
        gm = loglik_and_grad(spec.with_free_values(tm), Y, rule)[1]
        Hs[:, k] = (gp - gm) / (tp[k] - tm[k])
    Hs = 0.5 * (Hs + Hs.T)
    info = -Hs
    try:
        L = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        warnings.warn("Hessian is not negative definite; standard errors unavailable", RuntimeWarning,
                      stacklevel=2)
        nan = np.full(q, np.nan)
        return nan, nan.copy()
    Linv = np.linalg.inv(L)
    cov = Linv.T @ Linv
    se = np.sqrt(np.diag(cov))
    dtau = np.array([c.fam.dtau_dtheta(t) for c, t in zip(links, theta)])
    return se, np.abs(dtau) * se
