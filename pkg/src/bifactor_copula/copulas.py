"""Bivariate linking copulas.

Conventions: ``cdf(u, v)`` is C(u, v); ``ccdf(v | u)`` is the h-function
dC(u, v)/du, i.e. the distribution of V given U = u. Every family here is
exchangeable, so ``pdf(u, v) == pdf(v, u)`` and ``d ccdf(v | u) / dv`` is the
density. All functions broadcast over ``u`` and ``v``; the parameter is a
scalar.

Family tags serialise as lowercase strings: ``bvn``, ``t<nu>`` (``t2``,
``t3``, ``t5`` by default), ``gumbel``, ``sgumbel``, ``frank``, ``indep``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .bvn import bvn_cdf

EPS = 1e-12
TAU_CAP = 0.95
DEFAULT_FAMILIES = ("bvn", "t2", "t3", "t5", "gumbel", "sgumbel", "frank")


class NumericalFailure(RuntimeError):
    """Raised when an iterative evaluation does not converge or is not finite."""


def _clamp(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


class CopulaFamily:
    """Base class; subclasses supply the family-specific formulas."""

    tag = ""
    n_params = 1
    lower = -np.inf
    upper = np.inf
    independence_param = 0.0

    def __repr__(self):
        return f"CopulaFamily({self.tag!r})"

    # parameter handling ------------------------------------------------------
    def check(self, theta: float) -> None:
        if self.n_params == 0:
            return
        if not np.isfinite(theta) or not (self.lower <= theta <= self.upper):
            raise ValueError(f"parameter {theta!r} outside the domain of {self.tag}")

    def to_unconstrained(self, theta: float) -> float:
        raise NotImplementedError

    def from_unconstrained(self, z: float) -> float:
        raise NotImplementedError

    def param_to_tau(self, theta: float) -> float:
        raise NotImplementedError

    def tau_to_param(self, tau: float) -> float:
        raise NotImplementedError

    def dtau_dtheta(self, theta: float) -> float:
        h = 1e-6 * max(1.0, abs(theta))
        lo, hi = theta - h, theta + h
        if lo < self.lower:
            lo = theta
        if hi > self.upper:
            hi = theta
        return (self.param_to_tau(hi) - self.param_to_tau(lo)) / (hi - lo)

    # evaluation ----------------------------------------------------------------
    def cdf(self, theta, u, v):
        raise NotImplementedError

    def ccdf(self, theta, v, u):
        raise NotImplementedError

    def pdf(self, theta, u, v):
        raise NotImplementedError

    def inv_ccdf(self, theta, p, u):
        return _solve_inv_ccdf(self, theta, p, u)

    def ccdf_dtheta(self, theta, v, u):
        # central difference, one-sided at the domain boundary
        h = 1e-6 * max(1.0, abs(theta))
        lo, hi = theta - h, theta + h
        if lo < self.lower:
            lo = theta
        if hi > self.upper:
            hi = theta
        return (self.ccdf(hi, v, u) - self.ccdf(lo, v, u)) / (hi - lo)

    def ccdf_du(self, theta, v, u):
        """Derivative of ``ccdf(v | u)`` with respect to the conditioning value."""
        z = special.ndtri(_clamp(u))
        eps = 1e-5
        up, um = special.ndtr(z + eps), special.ndtr(z - eps)
        return (self.ccdf(theta, v, up) - self.ccdf(theta, v, um)) / (up - um)


# ---------------------------------------------------------------------------
# generic inverse of the h-function
# ---------------------------------------------------------------------------

_ZMIN = float(special.ndtri(EPS))
_ZMAX = -_ZMIN


def _solve_inv_ccdf(fam: CopulaFamily, theta, p, u, max_iter: int = 200, tol: float = 1e-12):
    """Safeguarded Newton/bisection for v with ccdf(v | u) = p, in normal-score scale."""
    p, u = np.broadcast_arrays(np.asarray(p, dtype=float), _clamp(u))
    shape = p.shape
    p = p.ravel()
    u = u.ravel()
    lo = np.full(p.shape, _ZMIN)
    hi = np.full(p.shape, _ZMAX)
    z = special.ndtri(_clamp(p))
    v = special.ndtr(z)
    done = np.zeros(p.shape, dtype=bool)
    for _ in range(max_iter):
        v = special.ndtr(z)
        f = fam.ccdf(theta, v, u) - p
        done = (np.abs(f) <= 1e-14) | (hi - lo <= tol)
        if done.all():
            break
        below = f < 0
        lo = np.where(below, np.maximum(lo, z), lo)
        hi = np.where(below, hi, np.minimum(hi, z))
        dens = fam.pdf(theta, u, v) * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            z_new = z - f / dens
        bad = ~np.isfinite(z_new) | (z_new <= lo) | (z_new >= hi)
        z_new = np.where(bad, 0.5 * (lo + hi), z_new)
        z = np.where(done, z, z_new)
    else:
        v = special.ndtr(z)
        f = fam.ccdf(theta, v, u) - p
        done = (np.abs(f) <= 1e-10) | (hi - lo <= 1e-9)
        if not done.all():
            raise NumericalFailure(f"inverse h-function of {fam.tag} did not converge")
    return special.ndtr(z).reshape(shape)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


class Independence(CopulaFamily):
    tag = "indep"
    n_params = 0
    lower = upper = 0.0

    def param_to_tau(self, theta):
        return 0.0

    def tau_to_param(self, tau):
        if tau != 0:
            raise ValueError("independence copula only attains tau = 0")
        return 0.0

    def dtau_dtheta(self, theta):
        return 0.0

    def cdf(self, theta, u, v):
        return _clamp(u) * _clamp(v)

    def ccdf(self, theta, v, u):
        return np.broadcast_to(_clamp(v), np.broadcast(np.asarray(v), np.asarray(u)).shape).copy()

    def pdf(self, theta, u, v):
        return np.ones(np.broadcast(np.asarray(u), np.asarray(v)).shape)

    def inv_ccdf(self, theta, p, u):
        return np.broadcast_to(np.asarray(p, dtype=float), np.broadcast(np.asarray(p), np.asarray(u)).shape).copy()

    def ccdf_dtheta(self, theta, v, u):
        return np.zeros(np.broadcast(np.asarray(v), np.asarray(u)).shape)

    def ccdf_du(self, theta, v, u):
        return np.zeros(np.broadcast(np.asarray(v), np.asarray(u)).shape)


class _Elliptical(CopulaFamily):
    lower = -1.0 + 1e-9
    upper = 1.0 - 1e-9

    def to_unconstrained(self, theta):
        return math.atanh(theta)

    def from_unconstrained(self, z):
        return float(np.clip(math.tanh(z), -0.999999, 0.999999))

    def param_to_tau(self, theta):
        return 2.0 / math.pi * math.asin(theta)

    def tau_to_param(self, tau):
        if not -1.0 < tau < 1.0:
            raise ValueError(f"tau {tau!r} outside (-1, 1)")
        return math.sin(math.pi * tau / 2.0)

    def dtau_dtheta(self, theta):
        return 2.0 / (math.pi * math.sqrt(1.0 - theta * theta))


class Gaussian(_Elliptical):
    tag = "bvn"

    def cdf(self, theta, u, v):
        x = special.ndtri(_clamp(u))
        y = special.ndtri(_clamp(v))
        return bvn_cdf(x, y, float(theta))

    def ccdf(self, theta, v, u):
        x = special.ndtri(_clamp(u))
        y = special.ndtri(_clamp(v))
        return special.ndtr((y - theta * x) / math.sqrt(1.0 - theta * theta))

    def pdf(self, theta, u, v):
        x = special.ndtri(_clamp(u))
        y = special.ndtri(_clamp(v))
        s2 = 1.0 - theta * theta
        q = (theta * theta * (x * x + y * y) - 2.0 * theta * x * y) / (2.0 * s2)
        return np.exp(-q) / math.sqrt(s2)

    def inv_ccdf(self, theta, p, u):
        x = special.ndtri(_clamp(u))
        return special.ndtr(math.sqrt(1.0 - theta * theta) * special.ndtri(_clamp(p)) + theta * x)

    def ccdf_dtheta(self, theta, v, u):
        x = special.ndtri(_clamp(u))
        y = special.ndtri(_clamp(v))
        s2 = 1.0 - theta * theta
        z = (y - theta * x) / math.sqrt(s2)
        return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * (theta * y - x) / s2 ** 1.5

    def ccdf_du(self, theta, v, u):
        x = special.ndtri(_clamp(u))
        y = special.ndtri(_clamp(v))
        s = math.sqrt(1.0 - theta * theta)
        z = (y - theta * x) / s
        return -theta / s * np.exp(-0.5 * (z * z - x * x))


class StudentT(_Elliptical):
    def __init__(self, nu: int):
        if int(nu) != nu or nu < 1:
            raise ValueError(f"degrees of freedom must be a positive integer, got {nu!r}")
        self.nu = int(nu)
        self.tag = f"t{self.nu}"

    def _scores(self, u):
        return special.stdtrit(self.nu, _clamp(u))

    def ccdf(self, theta, v, u):
        nu = self.nu
        x = self._scores(u)
        y = self._scores(v)
        scale = np.sqrt((nu + x * x) * (1.0 - theta * theta) / (nu + 1.0))
        return special.stdtr(nu + 1, (y - theta * x) / scale)

    def inv_ccdf(self, theta, p, u):
        nu = self.nu
        x = self._scores(u)
        scale = np.sqrt((nu + x * x) * (1.0 - theta * theta) / (nu + 1.0))
        y = theta * x + scale * special.stdtrit(nu + 1, _clamp(p))
        return special.stdtr(nu, y)

    def pdf(self, theta, u, v):
        nu = self.nu
        x = self._scores(u)
        y = self._scores(v)
        s2 = 1.0 - theta * theta
        q = (x * x + y * y - 2.0 * theta * x * y) / (nu * s2)
        log_joint = -math.log(2.0 * math.pi) - 0.5 * math.log(s2) - 0.5 * (nu + 2.0) * np.log1p(q)
        log_marg = (special.gammaln((nu + 1) / 2.0) - special.gammaln(nu / 2.0)
                    - 0.5 * math.log(nu * math.pi))
        log_fx = log_marg - 0.5 * (nu + 1.0) * np.log1p(x * x / nu)
        log_fy = log_marg - 0.5 * (nu + 1.0) * np.log1p(y * y / nu)
        return np.exp(log_joint - log_fx - log_fy)

    def cdf(self, theta, u, v):
        u, v = np.broadcast_arrays(_clamp(u), _clamp(v))
        out = np.empty(u.shape)
        for idx in np.ndindex(u.shape):
            uu, vv = float(u[idx]), float(v[idx])
            val, _ = integrate.quad(lambda s: float(self.ccdf(theta, vv, s)), 0.0, uu,
                                    epsabs=1e-14, epsrel=1e-12, limit=200)
            out[idx] = val
        return out if out.ndim else float(out)


class Gumbel(CopulaFamily):
    tag = "gumbel"
    lower = 1.0
    upper = 1e3
    independence_param = 1.0

    def to_unconstrained(self, theta):
        return math.log(max(theta - 1.0, 1e-13))

    def from_unconstrained(self, z):
        return 1.0 + math.exp(min(max(z, -30.0), 6.0))

    def param_to_tau(self, theta):
        return 1.0 - 1.0 / theta

    def tau_to_param(self, tau):
        if not 0.0 <= tau < 1.0:
            raise ValueError(f"tau {tau!r} outside [0, 1) for {self.tag}")
        return 1.0 / (1.0 - tau)

    def dtau_dtheta(self, theta):
        return 1.0 / (theta * theta)

    @staticmethod
    def _parts(theta, u, v):
        u = _clamp(u)
        v = _clamp(v)
        lx = np.log(-np.log(u))
        ly = np.log(-np.log(v))
        log_s = np.logaddexp(theta * lx, theta * ly)
        log_a = log_s / theta
        return u, v, lx, ly, log_s, log_a

    def cdf(self, theta, u, v):
        _, _, _, _, _, log_a = self._parts(theta, u, v)
        return np.exp(-np.exp(log_a))

    def ccdf(self, theta, v, u):
        u, v, lx, ly, log_s, log_a = self._parts(theta, u, v)
        log_h = -np.exp(log_a) + (1.0 - theta) * log_a + (theta - 1.0) * lx - np.log(u)
        return np.minimum(np.exp(log_h), 1.0)

    def pdf(self, theta, u, v):
        u, v, lx, ly, log_s, log_a = self._parts(theta, u, v)
        a = np.exp(log_a)
        log_c = (-a - np.log(u) - np.log(v) + (theta - 1.0) * (lx + ly)
                 + (1.0 / theta - 2.0) * log_s + np.log(a + theta - 1.0))
        return np.exp(log_c)

    def ccdf_dtheta(self, theta, v, u):
        u, v, lx, ly, log_s, log_a = self._parts(theta, u, v)
        a = np.exp(log_a)
        h = np.exp(-a + (1.0 - theta) * log_a + (theta - 1.0) * lx - np.log(u))
        wx = np.exp(theta * lx - log_s)
        wy = np.exp(theta * ly - log_s)
        dlog_s = wx * lx + wy * ly
        dlog_a = -log_s / theta ** 2 + dlog_s / theta
        dlog_h = -a * dlog_a - log_a + (1.0 - theta) * dlog_a + lx
        return h * dlog_h


class SurvivalGumbel(Gumbel):
    """Gumbel copula of (1 - U, 1 - V); lower tail dependence."""

    tag = "sgumbel"
    _base = Gumbel()

    def cdf(self, theta, u, v):
        u = _clamp(u)
        v = _clamp(v)
        return u + v - 1.0 + self._base.cdf(theta, 1.0 - u, 1.0 - v)

    def ccdf(self, theta, v, u):
        return 1.0 - self._base.ccdf(theta, 1.0 - _clamp(v), 1.0 - _clamp(u))

    def pdf(self, theta, u, v):
        return self._base.pdf(theta, 1.0 - _clamp(u), 1.0 - _clamp(v))

    def inv_ccdf(self, theta, p, u):
        return 1.0 - self._base.inv_ccdf(theta, 1.0 - np.asarray(p, dtype=float), 1.0 - _clamp(u))

    def ccdf_dtheta(self, theta, v, u):
        return -self._base.ccdf_dtheta(theta, 1.0 - _clamp(v), 1.0 - _clamp(u))

    def ccdf_du(self, theta, v, u):
        return self._base.ccdf_du(theta, 1.0 - _clamp(v), 1.0 - _clamp(u))


def _debye1(theta: float) -> float:
    if theta == 0.0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0.0 else 1.0, 0.0, theta,
                            epsabs=1e-15, epsrel=1e-13)
    return val / theta


class Frank(CopulaFamily):
    tag = "frank"
    lower = -200.0
    upper = 200.0
    band = 1e-6

    def to_unconstrained(self, theta):
        return float(theta)

    def from_unconstrained(self, z):
        if abs(z) < self.band:
            return self.band if z >= 0 else -self.band
        return float(z)

    def param_to_tau(self, theta):
        if abs(theta) < 1e-4:
            return theta / 9.0
        return 1.0 - 4.0 / theta + 4.0 * _debye1(theta) / theta

    def tau_to_param(self, tau):
        if not -1.0 < tau < 1.0:
            raise ValueError(f"tau {tau!r} outside (-1, 1)")
        if tau == 0.0:
            return 0.0
        if abs(tau) < 1e-5:
            return 9.0 * tau
        f = lambda t: self.param_to_tau(t) - tau
        if tau > 0:
            return optimize.brentq(f, 1e-5, self.upper, xtol=1e-14, rtol=1e-15)
        return optimize.brentq(f, self.lower, -1e-5, xtol=1e-14, rtol=1e-15)

    def cdf(self, theta, u, v):
        u = _clamp(u)
        v = _clamp(v)
        if abs(theta) < 1e-12:
            return u * v
        return -np.log1p(np.expm1(-theta * u) * np.expm1(-theta * v) / math.expm1(-theta)) / theta

    # The forms below avoid the cancellation in expm1(-t) + expm1(-t u) expm1(-t v)
    # that the textbook expressions suffer for strong dependence.
    def _parts(self, theta, v, u):
        m = -np.expm1(-theta * (1.0 - u))
        r = np.exp(-theta * (v - u))
        return m + r * -np.expm1(-theta * u), r

    def ccdf(self, theta, v, u):
        u = _clamp(u)
        v = _clamp(v)
        if abs(theta) < 1e-12:
            return np.broadcast_to(v, np.broadcast(u, v).shape).copy()
        den, _ = self._parts(theta, v, u)
        return np.clip(-np.expm1(-theta * v) / den, 0.0, 1.0)

    def pdf(self, theta, u, v):
        u = _clamp(u)
        v = _clamp(v)
        if abs(theta) < 1e-12:
            return np.ones(np.broadcast(u, v).shape)
        den, r = self._parts(theta, v, u)
        return theta * -math.expm1(-theta) * r / (den * den)

    def inv_ccdf(self, theta, p, u):
        p = _clamp(p)
        u = _clamp(u)
        if abs(theta) < 1e-12:
            return np.broadcast_to(p, np.broadcast(p, u).shape).copy()
        num = np.log1p(p * np.expm1(theta * u))
        den = np.log((1.0 - p) + p * np.exp(-theta * (1.0 - u)))
        return np.clip((num - den) / theta, 0.0, 1.0)


_T_PATTERN = re.compile(r"^t(\d+)$")


@lru_cache(maxsize=None)
def get_family(tag: str) -> CopulaFamily:
    """Look up a family by its serialised tag."""
    if isinstance(tag, CopulaFamily):
        return tag
    key = str(tag).strip().lower()
    simple = {"bvn": Gaussian, "gumbel": Gumbel, "sgumbel": SurvivalGumbel,
              "frank": Frank, "indep": Independence}
    if key in simple:
        return simple[key]()
    m = _T_PATTERN.match(key)
    if m:
        return StudentT(int(m.group(1)))
    raise ValueError(f"unknown copula family {tag!r}")


@dataclass(frozen=True)
class CopulaSpec:
    """A family tag and its dependence parameter."""

    family: str
    theta: float = 0.0

    def __post_init__(self):
        fam = get_family(self.family)
        object.__setattr__(self, "family", fam.tag)
        object.__setattr__(self, "theta", float(self.theta))
        fam.check(self.theta)

    @property
    def fam(self) -> CopulaFamily:
        return get_family(self.family)

    @property
    def tau(self) -> float:
        return self.fam.param_to_tau(self.theta)

    @classmethod
    def from_tau(cls, family: str, tau: float) -> "CopulaSpec":
        return cls(family, get_family(family).tau_to_param(tau))

    def __str__(self):
        return f"{self.family}({self.theta:.4g})"


# module-level API ---------------------------------------------------------------


def cdf(spec: CopulaSpec, u, v):
    return spec.fam.cdf(spec.theta, u, v)


def ccdf(spec: CopulaSpec, v, u):
    return spec.fam.ccdf(spec.theta, v, u)


def inv_ccdf(spec: CopulaSpec, p, u):
    return spec.fam.inv_ccdf(spec.theta, p, u)


def pdf(spec: CopulaSpec, u, v):
    return spec.fam.pdf(spec.theta, u, v)


def ccdf_dtheta(spec: CopulaSpec, v, u):
    return spec.fam.ccdf_dtheta(spec.theta, v, u)


def ccdf_du(spec: CopulaSpec, v, u):
    return spec.fam.ccdf_du(spec.theta, v, u)


def tau_to_param(family: str, tau: float) -> float:
    return get_family(family).tau_to_param(tau)


def param_to_tau(family: str, theta: float) -> float:
    fam = get_family(family)
    fam.check(theta)
    return fam.param_to_tau(theta)


def upper_cap(family: str) -> float:
    """Parameter standing in for comonotonicity (Kendall tau of 0.95)."""
    fam = get_family(family)
    if fam.n_params == 0:
        return 0.0
    return fam.tau_to_param(TAU_CAP)


def theoretical_semicorrelations(spec: CopulaSpec, n_points: int = 48) -> tuple[float, float]:
    """Lower and upper normal-scores semi-correlations of a copula.

    Each half of the unit interval is integrated with a Gauss-Legendre rule
    in u; the cross moment integrates the second normal score over the
    conditional probability scale, v = inv_ccdf(p | u), which stays smooth
    when the dependence is strong.
    """
    from .quadrature import gauss_legendre

    rule = gauss_legendre(n_points)
    t, wt = rule.nodes, rule.weights
    fam = spec.fam
    p = float(np.asarray(fam.cdf(spec.theta, 0.5, 0.5)))
    out = []
    for tail in ("lower", "upper"):
        u = 0.5 * t if tail == "lower" else 0.5 + 0.5 * t
        w = 0.5 * wt
        z = special.ndtri(u)
        h = np.asarray(fam.ccdf(spec.theta, 0.5, u), dtype=float)
        if tail == "lower":
            mass = h
            pp = h[:, None] * t[None, :]
        else:
            mass = 1.0 - h
            pp = h[:, None] + mass[:, None] * t[None, :]
        m1 = np.sum(w * z * mass)
        m2 = np.sum(w * z * z * mass)
        v = fam.inv_ccdf(spec.theta, np.clip(pp, EPS, 1 - EPS), np.broadcast_to(u[:, None], pp.shape))
        inner = mass * (special.ndtri(_clamp(v)) @ wt)
        m12 = np.sum(w * z * inner)
        val = (m12 - m1 * m1 / p) / (m2 - m1 * m1 / p)
        if not np.isfinite(val):
            raise NumericalFailure("semi-correlation quadrature is not finite")
        out.append(float(val))
    return out[0], out[1]
