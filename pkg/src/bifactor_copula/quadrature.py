"""Gauss-Legendre rules on the unit interval."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_NQ = 25


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes in (0, 1) and positive weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def nq(self) -> int:
        return len(self.nodes)

    def integrate(self, f) -> float:
        """Apply the rule to a vectorised callable on [0, 1]."""
        return float(np.dot(self.weights, f(self.nodes)))


def _legendre_nodes(nq: int) -> tuple[np.ndarray, np.ndarray]:
    # Newton iteration on P_nq from the Chebyshev-like initial guess; roots on (-1, 1).
    m = (nq + 1) // 2
    x = np.cos(np.pi * (np.arange(1, m + 1) - 0.25) / (nq + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, nq + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = nq * (x * p1 - p0) / (x * x - 1.0)
        step = p1 / dp
        x = x - step
        if np.max(np.abs(step)) < 1e-15:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, nq + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = nq * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # x holds the positive half in decreasing order
    if nq % 2:
        xs = np.concatenate([-x[:-1], [0.0], x[:-1][::-1]])
        ws = np.concatenate([w[:-1], [w[-1]], w[:-1][::-1]])
    else:
        xs = np.concatenate([-x, x[::-1]])
        ws = np.concatenate([w, w[::-1]])
    return xs, ws


def gauss_legendre(nq: int = DEFAULT_NQ) -> QuadratureRule:
    """Gauss-Legendre rule with ``nq`` points transformed to [0, 1].

    The rule integrates polynomials of degree ``2 * nq - 1`` exactly. Rules are
    cached, so repeated calls return the same immutable object.
    """
    if int(nq) != nq or nq < 2:
        raise ValueError(f"nq must be an integer >= 2, got {nq!r}")
    return _cached_rule(int(nq))


@lru_cache(maxsize=None)
def _cached_rule(nq: int) -> QuadratureRule:
    x, w = _legendre_nodes(nq)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    # enforce exact mirror symmetry
    nodes = 0.5 * (nodes + (1.0 - nodes[::-1]))
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum()
    return QuadratureRule(nodes=nodes, weights=weights)
