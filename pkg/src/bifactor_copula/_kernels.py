"""Compiled row kernels for the log-likelihood and its gradient."""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _loglik_grad_rows(f, dth, dde, dnode, Y, counts, offsets, w, bifactor):
    n, d = Y.shape
    G = len(offsets) - 1
    nq = len(w)
    g_theta = np.zeros(d)
    g_delta = np.zeros(d if bifactor else G)
    ll = 0.0
    I = np.empty((G, nq))
    Tth = np.empty((d, nq))
    Tde = np.empty((d, nq))
    Sx = np.empty((G, nq))
    suf = np.empty((d + 1, nq))
    pre = np.empty(nq)
    xs = np.empty(nq)
    for r in range(n):
        for g in range(G):
            a, b = offsets[g], offsets[g + 1]
            for q1 in range(nq):
                # suffix products over the group's items, then a running prefix
                for q2 in range(nq):
                    suf[b, q2] = 1.0
                for k in range(b - 1, a - 1, -1):
                    fk = f[k, Y[r, k], q1]
                    for q2 in range(nq):
                        suf[k, q2] = suf[k + 1, q2] * fk[q2]
                acc = 0.0
                for q2 in range(nq):
                    acc += w[q2] * suf[a, q2]
                    pre[q2] = w[q2]
                    xs[q2] = 0.0
                I[g, q1] = acc
                for k in range(a, b):
                    y = Y[r, k]
                    fk = f[k, y, q1]
                    dt = dth[k, y, q1]
                    dd = dde[k, y, q1]
                    st = 0.0
                    sd = 0.0
                    for q2 in range(nq):
                        L = pre[q2] * suf[k + 1, q2]
                        st += L * dt[q2]
                        if bifactor:
                            sd += L * dd[q2]
                        else:
                            xs[q2] += L * dd[q2]
                        pre[q2] *= fk[q2]
                    Tth[k, q1] = st
                    Tde[k, q1] = sd
                if not bifactor:
                    sx = 0.0
                    for q2 in range(nq):
                        sx += xs[q2] * dnode[g, q1, q2]
                    Sx[g, q1] = sx
        p = 0.0
        for q1 in range(nq):
            prod = w[q1]
            for g in range(G):
                prod *= I[g, q1]
            p += prod
        if p < 1e-300:
            p = 1e-300
        ll += counts[r] * np.log(p)
        scale = counts[r] / p
        for g in range(G):
            a, b = offsets[g], offsets[g + 1]
            for q1 in range(nq):
                o = w[q1] * scale
                for h in range(G):
                    if h != g:
                        o *= I[h, q1]
                for k in range(a, b):
                    g_theta[k] += o * Tth[k, q1]
                    if bifactor:
                        g_delta[k] += o * Tde[k, q1]
                if not bifactor:
                    g_delta[g] += o * Sx[g, q1]
    return ll, g_theta, g_delta


def _row_probabilities(f, Y, offsets, w):
    n, d = Y.shape
    G = len(offsets) - 1
    nq = len(w)
    out = np.empty(n)
    I = np.empty((G, nq))
    buf = np.empty(nq)
    for r in range(n):
        for g in range(G):
            a, b = offsets[g], offsets[g + 1]
            for q1 in range(nq):
                for q2 in range(nq):
                    buf[q2] = w[q2]
                for k in range(a, b):
                    fk = f[k, Y[r, k], q1]
                    for q2 in range(nq):
                        buf[q2] *= fk[q2]
                acc = 0.0
                for q2 in range(nq):
                    acc += buf[q2]
                I[g, q1] = acc
        p = 0.0
        for q1 in range(nq):
            prod = w[q1]
            for g in range(G):
                prod *= I[g, q1]
            p += prod
        out[r] = p
    return out


if numba is not None:
    loglik_grad_rows = numba.njit(cache=True, fastmath=False)(_loglik_grad_rows)
    row_probabilities = numba.njit(cache=True, fastmath=False)(_row_probabilities)
    HAVE_NUMBA = True
else:  # pragma: no cover
    loglik_grad_rows = None
    row_probabilities = None
    HAVE_NUMBA = False
