"""Pure numpy kernels: the reference implementation of the hot loops.

The compiled module ``_fast`` implements the same four functions with the
same float operation order (stable sorts, sequential accumulation,
first-maximum tie breaks), so both backends produce bit-identical results
and either can back the library.
"""
from __future__ import annotations

import numpy as np

BACKEND = "pure"


def ltrc_event_table(L, R, delta, weights=None):
    """Distinct event times with weighted event counts and LTRC risk sets.

    Risk-set convention: a row is at risk at time t iff ``L < t <= R``.
    Returns ``(times, d, Y)`` with times ascending; ``d[k]`` sums weights of
    event rows with ``R == times[k]``; ``Y[k]`` sums weights of rows at risk.
    """
    L = np.ascontiguousarray(L, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.uint8)
    if weights is None:
        w = np.ones(L.size)
    else:
        w = np.ascontiguousarray(weights, dtype=np.float64)
    ev = delta.astype(bool)
    times, inv = np.unique(R[ev], return_inverse=True)
    if times.size == 0:
        return times, np.zeros(0), np.zeros(0)
    d = np.bincount(inv, weights=w[ev], minlength=times.size)
    oL = np.argsort(L, kind="stable")
    oR = np.argsort(R, kind="stable")
    cwL = np.cumsum(w[oL])
    cwR = np.cumsum(w[oR])
    iL = np.searchsorted(L[oL], times, side="left")
    iR = np.searchsorted(R[oR], times, side="left")
    entered = np.where(iL > 0, cwL[np.maximum(iL - 1, 0)], 0.0)
    left = np.where(iR > 0, cwR[np.maximum(iR - 1, 0)], 0.0)
    return times, d, entered - left


def logrank_scores(L, R, delta):
    """Per-row LTRC log-rank scores from the node-local product-limit fit.

    Event rows score ``1 + log S(R) - log S(L)``; censored rows drop the 1.
    S is clamped below at ``1/(2n)`` so logs stay finite.
    """
    L = np.ascontiguousarray(L, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.uint8)
    n = L.size
    times, d, Y = ltrc_event_table(L, R, delta)
    if times.size == 0:
        return np.zeros(n)
    surv = np.cumprod(np.maximum(1.0 - d / Y, 0.0))
    logS = np.log(np.maximum(surv, 1.0 / (2.0 * n)))
    iR = np.searchsorted(times, R, side="right")
    iL = np.searchsorted(times, L, side="right")
    at_R = np.where(iR > 0, logS[np.maximum(iR - 1, 0)], 0.0)
    at_L = np.where(iL > 0, logS[np.maximum(iL - 1, 0)], 0.0)
    return delta.astype(np.float64) + at_R - at_L


def _boundaries(xs, n, minbucket):
    """Indices i where a cut between xs[i] and xs[i+1] is feasible."""
    lo = max(int(minbucket), 1)
    hi = n - lo
    if hi < lo:
        return np.empty(0, dtype=np.intp)
    idx = np.arange(lo - 1, hi)
    return idx[xs[idx] != xs[idx + 1]]


def cif_best_cut(x, U, minbucket):
    """Best numeric cutpoint by the absolute standardized two-sample statistic.

    Scans boundaries between distinct sorted x values with both children
    holding at least ``minbucket`` rows.  Returns ``(stat, threshold,
    n_left)``; ``stat < 0`` means no feasible cutpoint.  Criterion ties are
    broken toward the smaller left child.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    n = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    Us = U[order]
    cs = np.cumsum(Us)
    hbar = cs[-1] / n
    vh = np.cumsum((Us - hbar) ** 2)[-1] / n
    if not vh > 0.0:
        return -1.0, np.nan, 0
    idx = _boundaries(xs, n, minbucket)
    if idx.size == 0:
        return -1.0, np.nan, 0
    nl = (idx + 1).astype(np.float64)
    var = vh * nl * (n - nl) / (n - 1.0)
    stat = np.abs(cs[idx] - nl * hbar) / np.sqrt(var)
    k = int(np.argmax(stat))
    i = int(idx[k])
    return float(stat[k]), (xs[i] + xs[i + 1]) / 2.0, i + 1


def rrf_best_cut(x, s, c, minbucket):
    """Best numeric cutpoint by Poisson one-step deviance reduction.

    ``s``/``c`` are per-row exposures and event counts.  Returns
    ``(reduction, threshold, n_left)``; callers require ``reduction > 0``.
    A reduction of ``-inf`` means no feasible cutpoint.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    n = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cc = np.cumsum(c[order])
    ss = np.cumsum(s[order])
    clogs = np.where(c > 0, np.log(np.where(s > 0, s, 1.0)), 0.0)
    gg = np.cumsum(clogs[order])
    c_tot, s_tot, g_tot = cc[-1], ss[-1], gg[-1]
    idx = _boundaries(xs, n, minbucket)
    if idx.size == 0:
        return -np.inf, np.nan, 0
    d_parent = _pois_dev(c_tot, s_tot, g_tot)
    red = (
        d_parent
        - _pois_dev(cc[idx], ss[idx], gg[idx])
        - _pois_dev(c_tot - cc[idx], s_tot - ss[idx], g_tot - gg[idx])
    )
    k = int(np.argmax(red))
    i = int(idx[k])
    return float(red[k]), (xs[i] + xs[i + 1]) / 2.0, i + 1


def _pois_dev(c_sum, s_sum, clogs_sum):
    # node deviance reduces to 2[-sum(c*log s) - C*log(C/S)] for 0/1 counts
    c_sum = np.asarray(c_sum, dtype=np.float64)
    pos = c_sum > 0.0
    ratio = np.log(np.where(pos, c_sum, 1.0) / np.where(s_sum > 0.0, s_sum, 1.0))
    out = np.where(pos, 2.0 * (-clogs_sum - c_sum * ratio), 0.0)
    return out if out.ndim else float(out)
