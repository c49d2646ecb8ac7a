"""LTRC conditional-inference tree.

Split-variable selection tests independence between per-row log-rank
scores and each candidate covariate inside the permutation framework:
asymptotic normal / chi-square p-values in large nodes, a Monte-Carlo
permutation fallback in small ones.  The winning variable's cutpoint
maximizes the absolute standardized two-sample score statistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from . import _kernels
from .tree import TreeBuilder

NUMERIC, CATEGORICAL = 0, 1


def logrank_scores(L, R, delta):
    """LTRC log-rank scores with the node-local product-limit estimate."""
    return _kernels.logrank_scores(L, R, delta)


@dataclass(frozen=True)
class CifParams:
    mtry: int
    minsplit: int = 20
    minbucket: int = 7
    alpha: float = 0.05
    mc_node_size: int = 30  # below this, p-values switch to Monte-Carlo
    mc_draws: int = 10_000


@dataclass(frozen=True)
class CutRule:
    feature: int
    threshold: float = math.nan
    left_mask: int = -1


def _numeric_pvalue(col, U, hbar, vh, perm_U):
    n = col.size
    gc = col - np.sum(col) / n
    ssg = np.sum(gc * gc)
    if not ssg > 0.0:
        return None
    t_obs = np.sum(gc * U)
    if perm_U is not None:
        t_perm = np.sum(perm_U * gc, axis=1)
        exceed = int(np.sum(np.abs(t_perm) >= abs(t_obs)))
        return (1.0 + exceed) / (perm_U.shape[0] + 1.0)
    z = abs(t_obs) / math.sqrt(vh * (n / (n - 1.0)) * ssg)
    return math.erfc(z / math.sqrt(2.0))


def _categorical_pvalue(col, U, hbar, vh, n_levels, perm_U):
    n = col.size
    codes = col.astype(np.int64)
    counts = np.bincount(codes, minlength=n_levels).astype(np.float64)
    present = np.nonzero(counts)[0]
    if present.size < 2:
        return None
    cnt = counts[present]
    t_obs = np.bincount(codes, weights=U, minlength=n_levels)[present]
    mu = cnt * hbar
    sigma = vh * (n / (n - 1.0)) * (np.diag(cnt) - np.outer(cnt, cnt) / n)
    u_s, s_s, vt_s = np.linalg.svd(sigma, hermitian=True)
    tol = s_s.max(initial=0.0) * sigma.shape[0] * np.finfo(float).eps
    keep = s_s > tol
    df = int(np.sum(keep))
    if df == 0:
        return None
    pinv = (vt_s.T[:, keep] / s_s[keep]) @ u_s.T[keep]
    diff = t_obs - mu
    quad = float(diff @ pinv @ diff)
    if perm_U is None:
        return float(gammaincc(df / 2.0, max(quad, 0.0) / 2.0))
    n_draws = perm_U.shape[0]
    t_perm = np.empty((n_draws, present.size))
    for j, lev in enumerate(present):
        sel = codes == lev
        t_perm[:, j] = np.sum(perm_U[:, sel], axis=1)
    d = t_perm - mu
    quad_perm = np.zeros(n_draws)
    for j in range(present.size):
        for k in range(present.size):
            quad_perm += pinv[j, k] * d[:, j] * d[:, k]
    exceed = int(np.sum(quad_perm >= quad))
    return (1.0 + exceed) / (n_draws + 1.0)


def association_pvalue(col, U, kind, n_levels=0, perm_U=None):
    """Permutation-framework p-value for one candidate; None if untestable."""
    n = U.size
    hbar = np.sum(U) / n
    vh = np.sum((U - hbar) ** 2) / n
    if not vh > 0.0:
        return None
    if kind == CATEGORICAL:
        return _categorical_pvalue(col, U, hbar, vh, n_levels, perm_U)
    return _numeric_pvalue(col, U, hbar, vh, perm_U)


def select_split_variable(X, U, candidates, kinds, n_levels, alpha, perm_U=None):
    """Pick the candidate with the smallest p-value, Bonferroni-gated.

    Returns ``(feature, adjusted p)`` or None when no candidate passes the
    global test at level ``alpha``.  Zero-variance candidates are skipped;
    p-value ties go to the lower covariate index.
    """
    n = U.size
    hbar = np.sum(U) / n
    vh = np.sum((U - hbar) ** 2) / n
    if not vh > 0.0:
        return None
    best_p, best_k, tested = math.inf, -1, 0
    for k in candidates:
        col = X[:, k]
        if kinds[k] == CATEGORICAL:
            p = _categorical_pvalue(col, U, hbar, vh, n_levels[k], perm_U)
        else:
            p = _numeric_pvalue(col, U, hbar, vh, perm_U)
        if p is None:
            continue
        tested += 1
        if p < best_p:
            best_p, best_k = p, k
    if best_k < 0:
        return None
    p_adj = min(1.0, tested * best_p)
    if p_adj > alpha:
        return None
    return best_k, p_adj


def best_cutpoint(col, U, minbucket, kind, n_levels=0, feature=0):
    """Best split rule on an already-selected variable, or None.

    Categoricals order node levels by mean score, then search ordinal
    cutpoints over that ordering.
    """
    if kind == NUMERIC:
        stat, thr, _ = _kernels.cif_best_cut(col, U, minbucket)
        if stat < 0.0:
            return None
        return CutRule(feature=feature, threshold=float(thr))
    codes = col.astype(np.int64)
    counts = np.bincount(codes, minlength=n_levels)
    sums = np.bincount(codes, weights=U, minlength=n_levels)
    present = np.nonzero(counts)[0]
    if present.size < 2:
        return None
    means = sums[present] / counts[present]
    ordering = present[np.argsort(means, kind="stable")]
    rank_of = np.zeros(n_levels, dtype=np.int64)
    rank_of[ordering] = np.arange(ordering.size)
    stat, thr, _ = _kernels.cif_best_cut(rank_of[codes].astype(np.float64), U, minbucket)
    if stat < 0.0:
        return None
    left_levels = ordering[: int(math.floor(thr)) + 1]
    mask = 0
    for lev in left_levels:
        mask |= 1 << int(lev)
    return CutRule(feature=feature, left_mask=mask)


def _split_mask(rule, col):
    if rule.left_mask >= 0:
        return (rule.left_mask >> col.astype(np.int64)) & 1 == 1
    return col <= rule.threshold


def grow_cif_tree(L, R, delta, X, kinds, n_levels, params: CifParams, rng):
    """Grow one LTRC conditional-inference tree; deterministic given rng state."""
    builder = TreeBuilder()
    p = X.shape[1]
    m = min(params.mtry, p)

    def grow(rows):
        nid = builder.add_node(n_rows=rows.size)
        if rows.size < params.minsplit or rows.size < 2 * params.minbucket:
            return nid
        U = _kernels.logrank_scores(L[rows], R[rows], delta[rows])
        vh = np.sum((U - np.sum(U) / U.size) ** 2) / U.size
        if not vh > 0.0:
            return nid
        candidates = np.sort(rng.choice(p, size=m, replace=False))
        perm_U = None
        if rows.size < params.mc_node_size:
            perm_U = rng.permuted(np.tile(U, (params.mc_draws, 1)), axis=1)
        sel = select_split_variable(
            X[rows], U, candidates, kinds, n_levels, params.alpha, perm_U
        )
        if sel is None:
            return nid
        k, _ = sel
        rule = best_cutpoint(
            X[rows, k], U, params.minbucket, kinds[k], n_levels[k], feature=k
        )
        if rule is None:
            return nid
        go_left = _split_mask(rule, X[rows, k])
        builder.set_split(nid, rule.feature, rule.threshold, rule.left_mask)
        left = grow(rows[go_left])
        right = grow(rows[~go_left])
        builder.set_children(nid, left, right)
        return nid

    grow(np.arange(L.size))
    return builder.finalize()
