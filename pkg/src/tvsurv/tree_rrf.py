"""LTRC relative-risk (Poisson) tree.

Each row contributes an exposure ``s = H0(R) - H0(L)`` (baseline cumulative
hazard mass over its interval) and a count ``c = delta``.  Splits maximize
the reduction in one-step Poisson deviance; terminal nodes carry the
relative-risk estimate ``sum(c) / sum(s)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateExposureError
from .tree import TreeBuilder
from .tree_cif import CATEGORICAL, CutRule, _split_mask


@dataclass(frozen=True)
class RrfParams:
    mtry: int
    nodesize: int = 15


def make_poisson_data(L, R, delta, baseline):
    """Exposures and counts from a baseline cumulative-hazard curve."""
    L = np.asarray(L, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    c = np.asarray(delta, dtype=np.float64)
    s = np.asarray(baseline(R) - baseline(L), dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("baseline cumulative hazard must be non-decreasing")
    bad = (s == 0) & (c > 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegenerateExposureError(
            f"event row ({L[i]}, {R[i]}] has zero baseline-hazard exposure"
        )
    return s, c


def node_deviance(s, c):
    """One-step Poisson deviance of a node: 2 sum[c log(c/(s phi)) - (c - s phi)].

    ``phi = sum(c)/sum(s)`` (zero when both sums are zero); the convention
    ``c log(c/.) = 0`` applies when ``c = 0``.
    """
    s = np.asarray(s, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    c_sum = np.sum(c)
    s_sum = np.sum(s)
    phi = c_sum / s_sum if s_sum > 0 else 0.0
    mean = s * phi
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(c > 0, c * np.log(np.where(c > 0, c, 1.0) / np.where(mean > 0, mean, 1.0)), 0.0)
    return max(2.0 * float(np.sum(log_term - (c - mean))), 0.0)


def relative_risk(s, c):
    s_sum = float(np.sum(s))
    c_sum = float(np.sum(c))
    return c_sum / s_sum if s_sum > 0 else 0.0


def best_rrf_split(X, s, c, candidates, kinds, n_levels, nodesize):
    """Deviance-maximizing split over candidates, or None.

    Categorical levels are ordered by per-level relative risk, then treated
    as ordinal.  Ties go to the smaller left child, then the lower
    covariate index; a split must strictly reduce the deviance.
    """
    best = None
    best_red = 0.0
    for k in candidates:
        col = X[:, k]
        if kinds[k] == CATEGORICAL:
            codes = col.astype(np.int64)
            counts = np.bincount(codes, minlength=n_levels[k])
            present = np.nonzero(counts)[0]
            if present.size < 2:
                continue
            c_lev = np.bincount(codes, weights=c, minlength=n_levels[k])[present]
            s_lev = np.bincount(codes, weights=s, minlength=n_levels[k])[present]
            with np.errstate(divide="ignore", invalid="ignore"):
                phi_lev = np.where(s_lev > 0, c_lev / np.where(s_lev > 0, s_lev, 1.0), 0.0)
            ordering = present[np.argsort(phi_lev, kind="stable")]
            rank_of = np.zeros(n_levels[k], dtype=np.int64)
            rank_of[ordering] = np.arange(ordering.size)
            red, thr, _ = _kernels.rrf_best_cut(
                rank_of[codes].astype(np.float64), s, c, nodesize
            )
            if np.isfinite(red) and red > best_red:
                left_levels = ordering[: int(np.floor(thr)) + 1]
                mask = 0
                for lev in left_levels:
                    mask |= 1 << int(lev)
                best = CutRule(feature=k, left_mask=mask)
                best_red = red
        else:
            red, thr, _ = _kernels.rrf_best_cut(col, s, c, nodesize)
            if np.isfinite(red) and red > best_red:
                best = CutRule(feature=k, threshold=float(thr))
                best_red = red
    if best is None:
        return None
    return best, best_red


def grow_rrf_tree(X, s, c, kinds, n_levels, params: RrfParams, rng):
    """Grow one relative-risk tree; deterministic given rng state."""
    builder = TreeBuilder()
    p = X.shape[1]
    m = min(params.mtry, p)

    def grow(rows):
        nid = builder.add_node(n_rows=rows.size, payload=relative_risk(s[rows], c[rows]))
        if rows.size < 2 * params.nodesize:
            return nid
        candidates = np.sort(rng.choice(p, size=m, replace=False))
        found = best_rrf_split(
            X[rows], s[rows], c[rows], candidates, kinds, n_levels, params.nodesize
        )
        if found is None:
            return nid
        rule, _ = found
        go_left = _split_mask(rule, X[rows, rule.feature])
        builder.set_split(nid, rule.feature, rule.threshold, rule.left_mask)
        left = grow(rows[go_left])
        right = grow(rows[~go_left])
        builder.set_children(nid, left, right)
        return nid

    grow(np.arange(X.shape[0]))
    return builder.finalize()
