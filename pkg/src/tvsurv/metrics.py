"""Evaluation metrics and IBS-based K-fold model selection.

Brier and integrated Brier scores use inverse-probability-of-censoring
weights from the censoring-distribution KM; the integrated L2 difference
compares estimated curves to simulation truth.  All step-function
integrals are exact sums over the joint jump grid; the truth curves in L2
are smooth per segment and integrated by fixed-order Gauss-Legendre
within each piece.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from .data import RowArrays
from .estimators import km_censoring, km_ltrc

logger = logging.getLogger("tvsurv")

_GL_NODES, _GL_WEIGHTS = leggauss(16)


def _end_times(subjects):
    ends = np.array([rec.end_time for rec in subjects])
    events = np.array([1 if rec.event else 0 for rec in subjects], dtype=np.uint8)
    return ends, events


def censoring_km(subjects):
    """KM of the censoring distribution from subject-level (end, event)."""
    ends, events = _end_times(subjects)
    return km_censoring(ends, events)


def ipcw_weight(G, end_time, event, t):
    """IPCW weight at time t for one subject; 0 for censored-before-t.

    Returns None when the needed G value is zero (the term is dropped by
    callers, with an audit count).
    """
    if end_time > t:
        g = G(t)
        if g <= 0.0:
            return None
        return 1.0 / g
    if not event:
        return 0.0
    g = G(end_time)
    if g <= 0.0:
        return None
    return 1.0 / g


def brier(t, curves, subjects, G=None):
    """IPCW Brier score at time t.

    ``curves`` maps subject id to that subject's estimated dynamic curve.
    Terms whose censoring weight is undefined (G hit zero) are dropped with
    a warning carrying the count.
    """
    if not subjects:
        raise ValueError("empty dataset")
    if G is None:
        G = censoring_km(subjects)
    total, dropped = 0.0, 0
    for rec in subjects:
        w = ipcw_weight(G, rec.end_time, rec.event, t)
        if w is None:
            dropped += 1
            continue
        if w == 0.0:
            continue
        status = 1.0 if rec.end_time > t else 0.0
        s_hat = float(curves[rec.subject_id](t))
        total += w * (status - s_hat) ** 2
    if dropped:
        warnings.warn(
            f"Brier score at t={t}: dropped {dropped} terms with zero censoring mass",
            RuntimeWarning,
            stacklevel=2,
        )
    return total / len(subjects)


def _piece_grid(lo, hi, *step_curves, extra=()):
    pts = [np.asarray([lo, hi])]
    for c in step_curves:
        pts.append(c.jumps_within(lo, np.nextafter(hi, -np.inf)))
    for e in extra:
        pts.append(np.asarray([x for x in np.atleast_1d(e) if lo < x < hi]))
    return np.unique(np.concatenate(pts))


def ibs(curves, subjects, G=None, tau="end"):
    """Integrated Brier score, per-subject normalized by its horizon.

    ``tau="end"`` evaluates each subject up to its own end time (the span
    over which its status is known); a float gives a common horizon.
    Integrals are exact: every factor is a step function.
    """
    if not subjects:
        raise ValueError("empty dataset")
    if G is None:
        G = censoring_km(subjects)
    total, dropped = 0.0, 0
    for rec in subjects:
        tau_i = rec.end_time if tau == "end" else float(tau)
        if tau_i <= 0:
            raise ValueError(f"subject {rec.subject_id!r}: horizon must be positive")
        curve = curves[rec.subject_id]
        grid = _piece_grid(0.0, tau_i, curve, G, extra=(rec.end_time,))
        a = grid[:-1]
        widths = np.diff(grid)
        alive = rec.end_time > a
        g_at = np.asarray(G(a), dtype=float)
        s_at = np.asarray(curve(a), dtype=float)
        err = np.where(alive, 1.0 - s_at, -s_at) ** 2
        w = np.zeros(a.size)
        undefined = np.zeros(a.size, dtype=bool)
        np.divide(1.0, g_at, out=w, where=alive & (g_at > 0))
        undefined |= alive & (g_at <= 0)
        if rec.event:
            g_end = float(G(rec.end_time))
            if g_end > 0:
                w[~alive] = 1.0 / g_end
            else:
                undefined |= ~alive
        dropped += int(np.sum(undefined))
        total += float(np.sum(w[~undefined] * err[~undefined] * widths[~undefined])) / tau_i
    if dropped:
        warnings.warn(
            f"IBS: dropped {dropped} grid pieces with zero censoring mass",
            RuntimeWarning,
            stacklevel=2,
        )
    return total / len(subjects)


def integrated_l2(truths, curves, subjects):
    """Average integrated L2 difference between true and estimated curves.

    Per subject: (1/end) * integral_0^end (S_true(t) - S_hat(t))^2 dt; the
    estimate is a step function, the truth piecewise smooth, so each piece
    is integrated by 16-point Gauss-Legendre.
    """
    if not subjects:
        raise ValueError("empty dataset")
    total = 0.0
    for rec in subjects:
        truth = truths[rec.subject_id]
        curve = curves[rec.subject_id]
        end = rec.end_time
        if hasattr(curve, "jumps_within"):
            grid = _piece_grid(0.0, end, curve, extra=(np.asarray(truth.boundaries),))
        else:
            grid = _piece_grid(0.0, end, extra=(np.asarray(truth.boundaries),))
        half = 0.5 * np.diff(grid)
        mid = 0.5 * (grid[:-1] + grid[1:])
        # evaluating the estimate at the nodes is exact for step curves
        # (pieces contain no jumps) and for smooth oracle estimators
        ts = (mid[:, None] + np.outer(half, _GL_NODES)).ravel()
        vals = (
            (np.asarray(truth.survival(ts)) - np.asarray(curve(ts))) ** 2
        ).reshape(-1, _GL_NODES.size)
        total += float(np.sum(half * (vals @ _GL_WEIGHTS))) / end
    return total / len(subjects)


# ---------------------------------------------------------------------------
# Modeling-method protocol and IBS-based K-fold CV selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Method:
    """A fit procedure.

    ``fit(subjects, schema, seed)`` returns a predictor mapping a list of
    subject records to ``{subject_id: curve}`` with each subject's dynamic
    curve over its own covariate history.
    """

    name: str
    fit: callable


def km_method(name="km"):
    """Covariate-free product-limit fit; every subject gets the pooled curve."""

    def fit(subjects, schema, seed):
        rows = RowArrays.from_subjects(subjects, schema)
        curve = km_ltrc(rows.L, rows.R, rows.delta)
        return lambda records: {rec.subject_id: curve for rec in records}

    return Method(name=name, fit=fit)


def forest_method(kind, settings="proposed", n_trees=100, name=None, n_jobs=1):
    """CIF or RRF forest with default or size-adaptive proposed settings."""
    from .dynamic import dynamic_curves_for_subjects
    from .forest import default_params, fit_forest_rows, proposed_params

    def fit(subjects, schema, seed):
        rows = RowArrays.from_subjects(subjects, schema)
        if settings == "proposed":
            params = proposed_params(rows.n_rows, schema.p, kind, n_trees=n_trees, seed=seed)
        else:
            params = replace(
                default_params(kind, schema.p, n_trees=n_trees), seed=seed
            )
        forest = fit_forest_rows(rows, params, n_jobs=n_jobs)
        return lambda records: dynamic_curves_for_subjects(forest, records)

    return Method(name=name or f"{kind}-{settings}", fit=fit)


@dataclass(frozen=True)
class CvResult:
    errors: dict  # method name -> IBS CV error
    chosen: str
    k_effective: int


def ibs_cv(subjects, schema, methods, k=10, seed=0):
    """IBS-based K-fold CV over subjects; smallest error wins, ties to the
    method listed first.

    Folds partition subjects; the censoring KM for each test fold is
    estimated within the fold.  Folds without any event are skipped with a
    warning and reported through ``k_effective``.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if not methods:
        raise ValueError("no methods to select among")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(901,)))
    perm = rng.permutation(len(subjects))
    folds = np.array_split(perm, k)
    sums = {m.name: 0.0 for m in methods}
    k_eff = 0
    for fold_idx, fold in enumerate(folds):
        if fold.size == 0:
            continue
        test = [subjects[i] for i in fold]
        if not any(rec.event for rec in test):
            warnings.warn(
                f"fold {fold_idx}: no events, skipped", RuntimeWarning, stacklevel=2
            )
            continue
        train = [subjects[i] for i in np.setdiff1d(perm, fold)]
        G = censoring_km(test)
        k_eff += 1
        for m_idx, m in enumerate(methods):
            fold_seed = np.random.SeedSequence(
                seed, spawn_key=(902, fold_idx, m_idx)
            ).generate_state(1)[0]
            predictor = m.fit(train, schema, int(fold_seed))
            sums[m.name] += ibs(predictor(test), test, G=G)
    if k_eff == 0:
        raise ValueError("every fold was skipped (no events anywhere)")
    errors = {name: s / k_eff for name, s in sums.items()}
    chosen = methods[0].name
    for m in methods[1:]:
        if errors[m.name] < errors[chosen]:
            chosen = m.name
    return CvResult(errors=errors, chosen=chosen, k_effective=k_eff)


@dataclass(frozen=True)
class SelectionSummary:
    p_best: float
    r_best_mean: float
    r_best_sd: float
    r_worst_mean: float
    r_worst_sd: float
    n_replicates: int
    n_excluded_r_best: int


def selection_summary(l2_values, choices):
    """Summarize CV selection against per-replicate true L2 values.

    ``l2_values`` is (replicates x methods); ``choices`` holds the chosen
    method's column per replicate.  p_best is the fraction of replicates
    where the chosen method attains the minimum; r_best / r_worst are the
    relative gaps to the best and worst method.  Replicates with a zero
    best (or worst) L2 are excluded from the respective ratio and counted.
    """
    l2_values = np.asarray(l2_values, dtype=float)
    choices = np.asarray(choices, dtype=int)
    n_rep, n_methods = l2_values.shape
    if n_rep < 1 or n_methods < 2:
        raise ValueError("need at least one replicate and two methods")
    x_cv = l2_values[np.arange(n_rep), choices]
    x_min = l2_values.min(axis=1)
    x_max = l2_values.max(axis=1)
    p_best = float(np.mean(x_cv == x_min))
    ok_b = x_min > 0
    r_b = np.abs(x_min[ok_b] - x_cv[ok_b]) / x_min[ok_b]
    ok_w = x_max > 0
    r_w = np.abs(x_max[ok_w] - x_cv[ok_w]) / x_max[ok_w]
    return SelectionSummary(
        p_best=p_best,
        r_best_mean=float(np.mean(r_b)) if r_b.size else float("nan"),
        r_best_sd=float(np.std(r_b, ddof=1)) if r_b.size > 1 else 0.0,
        r_worst_mean=float(np.mean(r_w)) if r_w.size else float("nan"),
        r_worst_sd=float(np.std(r_w, ddof=1)) if r_w.size > 1 else 0.0,
        n_replicates=n_rep,
        n_excluded_r_best=int(np.sum(~ok_b)),
    )
