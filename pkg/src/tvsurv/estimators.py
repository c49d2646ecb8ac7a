"""Nonparametric estimators for LTRC data.

Product-limit (Kaplan-Meier) survival estimator and Nelson-Aalen cumulative
hazard on pseudo-subject rows, plus the censoring-distribution KM used by
IPCW weights.  Risk sets use the convention ``L < t <= R``: a row enters
strictly before t and is still present at its own exit time.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .curves import CumHazardCurve, SurvivalCurve
from .errors import DegenerateRiskSetError

# floor applied to S before taking logs downstream: 1 / (2 * n rows in scope)
def log_floor(n_rows):
    return 1.0 / (2.0 * n_rows)


def _as_arrays(L, R, delta, weights):
    L = np.ascontiguousarray(L, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.uint8)
    if L.size == 0:
        raise ValueError("no rows")
    if np.any(L >= R):
        raise ValueError("all rows must satisfy L < R")
    if weights is not None:
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.shape != L.shape:
            raise ValueError("weights length mismatch")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ValueError("weights must be non-negative and not all zero")
    return L, R, delta, weights


def _event_table_checked(L, R, delta, weights):
    times, d, Y = _kernels.ltrc_event_table(L, R, delta, weights)
    keep = d > 0
    times, d, Y = times[keep], d[keep], Y[keep]
    if np.any(Y <= 0) or np.any(Y < d - 1e-9 * np.maximum(Y, 1.0)):
        k = int(np.argmax((Y <= 0) | (Y < d)))
        raise DegenerateRiskSetError(
            f"risk set at event time {times[k]} holds mass {Y[k]} < events {d[k]}"
        )
    return times, d, Y


def km_ltrc(L, R, delta, weights=None):
    """Product-limit survival estimator for LTRC rows.

    At each distinct event time t_k the curve multiplies by
    ``1 - d_k / Y_k`` with Y_k the weighted LTRC risk set.
    """
    L, R, delta, weights = _as_arrays(L, R, delta, weights)
    times, d, Y = _event_table_checked(L, R, delta, weights)
    surv = np.cumprod(np.maximum(1.0 - d / Y, 0.0))
    return SurvivalCurve(times, surv, event_counts=d, risk_sizes=Y)


def na_ltrc(L, R, delta, weights=None):
    """Nelson-Aalen cumulative hazard with the same LTRC risk sets as km_ltrc."""
    L, R, delta, weights = _as_arrays(L, R, delta, weights)
    times, d, Y = _event_table_checked(L, R, delta, weights)
    return CumHazardCurve(times, np.cumsum(d / Y))


def km_censoring(end_times, events):
    """KM estimate of the censoring distribution from subject-level data.

    Standard right-censored KM on ``(end_time, 1 - event)``: censorings are
    the "events" of this fit.
    """
    end_times = np.ascontiguousarray(end_times, dtype=np.float64)
    events = np.ascontiguousarray(events, dtype=np.uint8)
    return km_ltrc(np.zeros(end_times.size), end_times, 1 - events)
