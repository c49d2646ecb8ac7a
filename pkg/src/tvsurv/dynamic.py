"""Dynamic survival-curve construction for a covariate stream.

A stream with values x*_j from change times t*_j gets one hypothetical
("time-invariant input") curve S_Aj per segment.  The dynamic estimate
chains them with multiplicative correction factors:

    S(t) = S_Aj(t)/S_Aj(t*_j) * prod_{l<j} S_Al(t*_{l+1})/S_Al(t*_l)

for t in [t*_j, t*_{j+1}), which equals the recursive form
S(t) = S_Aj(t)/S_Aj(t*_j) * S(t*_j).  A zero denominator at a boundary
absorbs the curve to 0 from that point on: an estimated-extinct
subpopulation is not revived by a covariate change.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .curves import StepCurve, SurvivalCurve
from .errors import BeforeEntryError


def _segment_index(change_times, t):
    return int(np.searchsorted(np.asarray(change_times), t, side="right")) - 1


def correction_factors(segment_curves, change_times):
    """Cumulative factors F_j = prod_{l<j} S_Al(t*_{l+1})/S_Al(t*_l).

    Returns an array of length len(change_times); entries after an absorbed
    (zero-denominator) boundary are 0.
    """
    J = len(change_times)
    F = np.ones(J)
    for j in range(1, J):
        prev = segment_curves[j - 1]
        denom = prev(change_times[j - 1])
        if denom <= 0.0:
            warnings.warn(
                f"segment curve {j - 1} vanishes at its own start; "
                "dynamic estimate absorbed to 0",
                RuntimeWarning,
                stacklevel=2,
            )
            F[j:] = 0.0
            break
        F[j] = F[j - 1] * prev(change_times[j]) / denom
    return F


def dynamic_estimate(segment_curves, change_times, t):
    """Dynamic survival estimate at time t (expanded product form)."""
    if t < change_times[0]:
        raise BeforeEntryError(f"t={t} precedes stream entry {change_times[0]}")
    F = correction_factors(segment_curves, change_times)
    j = _segment_index(change_times, t)
    if F[j] == 0.0:
        return 0.0
    seg = segment_curves[j]
    denom = seg(change_times[j])
    if denom <= 0.0:
        warnings.warn(
            f"segment curve {j} vanishes at its own start; estimate is 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return float(F[j] * seg(t) / denom)


def dynamic_estimate_recursive(segment_curves, change_times, t):
    """Same estimate via the recursive form; used to cross-check the product.

    Boundary values chain right-to-left instead of accumulating a product,
    so agreement with :func:`dynamic_estimate` is a real check, not a
    tautology.
    """
    if t < change_times[0]:
        raise BeforeEntryError(f"t={t} precedes stream entry {change_times[0]}")

    def boundary(j):
        # estimate at t*_j, evaluated through segment j-1
        if j == 0:
            return 1.0
        prev = segment_curves[j - 1]
        denom = prev(change_times[j - 1])
        if denom <= 0.0:
            return 0.0
        return prev(change_times[j]) / denom * boundary(j - 1)

    j = _segment_index(change_times, t)
    seg = segment_curves[j]
    denom = seg(change_times[j])
    if denom <= 0.0:
        return 0.0
    return float(seg(t) / denom * boundary(j))


def dynamic_curve(segment_curves, change_times, horizon=None):
    """Emit the dynamic estimate as a step curve.

    The grid is the union of stream change times and each segment curve's
    jump times within its active span (the last segment is open-ended, or
    truncated at ``horizon``).
    """
    change_times = [float(t) for t in change_times]
    J = len(change_times)
    grid = []
    for j in range(J):
        lo = change_times[j]
        hi = change_times[j + 1] if j + 1 < J else (horizon if horizon is not None else np.inf)
        grid.append([lo])
        jumps = segment_curves[j].jumps_within(lo, np.nextafter(hi, -np.inf))
        grid.append(jumps)
    grid = np.unique(np.concatenate([np.asarray(g, dtype=float) for g in grid]))
    if horizon is not None:
        grid = grid[grid <= horizon]
    values = np.array([dynamic_estimate(segment_curves, change_times, t) for t in grid])
    return StepCurve(grid, values, baseline=1.0)


def segment_index_curve(change_times, horizon=None):
    """Step curve mapping time to the active segment index (CSV emission)."""
    times = np.asarray(change_times, dtype=float)
    return StepCurve(times, np.arange(times.size, dtype=float), baseline=-1.0)


def curve_with_and_without_update(segment_curves, change_times, horizon=None):
    """The dynamic curve, and its counterpart frozen at the last change.

    The frozen curve ignores the final covariate change: segment J-2 stays
    active past t*_{J-1} with the correction chain as of that segment.
    With no changes the two curves coincide.
    """
    updated = dynamic_curve(segment_curves, change_times, horizon)
    if len(change_times) == 1:
        return updated, updated
    frozen = dynamic_curve(segment_curves[:-1], change_times[:-1], horizon)
    grid = np.unique(np.concatenate([updated.times, frozen.times]))
    return (
        StepCurve(grid, updated(grid), baseline=1.0),
        StepCurve(grid, frozen(grid), baseline=1.0),
    )


@dataclass(frozen=True)
class SegmentCounts:
    """Cohort counts for one stream segment, Appendix-style: no censoring.

    ``steps`` are ``(time, at_risk, surviving)`` triples ordered in time;
    each multiplies the segment curve by surviving/at_risk, anchored so the
    curve is 1 at the segment start.
    """

    start: float
    steps: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "steps",
            tuple((float(t), int(a), int(s)) for t, a, s in self.steps),
        )
        last = self.start
        for t, at_risk, surviving in self.steps:
            if t <= last:
                raise ValueError("segment count times must increase from the start")
            if at_risk <= 0:
                raise ValueError(f"at-risk count is 0 at time {t}")
            if not 0 <= surviving <= at_risk:
                raise ValueError(f"surviving > at-risk at time {t}")
            last = t


def empirical_segment_curves(segments):
    """Per-segment survival curves from cohort counts (no-censoring setting)."""
    curves = []
    for seg in segments:
        times = np.array([s[0] for s in seg.steps])
        ratios = np.array([s[2] / s[1] for s in seg.steps])
        curves.append(SurvivalCurve(times, np.cumprod(ratios)))
    return curves


def dynamic_curve_from_forest(forest, stream, *, oob_subject_index=None, horizon=None):
    """Chain per-segment forest curves over a covariate stream.

    ``oob_subject_index`` restricts every segment prediction to trees where
    that training subject is out-of-bag.
    """
    tree_indices = None
    if oob_subject_index is not None:
        tree_indices = forest.oob_tree_indices(oob_subject_index)
        if tree_indices.size == 0:
            from .errors import NoOobTreesError

            raise NoOobTreesError(
                f"subject {forest.rows.subject_ids[oob_subject_index]!r} "
                "is in-bag in every tree"
            )
    seg_curves = [
        forest.predict_S_A(x, tree_indices=tree_indices) for x in stream.values
    ]
    return dynamic_curve(seg_curves, stream.change_times, horizon)


def dynamic_curves_for_subjects(forest, subjects, *, oob=False, horizon=None):
    """Dynamic curves for many subjects in one batched prediction pass.

    Every stream segment of every subject becomes one query row.  With
    ``oob=True`` the subjects must be the forest's training subjects in
    training order; subjects without any OOB tree are skipped (their ids
    are absent from the result).
    """
    schema = forest.schema
    queries, owner = [], []
    for i, rec in enumerate(subjects):
        for values in rec.covariates:
            queries.append(schema.encode_vector(values))
        owner.extend([i] * rec.n_obs)
    Xq = np.asarray(queries)
    owner = np.asarray(owner, dtype=np.int64)
    curves = forest.curves_for_queries(Xq, query_subject=owner, oob=oob)
    out = {}
    pos = 0
    for i, rec in enumerate(subjects):
        segs = curves[pos : pos + rec.n_obs]
        pos += rec.n_obs
        if any(c is None for c in segs):
            continue
        out[rec.subject_id] = dynamic_curve(segs, rec.obs_times, horizon)
    return out
