"""Right-continuous step curves: survival functions and cumulative hazards.

Curves are stored sparsely as (jump time, value-after-jump) pairs plus a
baseline value holding before the first jump.  Evaluation between jumps is
a binary search.
"""
from __future__ import annotations

import numpy as np

_TOL = 1e-9


class StepCurve:
    """A right-continuous step function t -> value.

    ``values[k]`` holds on ``[times[k], times[k+1])``; ``baseline`` holds on
    ``(-inf, times[0])``.  Immutable after construction.
    """

    __slots__ = ("times", "values", "baseline")

    def __init__(self, times, values, baseline):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-D and equal length")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("jump times must be strictly increasing")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "baseline", float(baseline))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __call__(self, t):
        if self.values.size == 0:
            if np.isscalar(t) or np.ndim(t) == 0:
                return self.baseline
            return np.full(np.shape(t), self.baseline)
        idx = np.searchsorted(self.times, t, side="right")
        if np.isscalar(t) or np.ndim(t) == 0:
            return self.baseline if idx == 0 else float(self.values[idx - 1])
        return np.where(idx > 0, self.values[np.maximum(idx - 1, 0)], self.baseline)

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.baseline == other.baseline
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return (
            f"{type(self).__name__}(n_jumps={self.times.size}, "
            f"baseline={self.baseline})"
        )

    def jumps_within(self, lo, hi):
        """Jump times t with lo < t <= hi."""
        i = np.searchsorted(self.times, lo, side="right")
        j = np.searchsorted(self.times, hi, side="right")
        return self.times[i:j]


class SurvivalCurve(StepCurve):
    """Non-increasing step function with values in [0, 1], S(0-) = 1.

    ``event_counts`` / ``risk_sizes`` optionally carry the (d_k, Y_k) table
    the curve was built from; they are diagnostics and do not affect
    evaluation.
    """

    __slots__ = ("event_counts", "risk_sizes")

    def __init__(self, times, values, baseline=1.0, event_counts=None, risk_sizes=None):
        super().__init__(times, values, baseline)
        v = self.values
        if v.size:
            if v.min() < -_TOL or v.max() > baseline + _TOL:
                raise ValueError("survival values must lie in [0, 1]")
            if np.any(np.diff(np.concatenate(([baseline], v))) > _TOL):
                raise ValueError("survival values must be non-increasing")
        for name, arr in (("event_counts", event_counts), ("risk_sizes", risk_sizes)):
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                arr.flags.writeable = False
            object.__setattr__(self, name, arr)


class CumHazardCurve(StepCurve):
    """Non-decreasing, non-negative step function with H(0-) = 0."""

    __slots__ = ()

    def __init__(self, times, values, baseline=0.0):
        super().__init__(times, values, baseline)
        v = self.values
        if v.size:
            if v.min() < -_TOL:
                raise ValueError("cumulative hazard must be non-negative")
            if np.any(np.diff(np.concatenate(([baseline], v))) < -_TOL):
                raise ValueError("cumulative hazard must be non-decreasing")
