"""Shared fixtures and independent oracles.

Oracles deliberately use brute-force enumeration (and exact rational
arithmetic where it matters) so they stay independent of the library's
algorithms.
"""
from fractions import Fraction

import numpy as np
import pytest


def oracle_event_table(L, R, delta, weights=None):
    """Brute-force LTRC event table: loop every row for every event time.

    Counts are exact (Fraction for weights, int for unit weights); risk set
    convention L < t <= R.
    """
    rows = list(zip(L, R, delta))
    if weights is None:
        weights = [1] * len(rows)
    times = sorted({r for (_, r, d) in rows if d})
    d_out, y_out = [], []
    for t in times:
        d = sum(Fraction(w) for (_, r, dd), w in zip(rows, weights) if dd and r == t)
        y = sum(Fraction(w) for (l, r, _), w in zip(rows, weights) if l < t <= r)
        d_out.append(d)
        y_out.append(y)
    return times, d_out, y_out


def oracle_km_values(L, R, delta, weights=None):
    """Survival values at event times from the brute-force table.

    The product multiplies float factors in time order, the same canonical
    arithmetic as the implementation, so agreement on exact (d, Y) tables
    implies bit-identical curves.
    """
    times, d, y = oracle_event_table(L, R, delta, weights)
    out, s = [], 1.0
    for dk, yk in zip(d, y):
        s *= max(1.0 - float(dk) / float(yk), 0.0)
        out.append(s)
    return times, out


def oracle_na_values(L, R, delta, weights=None):
    times, d, y = oracle_event_table(L, R, delta, weights)
    out, acc = [], 0.0
    for dk, yk in zip(d, y):
        acc += float(dk) / float(yk)
        out.append(acc)
    return times, out


def random_ltrc_rows(rng, n_max=30, tie_prob=0.35, truncation=True):
    """A random LTRC fixture with deliberate ties on a small time grid."""
    n = int(rng.integers(1, n_max + 1))
    grid = np.arange(1, 13, dtype=float)
    L = rng.choice(grid[:-1], size=n) if truncation else np.zeros(n)
    if truncation:
        L = np.where(rng.uniform(size=n) < 0.5, 0.0, L)
    width = rng.choice(np.arange(1, 6, dtype=float), size=n)
    R = L + width
    if tie_prob and n > 1:
        # clone some exit times to force tied events
        k = int(rng.integers(0, n))
        if k:
            idx = rng.integers(0, n, size=k)
            R[idx] = R[int(rng.integers(0, n))]
            R = np.maximum(R, L + 1.0)
    delta = (rng.uniform(size=n) < 0.6).astype(np.uint8)
    return L, R, delta


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
