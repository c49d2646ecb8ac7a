"""Backend equivalence: the compiled kernels must be bit-identical to the
pure numpy reference on arbitrary inputs."""
import math

import numpy as np
import pytest

from tvsurv._kernels import _pure

from conftest import random_ltrc_rows

_fast = pytest.importorskip("tvsurv._kernels._fast")


def same_triple(a, b):
    return all(
        x == y or (math.isnan(x) and math.isnan(y)) for x, y in zip(a, b)
    ) and len(a) == len(b)


def test_backend_is_reported():
    import tvsurv._kernels as k

    assert k.BACKEND in ("pure", "fast")


def test_event_table_identical(rng):
    for i in range(200):
        L, R, d = random_ltrc_rows(rng)
        w = None if i % 2 else rng.uniform(0.0, 2.0, L.size)
        a = _pure.ltrc_event_table(L, R, d, w)
        b = _fast.ltrc_event_table(L, R, d, w)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def test_logrank_scores_identical(rng):
    for _ in range(200):
        L, R, d = random_ltrc_rows(rng)
        np.testing.assert_array_equal(
            _pure.logrank_scores(L, R, d), _fast.logrank_scores(L, R, d)
        )


def test_cif_best_cut_identical(rng):
    for _ in range(300):
        n = int(rng.integers(2, 60))
        x = rng.choice(np.arange(8, dtype=float), size=n)
        U = rng.normal(size=n)
        mb = int(rng.integers(1, 6))
        a = _pure.cif_best_cut(x, U, mb)
        b = _fast.cif_best_cut(x, U, mb)
        assert same_triple(a, b)


def test_rrf_best_cut_identical(rng):
    for _ in range(300):
        n = int(rng.integers(2, 60))
        x = rng.choice(np.arange(8, dtype=float), size=n)
        s = rng.uniform(0.0, 2.0, size=n)
        c = (rng.uniform(size=n) < 0.4).astype(float)
        s[c > 0] = np.maximum(s[c > 0], 1e-3)
        mb = int(rng.integers(1, 6))
        a = _pure.rrf_best_cut(x, s, c, mb)
        b = _fast.rrf_best_cut(x, s, c, mb)
        assert same_triple(a, b)


def test_degenerate_inputs_identical():
    # constant covariate, constant scores, tiny nodes
    x = np.array([1.0, 1.0, 1.0])
    U = np.array([0.5, 0.5, 0.5])
    assert same_triple(_pure.cif_best_cut(x, U, 1), _fast.cif_best_cut(x, U, 1))
    s = np.array([1.0, 1.0])
    c = np.array([0.0, 0.0])
    assert same_triple(
        _pure.rrf_best_cut(np.array([1.0, 2.0]), s, c, 1),
        _fast.rrf_best_cut(np.array([1.0, 2.0]), s, c, 1),
    )
