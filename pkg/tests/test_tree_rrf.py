import json
import math

import numpy as np
import pytest

from tvsurv.curves import CumHazardCurve
from tvsurv.errors import DegenerateExposureError
from tvsurv.estimators import na_ltrc
from tvsurv.tree_rrf import (
    RrfParams,
    best_rrf_split,
    grow_rrf_tree,
    make_poisson_data,
    node_deviance,
    relative_risk,
)


def numeric_meta(p):
    return np.zeros(p, dtype=np.int8), np.zeros(p, dtype=np.int64)


# ---------------------------------------------------------------------------
# Poisson pseudo-data
# ---------------------------------------------------------------------------


def test_poisson_data_single_jump_baseline():
    baseline = CumHazardCurve([2.0], [1 / 3])
    s, c = make_poisson_data([0.0], [2.0], [1], baseline)
    assert s.tolist() == [pytest.approx(1 / 3)]
    assert c.tolist() == [1.0]


def test_poisson_data_zero_exposure_censored_ok():
    baseline = CumHazardCurve(np.empty(0), np.empty(0))
    s, c = make_poisson_data([0.0], [1.0], [0], baseline)
    assert (s.tolist(), c.tolist()) == ([0.0], [0.0])


def test_poisson_data_interval_difference():
    baseline = CumHazardCurve([1.0, 3.0], [0.25, 0.75])
    s, _ = make_poisson_data([2.0], [4.0], [0], baseline)
    assert s[0] == pytest.approx(0.5)


def test_poisson_data_event_with_zero_exposure_errors():
    baseline = CumHazardCurve(np.empty(0), np.empty(0))
    with pytest.raises(DegenerateExposureError):
        make_poisson_data([0.0], [1.0], [1], baseline)


# ---------------------------------------------------------------------------
# deviance
# ---------------------------------------------------------------------------


def test_deviance_saturated_row():
    assert node_deviance([1.0], [1.0]) == 0.0


def test_deviance_hand_value():
    d = node_deviance([1.0, 1.0], [1.0, 0.0])
    assert d == pytest.approx(2 * math.log(2), rel=1e-14)


def test_deviance_all_censored_is_zero():
    assert node_deviance([0.5, 1.5, 0.1], [0.0, 0.0, 0.0]) == 0.0


def literal_leblanc_deviance(cum_hazard_at_exit, delta):
    """Direct transcription of the full-likelihood deviance residual for a
    node of right-censored rows, with the 0*log(0) convention."""
    H = np.asarray(cum_hazard_at_exit, dtype=float)
    delta = np.asarray(delta, dtype=float)
    phi = delta.sum() / H.sum()
    out = 0.0
    for h_i, d_i in zip(H, delta):
        term = d_i * math.log(d_i / (h_i * phi)) if d_i > 0 else 0.0
        out += 2.0 * (term - (d_i - h_i * phi))
    return out


def test_deviance_identity_right_censored(rng):
    """The LTRC substitution s = H0(R) - H0(L), c = delta reduces to the
    direct relative-risk deviance on right-censored data (L = 0)."""
    for _ in range(100):
        n = int(rng.integers(2, 40))
        R = np.sort(rng.uniform(0.5, 10.0, n))
        delta = (rng.uniform(size=n) < 0.7).astype(np.uint8)
        if not delta.any():
            delta[rng.integers(0, n)] = 1
        L = np.zeros(n)
        baseline = na_ltrc(L, R, delta)
        s, c = make_poisson_data(L, R, delta, baseline)
        direct = literal_leblanc_deviance(baseline(R), delta)
        assert node_deviance(s, c) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_deviance_additivity_and_nonnegativity(rng):
    for _ in range(50):
        n = int(rng.integers(4, 30))
        s = rng.uniform(0.05, 2.0, n)
        c = (rng.uniform(size=n) < 0.5).astype(float)
        d_parent = node_deviance(s, c)
        assert d_parent >= 0.0
        k = int(rng.integers(1, n))
        d_children = node_deviance(s[:k], c[:k]) + node_deviance(s[k:], c[k:])
        assert d_children <= d_parent + 1e-9


# ---------------------------------------------------------------------------
# split search
# ---------------------------------------------------------------------------


def exhaustive_best_split(x, s, c, minbucket):
    """Independent exhaustive enumeration via node_deviance directly."""
    best = (-np.inf, None)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    d_parent = node_deviance(s, c)
    for i in range(len(x) - 1):
        if xs[i] == xs[i + 1]:
            continue
        thr = (xs[i] + xs[i + 1]) / 2
        left = x <= thr
        if left.sum() < minbucket or (~left).sum() < minbucket:
            continue
        red = d_parent - node_deviance(s[left], c[left]) - node_deviance(s[~left], c[~left])
        if red > best[0]:
            best = (red, thr)
    return best


def test_two_cluster_split_found(rng):
    n = 80
    x = np.concatenate([np.zeros(n // 2), np.ones(n // 2)])
    s = np.full(n, 0.5)
    c = np.concatenate(
        [
            (rng.uniform(size=n // 2) < 0.05).astype(float),
            (rng.uniform(size=n // 2) < 0.95).astype(float),
        ]
    )
    kinds, n_levels = numeric_meta(1)
    found = best_rrf_split(x[:, None], s, c, [0], kinds, n_levels, nodesize=5)
    assert found is not None
    rule, red = found
    assert red > 0
    oracle_red, oracle_thr = exhaustive_best_split(x, s, c, 5)
    assert red == pytest.approx(oracle_red, rel=1e-12)
    assert rule.threshold == pytest.approx(oracle_thr)


def test_no_events_no_split():
    n = 40
    x = np.linspace(0, 1, n)
    s = np.full(n, 0.3)
    c = np.zeros(n)
    kinds, n_levels = numeric_meta(1)
    assert best_rrf_split(x[:, None], s, c, [0], kinds, n_levels, nodesize=3) is None


def test_exchangeable_rows_no_split():
    n = 30
    x = np.full(n, 2.0)
    s = np.full(n, 1.0)
    c = np.ones(n)
    kinds, n_levels = numeric_meta(1)
    assert best_rrf_split(x[:, None], s, c, [0], kinds, n_levels, nodesize=3) is None


def test_random_splits_match_exhaustive_oracle(rng):
    kinds, n_levels = numeric_meta(1)
    for _ in range(50):
        n = int(rng.integers(10, 50))
        x = rng.choice(np.arange(6, dtype=float), size=n)
        s = rng.uniform(0.05, 1.5, n)
        c = (rng.uniform(size=n) < 0.5).astype(float)
        found = best_rrf_split(x[:, None], s, c, [0], kinds, n_levels, nodesize=2)
        oracle_red, oracle_thr = exhaustive_best_split(x, s, c, 2)
        if found is None:
            assert oracle_red <= 0 or oracle_thr is None
        else:
            assert found[1] == pytest.approx(oracle_red, rel=1e-10, abs=1e-12)


def test_categorical_split_by_relative_risk_order():
    x = np.repeat([0.0, 1.0, 2.0], 20)
    s = np.ones(60)
    c = np.concatenate([np.zeros(20), np.zeros(20), np.ones(20)])
    kinds = np.array([1], dtype=np.int8)
    n_levels = np.array([3], dtype=np.int64)
    found = best_rrf_split(x[:, None], s, c, [0], kinds, n_levels, nodesize=5)
    assert found is not None
    rule, _ = found
    left = {lev for lev in range(3) if (rule.left_mask >> lev) & 1}
    assert left in ({0, 1}, {2})  # isolates the high-risk level


# ---------------------------------------------------------------------------
# tree growth
# ---------------------------------------------------------------------------


def test_small_node_is_root_only_with_phi():
    X = np.array([[0.0], [1.0], [2.0]])
    s = np.array([0.5, 0.5, 1.0])
    c = np.array([1.0, 0.0, 1.0])
    kinds, n_levels = numeric_meta(1)
    tree = grow_rrf_tree(X, s, c, kinds, n_levels, RrfParams(mtry=1, nodesize=15),
                         np.random.default_rng(0))
    assert tree.n_nodes == 1
    assert tree.payload[0] == pytest.approx(2.0 / 2.0)
    assert relative_risk(s, c) == pytest.approx(1.0)


def test_grow_deterministic(rng):
    n = 100
    X = rng.normal(size=(n, 3))
    s = rng.uniform(0.1, 1.0, n)
    c = (rng.uniform(size=n) < (X[:, 0] > 0) * 0.8 + 0.1).astype(float)
    kinds, n_levels = numeric_meta(3)
    params = RrfParams(mtry=2, nodesize=8)
    t1 = grow_rrf_tree(X, s, c, kinds, n_levels, params, np.random.default_rng(5))
    t2 = grow_rrf_tree(X, s, c, kinds, n_levels, params, np.random.default_rng(5))
    assert json.dumps(t1.to_json_obj()) == json.dumps(t2.to_json_obj())


def test_root_split_matches_oracle_and_conserves_sums(rng):
    n = 90
    X = np.concatenate([np.zeros(45), np.ones(45)])[:, None]
    s = np.full(n, 0.4)
    c = np.concatenate(
        [(rng.uniform(size=45) < 0.1).astype(float), (rng.uniform(size=45) < 0.9).astype(float)]
    )
    kinds, n_levels = numeric_meta(1)
    tree = grow_rrf_tree(X, s, c, kinds, n_levels, RrfParams(mtry=1, nodesize=10),
                         np.random.default_rng(2))
    assert tree.feature[0] == 0
    oracle_red, oracle_thr = exhaustive_best_split(X[:, 0], s, c, 10)
    assert tree.threshold[0] == pytest.approx(oracle_thr)
    # parent relative risk combines children by conserved (sum c, sum s)
    left = X[:, 0] <= tree.threshold[0]
    phi_parent = relative_risk(s, c)
    assert phi_parent == pytest.approx(
        (c[left].sum() + c[~left].sum()) / (s[left].sum() + s[~left].sum())
    )
    assert tree.payload[0] == pytest.approx(phi_parent)
