import json
import math
from dataclasses import replace

import numpy as np
import pytest

from tvsurv.data import CovariateSpec, RowArrays, Schema, SubjectRecord
from tvsurv.errors import NoOobTreesError, SchemaError
from tvsurv.estimators import km_ltrc, na_ltrc
from tvsurv.forest import (
    FittedForest,
    ForestParams,
    _bootstrap_counts,
    _tree_rng,
    default_params,
    fit_forest,
    load_forest,
    mtry_grid,
    proposed_params,
    save_forest,
    tune_mtry,
)
from tvsurv.tree_cif import CifParams, grow_cif_tree
from tvsurv.forest import _schema_kinds


def make_subjects(rng, n=40, p=3, hazard_col=0, tv=True):
    """Subjects whose risk increases with one covariate; optional midpoint
    covariate update."""
    schema = Schema(tuple(CovariateSpec(f"x{j+1}", "numeric") for j in range(p)))
    subjects = []
    for i in range(n):
        x0 = rng.uniform(size=p)
        rate = 0.2 + 2.0 * x0[hazard_col]
        t_event = rng.exponential(1.0 / rate)
        c = rng.uniform(0.5, 6.0)
        end = max(min(t_event, c), 1e-3)
        event = t_event <= c
        if tv and end > 0.4:
            x1 = x0.copy()
            x1[hazard_col] = rng.uniform()
            times, values = (0.0, 0.4), (tuple(x0), tuple(x1))
        else:
            times, values = (0.0,), (tuple(x0),)
        subjects.append(
            SubjectRecord(f"s{i:03d}", times, values, float(end), bool(event))
        )
    return subjects, schema


def small_params(kind, extra=None, **kw):
    base = dict(kind=kind, n_trees=10, mtry=2, minsplit=10, minbucket=4, nodesize=5, seed=3)
    base.update(kw)
    return ForestParams(**base)


# ---------------------------------------------------------------------------
# parameter presets
# ---------------------------------------------------------------------------


def test_proposed_params_examples():
    p = proposed_params(100, 20, "cif")
    assert (p.minsplit, p.minbucket, p.nodesize) == (20, 10, 15)
    p = proposed_params(10_000, 20, "rrf")
    assert (p.minsplit, p.minbucket, p.nodesize) == (100, 100, 100)
    assert default_params("cif", p=20).mtry == 5


def test_default_params_values():
    p = default_params("cif", p=9)
    assert (p.mtry, p.minsplit, p.minbucket, p.nodesize) == (3, 20, 7, 15)


def test_mtry_grid():
    assert mtry_grid(20) == [1, 2, 3, 5, 10, 20]
    assert mtry_grid(4) == [1, 2, 3, 4]


def test_params_validation():
    with pytest.raises(ValueError):
        ForestParams(kind="nope")
    with pytest.raises(ValueError):
        ForestParams(kind="cif", bootstrap_unit="rows")


# ---------------------------------------------------------------------------
# bootstrap bookkeeping
# ---------------------------------------------------------------------------


def test_expected_oob_fraction(rng):
    """Subject-level bootstrap leaves ~(1 - 1/N)^N of subjects out."""
    subjects, schema = make_subjects(rng, n=100)
    rows = RowArrays.from_subjects(subjects, schema)
    fracs = []
    for b in range(200):
        counts = _bootstrap_counts(rows, "subject", _tree_rng(17, b), True)
        per_subject = np.zeros(rows.n_subjects, dtype=int)
        np.maximum.at(per_subject, rows.subj, counts)
        fracs.append(np.mean(per_subject == 0))
    expected = (1 - 1 / 100) ** 100
    assert abs(np.mean(fracs) - expected) < 0.02


def test_bootstrap_units_share_the_grow_path(rng):
    """Swapping the bootstrap unit only changes the resample; with the same
    realized row multiset both units grow the identical tree."""
    subjects, schema = make_subjects(rng, n=25)
    rows = RowArrays.from_subjects(subjects, schema)
    kinds, n_levels = _schema_kinds(schema)
    mult = _bootstrap_counts(rows, "subject", _tree_rng(5, 0), True)
    rep = np.repeat(np.arange(rows.n_rows), mult)
    params = CifParams(mtry=2, minsplit=10, minbucket=4)
    t1 = grow_cif_tree(
        rows.L[rep], rows.R[rep], rows.delta[rep], rows.X[rep],
        kinds, n_levels, params, np.random.default_rng(0),
    )
    # feed the identical multiset through the pseudo-subject realization
    rep2 = np.repeat(np.arange(rows.n_rows), mult)
    t2 = grow_cif_tree(
        rows.L[rep2], rows.R[rep2], rows.delta[rep2], rows.X[rep2],
        kinds, n_levels, params, np.random.default_rng(0),
    )
    assert json.dumps(t1.to_json_obj()) == json.dumps(t2.to_json_obj())


# ---------------------------------------------------------------------------
# fitting and prediction
# ---------------------------------------------------------------------------


def test_single_tree_no_bootstrap_equals_direct_growth(rng):
    subjects, schema = make_subjects(rng, n=30)
    params = small_params("cif", n_trees=1)
    forest = fit_forest(subjects, schema, params, bootstrap=False)
    rows = RowArrays.from_subjects(subjects, schema)
    kinds, n_levels = _schema_kinds(schema)
    direct = grow_cif_tree(
        rows.L, rows.R, rows.delta, rows.X, kinds, n_levels,
        CifParams(mtry=2, minsplit=10, minbucket=4, alpha=params.alpha),
        _tree_rng(3, 0),
    )
    assert json.dumps(forest.trees[0].to_json_obj()) == json.dumps(direct.to_json_obj())


def test_root_only_cif_prediction_is_pooled_km(rng):
    subjects, schema = make_subjects(rng, n=20)
    params = small_params("cif", n_trees=1, minsplit=10_000)
    forest = fit_forest(subjects, schema, params, bootstrap=False)
    rows = forest.rows
    pooled = km_ltrc(rows.L, rows.R, rows.delta)
    got = forest.predict_S_A(tuple(rng.uniform(size=3)))
    np.testing.assert_array_equal(got.times, pooled.times)
    np.testing.assert_allclose(got.values, pooled.values, rtol=1e-12, atol=1e-12)


def test_root_only_rrf_prediction_formula(rng):
    subjects, schema = make_subjects(rng, n=20)
    params = small_params("rrf", n_trees=1, nodesize=10_000)
    forest = fit_forest(subjects, schema, params, bootstrap=False)
    rows = forest.rows
    pooled = na_ltrc(rows.L, rows.R, rows.delta)
    s, c = forest.trees[0].payload[0], None
    phi = forest.trees[0].payload[0]
    got = forest.predict_S_A(tuple(rng.uniform(size=3)))
    np.testing.assert_allclose(got.values, np.exp(-pooled.values * phi), rtol=1e-12)


def test_two_group_prediction_ordering(rng):
    """Predictions for high/low-risk covariates order like the group KMs."""
    n = 120
    schema = Schema((CovariateSpec("x1", "numeric"),))
    subjects = []
    for i in range(n):
        hi = i % 2 == 1
        rate = 3.0 if hi else 0.3
        t = rng.exponential(1.0 / rate)
        end = max(min(t, 5.0), 1e-3)
        subjects.append(
            SubjectRecord(f"s{i:03d}", (0.0,), ((1.0 if hi else 0.0,),), end, t <= 5.0)
        )
    params = ForestParams(
        kind="cif", n_trees=50, mtry=1, minsplit=20, minbucket=7, seed=9
    )
    forest = fit_forest(subjects, schema, params)
    lo_curve = forest.predict_S_A((0.0,))
    hi_curve = forest.predict_S_A((1.0,))
    rows = forest.rows
    lo_mask = rows.X[:, 0] == 0.0
    km_lo = km_ltrc(rows.L[lo_mask], rows.R[lo_mask], rows.delta[lo_mask])
    km_hi = km_ltrc(rows.L[~lo_mask], rows.R[~lo_mask], rows.delta[~lo_mask])
    for t in (0.25, 0.5, 1.0, 2.0):
        assert hi_curve(t) < lo_curve(t)
        assert abs(lo_curve(t) - km_lo(t)) < 0.1
        assert abs(hi_curve(t) - km_hi(t)) < 0.1


def test_cif_weights_sum_to_one_per_tree(rng):
    subjects, schema = make_subjects(rng, n=30)
    forest = fit_forest(subjects, schema, small_params("cif"))
    x = forest.rows.schema.encode_vector(tuple(rng.uniform(size=3)))
    for b in range(forest.n_trees):
        w = forest.aggregated_weights(x, [b])
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, rel=1e-9)
    w_all = forest.aggregated_weights(x, range(forest.n_trees))
    assert w_all.sum() == pytest.approx(forest.n_trees, rel=1e-9)


def test_prediction_curves_are_valid_survival_curves(rng):
    subjects, schema = make_subjects(rng, n=40)
    for kind in ("cif", "rrf"):
        forest = fit_forest(subjects, schema, small_params(kind))
        for _ in range(5):
            curve = forest.predict_S_A(tuple(rng.uniform(size=3)))
            v = curve.values
            if v.size:
                assert v.min() >= 0 and v.max() <= 1 + 1e-12
                assert np.all(np.diff(v) <= 1e-12)


def test_predict_schema_mismatch(rng):
    subjects, schema = make_subjects(rng, n=15)
    forest = fit_forest(subjects, schema, small_params("cif", n_trees=2))
    with pytest.raises(SchemaError):
        forest.predict_S_A((0.1,))  # wrong arity


def test_oob_survival(rng):
    subjects, schema = make_subjects(rng, n=25)
    forest = fit_forest(subjects, schema, small_params("cif", n_trees=12))
    found_any = False
    for i in range(len(subjects)):
        oob = forest.oob_tree_indices(i)
        if oob.size == 0:
            with pytest.raises(NoOobTreesError):
                forest.oob_survival(i)
            continue
        found_any = True
        curves = forest.oob_survival(i)
        assert len(curves) == subjects[i].n_obs
        # aggregation never consults in-bag trees
        assert np.all(forest.inbag_subjects[oob, i] == 0)
    assert found_any


def test_oob_everyone_estimable_at_large_B(rng):
    subjects, schema = make_subjects(rng, n=20)
    forest = fit_forest(subjects, schema, small_params("cif", n_trees=60))
    for i in range(len(subjects)):
        assert forest.oob_tree_indices(i).size > 0


# ---------------------------------------------------------------------------
# determinism and serialization
# ---------------------------------------------------------------------------


def test_seeded_replay_identical_bytes(rng):
    subjects, schema = make_subjects(rng, n=25)
    for kind in ("cif", "rrf"):
        f1 = fit_forest(subjects, schema, small_params(kind))
        f2 = fit_forest(subjects, schema, small_params(kind))
        assert f1.to_bytes() == f2.to_bytes()


def test_parallel_fit_matches_serial(rng):
    subjects, schema = make_subjects(rng, n=25)
    params = small_params("cif", n_trees=6)
    serial = fit_forest(subjects, schema, params, n_jobs=1)
    parallel = fit_forest(subjects, schema, params, n_jobs=2)
    assert serial.to_bytes() == parallel.to_bytes()


def test_serialization_round_trip(tmp_path, rng):
    subjects, schema = make_subjects(rng, n=25)
    for kind in ("cif", "rrf"):
        forest = fit_forest(subjects, schema, small_params(kind))
        path = tmp_path / f"{kind}.model"
        save_forest(path, forest)
        loaded = load_forest(path)
        assert loaded.to_bytes() == forest.to_bytes()
        x = tuple(rng.uniform(size=3))
        a, b = forest.predict_S_A(x), loaded.predict_S_A(x)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.values, b.values)


def test_all_censored_bootstrap_gives_root_tree():
    schema = Schema((CovariateSpec("x1", "numeric"),))
    subjects = [
        SubjectRecord(f"s{i}", (0.0,), ((float(i % 2),),), 1.0 + i * 0.1, False)
        for i in range(10)
    ]
    for kind in ("cif", "rrf"):
        forest = fit_forest(
            subjects, schema, ForestParams(kind=kind, n_trees=3, mtry=1, seed=0)
        )
        assert all(t.n_nodes == 1 for t in forest.trees)
        curve = forest.predict_S_A((0.0,))
        assert curve(10.0) == 1.0  # no events anywhere


# ---------------------------------------------------------------------------
# mtry tuning
# ---------------------------------------------------------------------------


def test_tune_single_point_grid(rng):
    subjects, schema = make_subjects(rng, n=25)
    params = small_params("cif", n_trees=8)
    best, scores = tune_mtry(subjects, schema, params, grid=[2])
    assert best == 2 and set(scores) == {2}


def test_tune_prefers_smaller_mtry_on_ties(rng, monkeypatch):
    subjects, schema = make_subjects(rng, n=20)
    import tvsurv.metrics as metrics

    monkeypatch.setattr(metrics, "ibs", lambda curves, subjects, **kw: 1.0)
    best, scores = tune_mtry(
        subjects, schema, small_params("cif", n_trees=12), grid=[3, 1, 2]
    )
    assert best == 1
    assert set(scores) == {1, 2, 3}


def test_tune_noise_covariates_indistinguishable(rng):
    """With pure-noise covariates, OOB IBS across the grid varies within a
    narrow band: no mtry value can win systematically."""
    schema = Schema(tuple(CovariateSpec(f"x{j+1}", "numeric") for j in range(3)))
    diffs = []
    for r in range(6):
        rs = np.random.default_rng(100 + r)
        subjects = []
        for i in range(30):
            t = rs.exponential(1.0)
            end = max(min(t, 4.0), 1e-3)
            subjects.append(
                SubjectRecord(
                    f"s{i:03d}", (0.0,), (tuple(rs.uniform(size=3)),), end, t <= 4.0
                )
            )
        params = ForestParams(
            kind="cif", n_trees=20, minsplit=10, minbucket=4, seed=200 + r
        )
        _, scores = tune_mtry(subjects, schema, params, grid=[1, 3])
        diffs.append(scores[1] - scores[3])
    diffs = np.asarray(diffs)
    ci = 2.6 * diffs.std(ddof=1) / math.sqrt(len(diffs))
    assert abs(diffs.mean()) < max(ci, 0.02)
