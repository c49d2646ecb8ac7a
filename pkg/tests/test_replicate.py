import numpy as np
import pytest

from tvsurv.metrics import forest_method, km_method
from tvsurv.replicate import run_replicates
from tvsurv.simulate import DgpConfig


def tiny_config(**kw):
    base = dict(
        n_subjects=15,
        scenario="2TI+4TV",
        relationship="linear",
        hazard="PH",
        snr="high",
        censor_rate=0.0,
        m=3,
        seed=2,
    )
    base.update(kw)
    return DgpConfig(**base)


def tiny_methods():
    return [
        km_method(),
        forest_method("rrf", settings="proposed", n_trees=5, name="rrf"),
    ]


def test_replicates_shapes_and_km_column():
    res = run_replicates(tiny_config(), tiny_methods(), n_replicates=2, seed=3)
    assert res.l2.shape == (2, 2)
    assert res.method_names == ("km", "rrf")
    # the km method column reuses the benchmark fit exactly
    np.testing.assert_array_equal(res.l2[:, 0], res.l2_km)
    np.testing.assert_array_equal(res.improvements[:, 0], np.zeros(2))
    stats = res.improvement_stats()
    assert set(stats) == {"km", "rrf"}


def test_replicates_deterministic_and_parallel_equal():
    a = run_replicates(tiny_config(), tiny_methods(), n_replicates=2, seed=9)
    b = run_replicates(tiny_config(), tiny_methods(), n_replicates=2, seed=9)
    np.testing.assert_array_equal(a.l2, b.l2)
    c = run_replicates(tiny_config(), tiny_methods(), n_replicates=2, seed=9, n_jobs=2)
    np.testing.assert_array_equal(a.l2, c.l2)
    np.testing.assert_array_equal(a.l2_km, c.l2_km)


def test_replicates_with_cv_selection():
    res = run_replicates(
        tiny_config(), tiny_methods(), n_replicates=2, seed=4, cv_k=3
    )
    assert res.choices.shape == (2,)
    assert all(0 <= c < 2 for c in res.choices)
    summary = res.selection_stats()
    assert 0.0 <= summary.p_best <= 1.0


def test_replicates_validation():
    with pytest.raises(ValueError):
        run_replicates(tiny_config(), tiny_methods(), n_replicates=0)
    with pytest.raises(ValueError):
        run_replicates(
            tiny_config(), [km_method(), km_method()], n_replicates=1
        )
