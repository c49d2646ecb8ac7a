"""Survival forests and dynamic survival-curve estimation for
left-truncated right-censored data with time-varying covariates."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .curves import CumHazardCurve, StepCurve, SurvivalCurve
from .data import (
    CovariateSpec,
    CovariateStream,
    PseudoSubject,
    RowArrays,
    Schema,
    SubjectRecord,
    reconstruct_subjects,
    reformat,
    stream_at,
)
from .dynamic import (
    SegmentCounts,
    curve_with_and_without_update,
    dynamic_curve,
    dynamic_curve_from_forest,
    dynamic_estimate,
    dynamic_estimate_recursive,
    empirical_segment_curves,
)
from .estimators import km_censoring, km_ltrc, na_ltrc
from .forest import (
    FittedForest,
    ForestParams,
    default_params,
    fit_forest,
    load_forest,
    mtry_grid,
    proposed_params,
    save_forest,
    tune_mtry,
)
from .metrics import (
    Method,
    brier,
    forest_method,
    ibs,
    ibs_cv,
    integrated_l2,
    ipcw_weight,
    km_method,
    selection_summary,
)
from .replicate import ReplicateResult, run_replicates
from .simulate import (
    DgpConfig,
    SimulatedData,
    TruthRecord,
    calibrate_censoring,
    draw_survival_time,
    generate,
    load_dgp_config,
    load_truth,
    mask_changes,
    save_truth,
    theta_value,
)
from .tree_cif import logrank_scores

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "StepCurve",
    "SurvivalCurve",
    "CumHazardCurve",
    "Schema",
    "CovariateSpec",
    "SubjectRecord",
    "PseudoSubject",
    "CovariateStream",
    "RowArrays",
    "reformat",
    "reconstruct_subjects",
    "stream_at",
    "km_ltrc",
    "na_ltrc",
    "km_censoring",
    "logrank_scores",
    "ForestParams",
    "FittedForest",
    "default_params",
    "proposed_params",
    "mtry_grid",
    "fit_forest",
    "tune_mtry",
    "save_forest",
    "load_forest",
    "SegmentCounts",
    "dynamic_estimate",
    "dynamic_estimate_recursive",
    "dynamic_curve",
    "dynamic_curve_from_forest",
    "curve_with_and_without_update",
    "empirical_segment_curves",
    "Method",
    "brier",
    "ibs",
    "integrated_l2",
    "ipcw_weight",
    "ibs_cv",
    "selection_summary",
    "km_method",
    "forest_method",
    "DgpConfig",
    "SimulatedData",
    "TruthRecord",
    "generate",
    "theta_value",
    "draw_survival_time",
    "calibrate_censoring",
    "mask_changes",
    "load_dgp_config",
    "save_truth",
    "load_truth",
    "run_replicates",
    "ReplicateResult",
]
