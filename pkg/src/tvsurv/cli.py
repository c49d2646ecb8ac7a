"""Command-line frontend: simulate / fit / predict / tune-mtry / evaluate /
cv-select / replicate.

Every emitted artifact embeds the config hash and seed; all randomness
flows from a single root seed through named derivation paths, so outputs
are reproducible bit-for-bit.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from importlib import resources

import numpy as np

from . import __version__
from .data import (
    Schema,
    load_schema,
    read_long_csv,
    read_stream_csv,
    read_wide_csv,
    save_schema,
    write_long_csv,
)
from .dynamic import (
    SegmentCounts,
    curve_with_and_without_update,
    dynamic_curve,
    dynamic_curve_from_forest,
    empirical_segment_curves,
)
from .errors import ConfigError, MalformedRecordError, SchemaError, TvsurvError
from .estimators import km_ltrc
from .forest import (
    ForestParams,
    default_params,
    fit_forest,
    load_forest,
    mtry_grid,
    proposed_params,
    save_forest,
    tune_mtry,
)
from .metrics import brier, forest_method, ibs, ibs_cv, integrated_l2, km_method
from .replicate import run_replicates
from .simulate import (
    DgpConfig,
    config_hash,
    generate,
    load_dgp_config,
    load_truth,
    save_truth,
)

EXIT_SCHEMA = 3
EXIT_CONFIG = 4
EXIT_DATA = 5


def _emit_json(obj, path=None):
    text = json.dumps(obj, sort_keys=True, indent=2)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _read_subjects(path, schema):
    with open(path) as f:
        for line in f:
            if line.startswith("#"):
                continue
            header = line.strip().split(",")
            break
    if header[:3] == ["id", "time", "event"]:
        return read_wide_csv(path, schema)
    return read_long_csv(path, schema)


def _load_schema_arg(args):
    if args.schema is None:
        raise SchemaError("--schema is required for CSV data")
    return load_schema(args.schema)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _cmd_simulate(args):
    config = load_dgp_config(args.config)
    if args.subjects:
        config = replace(config, n_subjects=args.subjects)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    data = generate(config)
    tag = f"tvsurv simulate config_hash={config_hash(config)} seed={config.seed}"
    write_long_csv(args.out, data.subjects, data.schema, header_comment=tag)
    schema_path = args.schema or f"{args.out}.schema.json"
    save_schema(schema_path, data.schema)
    if args.truth:
        save_truth(args.truth, data)
    n_events = sum(1 for s in data.subjects if s.event)
    summary = {
        "config_hash": config_hash(config),
        "seed": config.seed,
        "subjects": len(data.subjects),
        "pseudo_subjects": sum(s.n_obs for s in data.subjects),
        "events": n_events,
        "censored_fraction": 1.0 - n_events / len(data.subjects),
        "horizon": data.horizon,
        "out": args.out,
        "schema": schema_path,
        "truth": args.truth,
    }
    if args.json:
        _emit_json(summary)
    else:
        print(
            f"wrote {summary['subjects']} subjects "
            f"({summary['pseudo_subjects']} pseudo-subjects, "
            f"{summary['censored_fraction']:.1%} censored) to {args.out}"
        )
    return 0


# ---------------------------------------------------------------------------
# fit / tune
# ---------------------------------------------------------------------------


def _build_params(args, n_rows, p):
    if args.params == "proposed":
        params = proposed_params(n_rows, p, args.model, n_trees=args.trees, seed=args.seed)
    else:
        params = replace(default_params(args.model, p, n_trees=args.trees), seed=args.seed)
    if args.bootstrap:
        params = replace(params, bootstrap_unit=args.bootstrap)
    return params


def _cmd_fit(args):
    schema = _load_schema_arg(args)
    subjects = _read_subjects(args.train, schema)
    n_rows = sum(s.n_obs for s in subjects)
    params = _build_params(args, n_rows, schema.p)
    tuned = None
    if args.mtry == "tune":
        best, scores = tune_mtry(subjects, schema, params, n_jobs=args.jobs)
        params = replace(params, mtry=best)
        tuned = {str(k): v for k, v in scores.items()}
    elif args.mtry is not None:
        params = replace(params, mtry=int(args.mtry))
    forest = fit_forest(subjects, schema, params, n_jobs=args.jobs)
    save_forest(args.out, forest)
    summary = {
        "model": args.model,
        "params": asdict(forest.params),
        "n_subjects": len(subjects),
        "n_pseudo_subjects": n_rows,
        "out": args.out,
    }
    if tuned is not None:
        summary["tuned_oob_ibs"] = tuned
    if args.json:
        _emit_json(summary)
    else:
        print(f"fitted {args.model} forest ({forest.n_trees} trees) -> {args.out}")
    return 0


def _cmd_tune_mtry(args):
    schema = _load_schema_arg(args)
    subjects = _read_subjects(args.train, schema)
    n_rows = sum(s.n_obs for s in subjects)
    params = _build_params(args, n_rows, schema.p)
    grid = [int(g) for g in args.grid.split(",")] if args.grid else mtry_grid(schema.p)
    best, scores = tune_mtry(subjects, schema, params, grid=grid, n_jobs=args.jobs)
    summary = {
        "model": args.model,
        "grid": grid,
        "oob_ibs": {str(k): v for k, v in scores.items()},
        "best_mtry": best,
        "seed": args.seed,
    }
    if args.plot:
        _plot_tuning(scores, args.plot)
        summary["plot"] = args.plot
    if args.json:
        _emit_json(summary)
    else:
        for g in grid:
            marker = " <- best" if g == best else ""
            print(f"mtry={g}: OOB IBS {scores[g]:.6f}{marker}")
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def _demo_fixture():
    with resources.files("tvsurv.fixtures").joinpath("covid_demo.json").open() as f:
        return json.load(f)


def _demo_curves(branch):
    fixture = _demo_fixture()
    if branch not in fixture["branches"]:
        raise ConfigError(
            f"unknown demo branch {branch!r}; available: {sorted(fixture['branches'])}"
        )
    spec = fixture["branches"][branch]
    segments = [
        SegmentCounts(start=s["start"], steps=tuple(tuple(x) for x in s["steps"]))
        for s in spec["segments"]
    ]
    curves = empirical_segment_curves(segments)
    return curves, [float(t) for t in spec["stream_times"]]


def _write_curve_csv(path, curve, change_times, comment):
    change_times = np.asarray(change_times)
    with open(path, "w", newline="") as f:
        f.write(f"# {comment}\n")
        writer = csv.writer(f)
        writer.writerow(["time", "survival", "segment_index"])
        for t in curve.times:
            seg = int(np.searchsorted(change_times, t, side="right")) - 1
            writer.writerow([repr(float(t)), repr(float(curve(t))), seg])


def _cmd_predict(args):
    if args.demo_branch:
        seg_curves, change_times = _demo_curves(args.demo_branch)
        curve = dynamic_curve(seg_curves, change_times)
        comment = f"tvsurv predict demo_branch={args.demo_branch}"
    else:
        if not (args.model and args.stream):
            raise ConfigError("predict needs --model and --stream (or --demo-branch)")
        forest = load_forest(args.model)
        stream = read_stream_csv(args.stream, forest.schema)
        curve = dynamic_curve_from_forest(forest, stream)
        seg_curves = None
        if args.plot:
            seg_curves = [forest.predict_S_A(x) for x in stream.values]
        change_times = stream.change_times
        comment = f"tvsurv predict model={args.model} seed={forest.params.seed}"
    _write_curve_csv(args.out, curve, change_times, comment)
    if args.plot:
        _plot_dynamic(seg_curves, change_times, args.plot)
    if args.json:
        _emit_json(
            {
                "out": args.out,
                "eval_times": [float(t) for t in curve.times],
                "survival": [float(v) for v in curve.values],
            }
        )
    else:
        print(f"wrote dynamic curve ({curve.times.size} grid points) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / cv-select
# ---------------------------------------------------------------------------


class _OracleCurve:
    """Adapter exposing a truth record as an estimator curve."""

    def __init__(self, truth):
        self._truth = truth

    def __call__(self, t):
        return self._truth.survival(t)


def _estimator_curves(args, subjects, schema):
    if args.oracle:
        truths = load_truth(args.truth)
        return {rec.subject_id: _OracleCurve(truths[rec.subject_id]) for rec in subjects}
    if args.km:
        predictor = km_method().fit(subjects, schema, 0)
        return {rec.subject_id: predictor(rec) for rec in subjects}
    if not args.model:
        raise ConfigError("evaluate needs --model, --km, or --oracle")
    forest = load_forest(args.model)
    return {
        rec.subject_id: dynamic_curve_from_forest(forest, rec.stream())
        for rec in subjects
    }


def _cmd_evaluate(args):
    schema = _load_schema_arg(args)
    subjects = _read_subjects(args.data, schema)
    curves = _estimator_curves(args, subjects, schema)
    if args.metric == "l2":
        if not args.truth:
            raise ConfigError("--metric l2 needs --truth")
        truths = load_truth(args.truth)
        value = integrated_l2(truths, curves, subjects)
    elif args.metric == "ibs":
        value = ibs(curves, subjects)
    else:
        if args.t is None:
            raise ConfigError("--metric brier needs --t")
        value = brier(args.t, curves, subjects)
    out = {"metric": args.metric, "value": value, "n_subjects": len(subjects)}
    if args.t is not None:
        out["t"] = args.t
    if args.json:
        _emit_json(out)
    else:
        print(f"{args.metric} = {value:.6g}")
    return 0


def _parse_methods(spec, settings, trees, jobs):
    methods = []
    for name in spec.split(","):
        name = name.strip()
        if name == "km":
            methods.append(km_method())
        elif name in ("cif", "rrf"):
            methods.append(
                forest_method(name, settings=settings, n_trees=trees, name=name, n_jobs=jobs)
            )
        else:
            raise ConfigError(f"unknown method {name!r} (expected km, cif, rrf)")
    return methods


def _cmd_cv_select(args):
    schema = _load_schema_arg(args)
    subjects = _read_subjects(args.data, schema)
    methods = _parse_methods(args.methods, args.settings, args.trees, args.jobs)
    result = ibs_cv(subjects, schema, methods, k=args.k, seed=args.seed)
    out = {
        "errors": result.errors,
        "chosen": result.chosen,
        "k": args.k,
        "k_effective": result.k_effective,
        "seed": args.seed,
    }
    if args.json:
        _emit_json(out)
    else:
        for name, err in result.errors.items():
            marker = " <- chosen" if name == result.chosen else ""
            print(f"{name}: IBS CV error {err:.6f}{marker}")
    return 0


# ---------------------------------------------------------------------------
# replicate
# ---------------------------------------------------------------------------


def _cmd_replicate(args):
    import os

    config = load_dgp_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    methods = _parse_methods(args.methods, args.settings, args.trees, args.jobs)
    result = run_replicates(
        config,
        methods,
        n_replicates=args.reps,
        seed=config.seed,
        cv_k=args.cv,
        n_jobs=args.jobs,
    )
    os.makedirs(args.out, exist_ok=True)
    tag = f"tvsurv replicate config_hash={config_hash(config)} seed={config.seed}"
    stats = result.improvement_stats()

    with open(os.path.join(args.out, "improvements.csv"), "w", newline="") as f:
        f.write(f"# {tag}\n")
        writer = csv.writer(f)
        writer.writerow(["method", "mean_improvement_vs_km", "sd", "n_replicates"])
        for name in result.method_names:
            mean, sd = stats[name]
            writer.writerow([name, repr(mean), repr(sd), args.reps])

    with open(os.path.join(args.out, "replicates.csv"), "w", newline="") as f:
        f.write(f"# {tag}\n")
        writer = csv.writer(f)
        writer.writerow(
            ["replicate", "l2_km"] + [f"l2_{m}" for m in result.method_names]
        )
        for r in range(args.reps):
            writer.writerow(
                [r, repr(float(result.l2_km[r]))]
                + [repr(float(v)) for v in result.l2[r]]
            )

    summary = {
        "config_hash": config_hash(config),
        "seed": config.seed,
        "replicates": args.reps,
        "methods": list(result.method_names),
        "improvement_vs_km": {
            name: {"mean": stats[name][0], "sd": stats[name][1]}
            for name in result.method_names
        },
    }
    if args.cv:
        sel = result.selection_stats()
        summary["cv_selection"] = {
            "k": args.cv,
            "p_best": sel.p_best,
            "r_best": {"mean": sel.r_best_mean, "sd": sel.r_best_sd},
            "r_worst": {"mean": sel.r_worst_mean, "sd": sel.r_worst_sd},
            "excluded_replicates": sel.n_excluded_r_best,
        }
    _emit_json(summary, os.path.join(args.out, "summary.json"))
    if args.plot:
        _plot_replicates(result, os.path.join(args.out, args.plot))
    if args.json:
        _emit_json(summary)
    else:
        for name in result.method_names:
            mean, sd = stats[name]
            print(f"{name}: improvement over KM {mean:+.3f} +/- {sd:.3f}")
    return 0


# ---------------------------------------------------------------------------
# plotting (SVG emission only)
# ---------------------------------------------------------------------------


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_dynamic(seg_curves, change_times, path):
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    updated, frozen = curve_with_and_without_update(seg_curves, change_times)
    grid = updated.times
    ax.step(grid, updated(grid), where="post", color="black", label="updated")
    if len(change_times) > 1:
        ax.step(
            grid, frozen(grid), where="post", linestyle="--", color="tab:red",
            label="last change ignored",
        )
        for t in change_times[1:]:
            ax.axvline(t, color="gray", linewidth=0.6, alpha=0.6)
    ax.set_xlabel("time")
    ax.set_ylabel("estimated survival")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def _plot_tuning(scores, path):
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(6, 4))
    grid = sorted(scores)
    ax.plot(range(len(grid)), [scores[g] for g in grid], "o-")
    ax.set_xticks(range(len(grid)), [str(g) for g in grid])
    ax.set_xlabel("mtry")
    ax.set_ylabel("OOB integrated Brier score")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def _plot_replicates(result, path):
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    data = [result.l2_km] + [result.l2[:, j] for j in range(len(result.method_names))]
    ax.boxplot(data, tick_labels=["km"] + list(result.method_names))
    ax.set_ylabel("integrated L2 difference")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvsurv",
        description="Survival forests and dynamic survival-curve estimation "
        "for LTRC data with time-varying covariates",
    )
    parser.add_argument("--version", action="version", version=f"tvsurv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a dataset from a DGP config")
    ps.add_argument("--config", required=True, help="TOML config with a [dgp] table")
    ps.add_argument("--out", required=True, help="output CSV (long format)")
    ps.add_argument("--schema", help="schema JSON path (default: <out>.schema.json)")
    ps.add_argument("--truth", help="write per-subject truth file")
    ps.add_argument("--subjects", type=int, help="override n_subjects")
    ps.add_argument("--seed", type=int, help="override seed")
    ps.add_argument("--json", action="store_true")
    ps.set_defaults(func=_cmd_simulate)

    pf = sub.add_parser("fit", help="fit a survival forest")
    pf.add_argument("train", help="training CSV (long or wide format)")
    pf.add_argument("--model", choices=("cif", "rrf"), required=True)
    pf.add_argument("--params", choices=("default", "proposed"), default="proposed")
    pf.add_argument("--mtry", help="integer, or 'tune'")
    pf.add_argument("--trees", type=int, default=100)
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--schema", required=True)
    pf.add_argument("--bootstrap", choices=("subject", "pseudo-subject"))
    pf.add_argument("-o", "--out", required=True)
    pf.add_argument("--jobs", type=int, default=1)
    pf.add_argument("--json", action="store_true")
    pf.set_defaults(func=_cmd_fit)

    pt = sub.add_parser("tune-mtry", help="tune mtry by OOB integrated Brier score")
    pt.add_argument("train")
    pt.add_argument("--model", choices=("cif", "rrf"), required=True)
    pt.add_argument("--params", choices=("default", "proposed"), default="proposed")
    pt.add_argument("--grid", help="comma-separated mtry values")
    pt.add_argument("--trees", type=int, default=100)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--schema", required=True)
    pt.add_argument("--bootstrap", choices=("subject", "pseudo-subject"))
    pt.add_argument("--jobs", type=int, default=1)
    pt.add_argument("--plot", help="write an SVG of the per-grid scores")
    pt.add_argument("--json", action="store_true")
    pt.add_argument("--mtry", help=argparse.SUPPRESS)
    pt.set_defaults(func=_cmd_tune_mtry)

    pp = sub.add_parser("predict", help="dynamic survival curve for a covariate stream")
    pp.add_argument("--model", help="fitted model file")
    pp.add_argument("--stream", help="covariate stream CSV (time, x1..xp)")
    pp.add_argument("--demo-branch", help="bundled worked-example branch (e.g. b012)")
    pp.add_argument("-o", "--out", required=True, help="output CSV")
    pp.add_argument("--plot", help="write an SVG step plot")
    pp.add_argument("--json", action="store_true")
    pp.set_defaults(func=_cmd_predict)

    pe = sub.add_parser("evaluate", help="score an estimator on a dataset")
    pe.add_argument("data")
    pe.add_argument("--metric", choices=("ibs", "brier", "l2"), required=True)
    pe.add_argument("--schema", required=True)
    pe.add_argument("--model", help="fitted model file")
    pe.add_argument("--km", action="store_true", help="use a covariate-free KM fit")
    pe.add_argument("--oracle", action="store_true", help="use truth curves as estimates")
    pe.add_argument("--truth", help="truth file (for l2 and --oracle)")
    pe.add_argument("--t", type=float, help="evaluation time for brier")
    pe.add_argument("--json", action="store_true")
    pe.set_defaults(func=_cmd_evaluate)

    pc = sub.add_parser("cv-select", help="IBS-based K-fold CV model selection")
    pc.add_argument("data")
    pc.add_argument("--methods", default="km,cif,rrf")
    pc.add_argument("--settings", choices=("default", "proposed"), default="proposed")
    pc.add_argument("--k", type=int, default=10)
    pc.add_argument("--trees", type=int, default=100)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--schema", required=True)
    pc.add_argument("--jobs", type=int, default=1)
    pc.add_argument("--json", action="store_true")
    pc.set_defaults(func=_cmd_cv_select)

    pr = sub.add_parser("replicate", help="seeded DGP x method replication study")
    pr.add_argument("--config", required=True)
    pr.add_argument("--reps", type=int, required=True)
    pr.add_argument("--methods", default="cif,rrf")
    pr.add_argument("--settings", choices=("default", "proposed"), default="proposed")
    pr.add_argument("--trees", type=int, default=100)
    pr.add_argument("--cv", type=int, help="also run IBS-based K-fold CV selection")
    pr.add_argument("--seed", type=int)
    pr.add_argument("-o", "--out", required=True, help="output directory")
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--plot", help="boxplot SVG filename (inside the output dir)")
    pr.add_argument("--json", action="store_true")
    pr.set_defaults(func=_cmd_replicate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MalformedRecordError, TvsurvError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
