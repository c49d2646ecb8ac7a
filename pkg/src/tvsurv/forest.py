"""Ensemble layer: bootstrap, forest fitting, prediction, tuning, serialization.

Bootstrap draws resample subjects (default) or pseudo-subjects, with
integer weights realized by row duplication before tree growth.  Per-tree
randomness derives from ``SeedSequence(seed, spawn_key=(tree,))`` so
results are independent of scheduling order.

Prediction for a covariate vector x:

* CIF forests aggregate ensemble nearest-neighbor weights: a training row
  gets weight 1/|terminal in-bag mass| for every tree where the row is
  in-bag and shares x's terminal node, then a weighted LTRC product-limit
  curve is fit on all training rows.
* RRF forests average terminal relative risks over trees and return
  ``exp(-H0_pooled(t) * mean risk)`` with the pooled Nelson-Aalen baseline.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .curves import CumHazardCurve, SurvivalCurve
from .data import RowArrays, Schema
from .errors import NoOobTreesError, SchemaError
from .estimators import km_ltrc, na_ltrc
from .tree import Tree
from .tree_cif import CATEGORICAL, NUMERIC, CifParams, grow_cif_tree
from .tree_rrf import RrfParams, grow_rrf_tree, make_poisson_data

logger = logging.getLogger("tvsurv")

MODEL_FORMAT = "tvsurv-forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Ensemble settings.

    ``alpha=1.0`` follows the forest convention: the association tests only
    pick the split variable and tree size is regulated by minsplit /
    minbucket / nodesize.  Set alpha below 1 to add the significance stop
    used when growing standalone trees.
    """

    kind: str  # "cif" | "rrf"
    n_trees: int = 100
    mtry: int | None = None  # None: ceil(sqrt(p)) at fit time
    minsplit: int = 20
    minbucket: int = 7
    nodesize: int = 15
    alpha: float = 1.0
    bootstrap_unit: str = "subject"  # "subject" | "pseudo-subject"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("cif", "rrf"):
            raise ValueError(f"unknown forest kind {self.kind!r}")
        if self.bootstrap_unit not in ("subject", "pseudo-subject"):
            raise ValueError(f"unknown bootstrap unit {self.bootstrap_unit!r}")
        if self.n_trees < 1:
            raise ValueError("need at least one tree")


def default_mtry(p):
    return int(math.ceil(math.sqrt(p)))


def default_params(kind, p=None, **overrides):
    """Package defaults: mtry = ceil(sqrt(p)), (minsplit, minbucket) = (20, 7),
    nodesize = 15."""
    mtry = default_mtry(p) if p is not None else None
    return ForestParams(kind=kind, mtry=mtry, **overrides)


def proposed_params(n, p, kind, **overrides):
    """Size-adaptive settings: each regulator is the maximum of its default
    and ceil(sqrt(n)) over the n pseudo-subject rows."""
    if n < 1:
        raise ValueError("need at least one pseudo-subject row")
    root = int(math.ceil(math.sqrt(n)))
    return ForestParams(
        kind=kind,
        mtry=overrides.pop("mtry", default_mtry(p)),
        minsplit=max(20, root),
        minbucket=max(7, root),
        nodesize=max(15, root),
        **overrides,
    )


def mtry_grid(p, *, dense=False):
    """Candidate mtry values: {1, 2, 3, ceil(sqrt(p)), ceil(p/2), p} clipped to
    [1, p].  ``dense=True`` adds every integer up to ceil(sqrt(p))."""
    vals = {1, 2, 3, default_mtry(p), int(math.ceil(p / 2)), p}
    if dense:
        vals |= set(range(1, default_mtry(p) + 1))
    return sorted(v for v in vals if 1 <= v <= p)


def _schema_kinds(schema: Schema):
    kinds = np.array(
        [CATEGORICAL if c.kind == "categorical" else NUMERIC for c in schema.covariates],
        dtype=np.int8,
    )
    n_levels = np.array(
        [len(c.levels) if c.levels else 0 for c in schema.covariates], dtype=np.int64
    )
    return kinds, n_levels


def _tree_rng(seed, b):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))


def _bootstrap_counts(rows: RowArrays, unit, rng, bootstrap):
    """Multiplicity of every training row in one bootstrap sample."""
    if not bootstrap:
        return np.ones(rows.n_rows, dtype=np.int64)
    if unit == "subject":
        draws = rng.integers(0, rows.n_subjects, rows.n_subjects)
        per_subject = np.bincount(draws, minlength=rows.n_subjects)
        return per_subject[rows.subj]
    draws = rng.integers(0, rows.n_rows, rows.n_rows)
    return np.bincount(draws, minlength=rows.n_rows)


def _fit_one_tree(rows, kinds, n_levels, params, tree_params, b, bootstrap):
    rng = _tree_rng(params.seed, b)
    row_mult = _bootstrap_counts(rows, params.bootstrap_unit, rng, bootstrap)
    rep = np.repeat(np.arange(rows.n_rows), row_mult)
    if params.kind == "cif":
        tree = grow_cif_tree(
            rows.L[rep], rows.R[rep], rows.delta[rep], rows.X[rep],
            kinds, n_levels, tree_params, rng,
        )
        baseline = None
    else:
        if np.any(rows.delta[row_mult > 0]):
            baseline = na_ltrc(rows.L, rows.R, rows.delta, weights=row_mult)
        else:
            baseline = CumHazardCurve(np.empty(0), np.empty(0))
            logger.info("tree %d: all-censored bootstrap sample, root-only tree", b)
        s, c = make_poisson_data(rows.L, rows.R, rows.delta * (row_mult > 0), baseline)
        tree = grow_rrf_tree(
            rows.X[rep], s[rep], c[rep], kinds, n_levels, tree_params, rng
        )
    return tree, row_mult, baseline


class FittedForest:
    """An immutable fitted ensemble; prediction is read-only and thread-safe."""

    def __init__(self, params, rows, trees, row_mult, baselines, pooled_baseline):
        self.params = params
        self.rows = rows
        self.trees = trees
        self.row_mult = row_mult  # (B, n_rows) in-bag multiplicities
        self.baselines = baselines  # per-tree H0 (rrf only)
        self.pooled_baseline = pooled_baseline
        self.kinds, self.n_levels = _schema_kinds(rows.schema)
        # per-tree in-bag subject multiset and caches for prediction
        B = len(trees)
        self.inbag_subjects = np.zeros((B, rows.n_subjects), dtype=np.int64)
        for b in range(B):
            np.maximum.at(self.inbag_subjects[b], rows.subj, row_mult[b])
        self._terminal_rows = [t.apply(rows.X) for t in trees]
        self._term_mass = [
            np.bincount(self._terminal_rows[b], weights=row_mult[b], minlength=trees[b].n_nodes)
            for b in range(B)
        ]
        # per-tree index of training rows grouped by terminal, for fast lookup
        self._leaf_order = []
        self._leaf_sorted = []
        for b in range(B):
            order = np.argsort(self._terminal_rows[b], kind="stable")
            self._leaf_order.append(order)
            self._leaf_sorted.append(self._terminal_rows[b][order])

    # -- basic properties ---------------------------------------------------

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def schema(self):
        return self.rows.schema

    def oob_tree_indices(self, subject_index):
        return np.nonzero(self.inbag_subjects[:, subject_index] == 0)[0]

    # -- prediction ----------------------------------------------------------

    def _encode_query(self, x):
        try:
            return self.schema.encode_vector(tuple(x))
        except SchemaError:
            raise
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"query vector does not conform to schema: {exc}") from exc

    def _leaf_of(self, x_enc, b):
        return int(self.trees[b].apply(x_enc[None, :])[0])

    def _rows_in_leaf(self, b, leaf):
        lo = np.searchsorted(self._leaf_sorted[b], leaf, side="left")
        hi = np.searchsorted(self._leaf_sorted[b], leaf, side="right")
        return self._leaf_order[b][lo:hi]

    def aggregated_weights(self, x_enc, tree_indices):
        """CIF nearest-neighbor weights over training rows.

        Within each tree the weights of in-bag rows sharing x's terminal
        node sum to one.
        """
        w = np.zeros(self.rows.n_rows)
        for b in tree_indices:
            leaf = self._leaf_of(x_enc, b)
            idx = self._rows_in_leaf(b, leaf)
            mass = self._term_mass[b][leaf]
            if mass > 0:
                w[idx] += self.row_mult[b][idx] / mass
        return w

    def batch_weights(self, Xq, query_subject=None, oob=False):
        """CIF weights for many encoded query rows at once.

        ``oob=True`` restricts each query to trees where its training
        subject (``query_subject``) is out-of-bag.  Returns ``(W, n_trees)``
        with W of shape (q, n_rows) and the per-query count of contributing
        trees.
        """
        q = Xq.shape[0]
        W = np.zeros((q, self.rows.n_rows))
        contrib = np.zeros(q, dtype=np.int64)
        all_queries = np.ones(q, dtype=bool)
        for b in range(self.n_trees):
            if oob:
                eligible = self.inbag_subjects[b][query_subject] == 0
                if not eligible.any():
                    continue
            else:
                eligible = all_queries
            leaves_q = self.trees[b].apply(Xq)
            mult = self.row_mult[b]
            mass = self._term_mass[b]
            for leaf in np.unique(leaves_q[eligible]):
                qs = np.nonzero(eligible & (leaves_q == leaf))[0]
                idx = self._rows_in_leaf(b, leaf)
                if mass[leaf] > 0:
                    W[np.ix_(qs, idx)] += mult[idx] / mass[leaf]
            contrib[eligible] += 1
        return W, contrib

    def batch_relative_risks(self, Xq, query_subject=None, oob=False):
        """Per-query mean terminal relative risk over (eligible) trees."""
        q = Xq.shape[0]
        total = np.zeros(q)
        contrib = np.zeros(q, dtype=np.int64)
        for b in range(self.n_trees):
            if oob:
                eligible = self.inbag_subjects[b][query_subject] == 0
                if not eligible.any():
                    continue
                leaves_q = self.trees[b].apply(Xq[eligible])
                total[eligible] += self.trees[b].payload[leaves_q]
                contrib[eligible] += 1
            else:
                leaves_q = self.trees[b].apply(Xq)
                total += self.trees[b].payload[leaves_q]
                contrib += 1
        phi = np.divide(total, contrib, out=np.zeros(q), where=contrib > 0)
        return phi, contrib

    def curves_for_queries(self, Xq, query_subject=None, oob=False):
        """Survival curves for many encoded query rows; None entries mark
        queries with no contributing tree (possible only with oob=True)."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        if self.params.kind == "cif":
            W, contrib = self.batch_weights(Xq, query_subject, oob)
            out = []
            for i in range(Xq.shape[0]):
                if contrib[i] == 0:
                    out.append(None)
                    continue
                keep = W[i] > 0
                if not np.any(keep):
                    out.append(SurvivalCurve(np.empty(0), np.empty(0)))
                    continue
                out.append(
                    km_ltrc(
                        self.rows.L[keep],
                        self.rows.R[keep],
                        self.rows.delta[keep],
                        weights=W[i][keep],
                    )
                )
            return out
        phi, contrib = self.batch_relative_risks(Xq, query_subject, oob)
        H = self.pooled_baseline
        return [
            None
            if contrib[i] == 0
            else SurvivalCurve(H.times, np.exp(-H.values * phi[i]))
            for i in range(Xq.shape[0])
        ]

    def predict_S_A(self, x, tree_indices=None):
        """Hypothetical survival curve for a time-invariant covariate vector."""
        x_enc = self._encode_query(x)
        return self._predict_encoded(x_enc, tree_indices)

    def _predict_encoded(self, x_enc, tree_indices=None):
        if tree_indices is None:
            tree_indices = range(self.n_trees)
        if self.params.kind == "cif":
            w = self.aggregated_weights(x_enc, tree_indices)
            keep = w > 0
            if not np.any(keep):
                return SurvivalCurve(np.empty(0), np.empty(0))
            return km_ltrc(
                self.rows.L[keep], self.rows.R[keep], self.rows.delta[keep], weights=w[keep]
            )
        risks = [self.trees[b].payload[self._leaf_of(x_enc, b)] for b in tree_indices]
        phi = float(np.mean(risks))
        H = self.pooled_baseline
        return SurvivalCurve(H.times, np.exp(-H.values * phi))

    def oob_survival(self, subject_index):
        """Per-interval OOB survival curves for one training subject.

        Uses only trees where the subject was out-of-bag; raises
        NoOobTreesError when there are none.
        """
        if self.oob_tree_indices(subject_index).size == 0:
            raise NoOobTreesError(
                f"subject {self.rows.subject_ids[subject_index]!r} is in-bag everywhere"
            )
        rows = np.nonzero(self.rows.subj == subject_index)[0]
        rows = rows[np.argsort(self.rows.interval[rows], kind="stable")]
        return self.curves_for_queries(
            self.rows.X[rows],
            query_subject=np.full(rows.size, subject_index),
            oob=True,
        )

    # -- serialization --------------------------------------------------------

    def to_json_obj(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": asdict(self.params),
            "schema": self.schema.to_json_obj(),
            "subject_ids": list(self.rows.subject_ids),
            "train": {
                "L": self.rows.L.tolist(),
                "R": self.rows.R.tolist(),
                "delta": self.rows.delta.tolist(),
                "X": self.rows.X.tolist(),
                "subj": self.rows.subj.tolist(),
                "interval": self.rows.interval.tolist(),
            },
            "row_mult": self.row_mult.tolist(),
            "trees": [t.to_json_obj() for t in self.trees],
            "baselines": [
                {"times": b.times.tolist(), "values": b.values.tolist()}
                for b in self.baselines
            ]
            if self.baselines is not None
            else None,
            "pooled_baseline": {
                "times": self.pooled_baseline.times.tolist(),
                "values": self.pooled_baseline.values.tolist(),
            }
            if self.pooled_baseline is not None
            else None,
        }

    def to_bytes(self):
        return json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_json_obj(cls, obj):
        if obj.get("format") != MODEL_FORMAT:
            raise SchemaError("not a tvsurv forest model file")
        if obj.get("version") != MODEL_VERSION:
            raise SchemaError(f"unsupported model version {obj.get('version')}")
        params = ForestParams(**obj["params"])
        schema = Schema.from_json_obj(obj["schema"])
        tr = obj["train"]
        rows = RowArrays(
            np.asarray(tr["L"], dtype=np.float64),
            np.asarray(tr["R"], dtype=np.float64),
            np.asarray(tr["delta"], dtype=np.uint8),
            np.asarray(tr["X"], dtype=np.float64),
            np.asarray(tr["subj"], dtype=np.int64),
            np.asarray(tr["interval"], dtype=np.int64),
            tuple(obj["subject_ids"]),
            schema,
        )
        trees = [Tree.from_json_obj(t) for t in obj["trees"]]
        row_mult = np.asarray(obj["row_mult"], dtype=np.int64)
        baselines = None
        if obj["baselines"] is not None:
            baselines = [
                CumHazardCurve(np.asarray(b["times"]), np.asarray(b["values"]))
                for b in obj["baselines"]
            ]
        pooled = None
        if obj["pooled_baseline"] is not None:
            pb = obj["pooled_baseline"]
            pooled = CumHazardCurve(np.asarray(pb["times"]), np.asarray(pb["values"]))
        return cls(params, rows, trees, row_mult, baselines, pooled)

    @classmethod
    def from_bytes(cls, data):
        return cls.from_json_obj(json.loads(data.decode()))


def save_forest(path, forest):
    with open(path, "wb") as f:
        f.write(forest.to_bytes())


def load_forest(path):
    with open(path, "rb") as f:
        return FittedForest.from_bytes(f.read())


def resolve_params(params: ForestParams, p):
    if params.mtry is None:
        params = replace(params, mtry=default_mtry(p))
    if not 1 <= params.mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {params.mtry}")
    return params


def fit_forest(subjects, schema, params: ForestParams, *, bootstrap=True, n_jobs=1):
    """Fit a survival forest on subject records.

    ``bootstrap=False`` is a test hook that grows every tree on the full
    data (per-tree covariate subsampling still applies).
    """
    rows = RowArrays.from_subjects(subjects, schema)
    return fit_forest_rows(rows, params, bootstrap=bootstrap, n_jobs=n_jobs)


def fit_forest_rows(rows: RowArrays, params: ForestParams, *, bootstrap=True, n_jobs=1):
    params = resolve_params(params, rows.schema.p)
    kinds, n_levels = _schema_kinds(rows.schema)
    if params.kind == "cif":
        tree_params = CifParams(
            mtry=params.mtry,
            minsplit=params.minsplit,
            minbucket=params.minbucket,
            alpha=params.alpha,
        )
    else:
        tree_params = RrfParams(mtry=params.mtry, nodesize=params.nodesize)

    B = params.n_trees
    if n_jobs == 1:
        fitted = [
            _fit_one_tree(rows, kinds, n_levels, params, tree_params, b, bootstrap)
            for b in range(B)
        ]
    else:
        fitted = Parallel(n_jobs=n_jobs)(
            delayed(_fit_one_tree)(rows, kinds, n_levels, params, tree_params, b, bootstrap)
            for b in range(B)
        )
    trees = [f[0] for f in fitted]
    row_mult = np.stack([f[1] for f in fitted])
    baselines = [f[2] for f in fitted] if params.kind == "rrf" else None
    pooled = None
    if params.kind == "rrf":
        if np.any(rows.delta):
            pooled = na_ltrc(rows.L, rows.R, rows.delta)
        else:
            pooled = CumHazardCurve(np.empty(0), np.empty(0))
    return FittedForest(params, rows, trees, row_mult, baselines, pooled)


def tune_mtry(subjects, schema, params: ForestParams, grid=None, *, n_jobs=1):
    """Pick mtry by minimizing out-of-bag integrated Brier score.

    Fits one forest per grid value (same seed, so bootstrap draws are
    paired), composes each subject's dynamic OOB curve over its own
    covariate stream and scores it; ties go to the smaller mtry.
    Returns ``(best_mtry, {mtry: oob_ibs})``.
    """
    from .dynamic import dynamic_curves_for_subjects
    from .metrics import ibs

    p = schema.p
    if grid is None:
        grid = mtry_grid(p)
    grid = sorted(set(int(g) for g in grid))
    if any(g < 1 or g > p for g in grid):
        raise ValueError(f"mtry grid must lie within [1, {p}]")
    rows = RowArrays.from_subjects(subjects, schema)
    scores = {}
    for g in grid:
        forest = fit_forest_rows(rows, replace(params, mtry=g), n_jobs=n_jobs)
        curves = dynamic_curves_for_subjects(forest, subjects, oob=True)
        scored = [rec for rec in subjects if rec.subject_id in curves]
        if not scored:
            raise NoOobTreesError("no subject has any OOB tree; increase n_trees")
        if len(scored) < len(subjects):
            logger.info(
                "tune_mtry(mtry=%d): %d subjects had no OOB trees and were skipped",
                g, len(subjects) - len(scored),
            )
        scores[g] = ibs(curves, scored)
    best = min(grid, key=lambda g: (scores[g], g))
    return best, scores
