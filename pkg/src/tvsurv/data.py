"""Domain types for LTRC survival data with time-varying covariates.

A subject is observed intermittently; covariates are constant between
observation times.  Counting-process reformatting splits each subject into
one pseudo-subject row ``(L, R, delta, x)`` per observation interval; the
rows are treated as independent left-truncated right-censored observations
by all downstream fitting code.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BeforeEntryError, MalformedRecordError, SchemaError

MAX_LEVELS = 63  # categorical split rules are stored as 64-bit level masks


@dataclass(frozen=True)
class CovariateSpec:
    """One covariate column: numeric, or categorical over a fixed level set."""

    name: str
    kind: str  # "numeric" | "categorical"
    levels: tuple = None

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaError(f"unknown covariate kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise SchemaError(f"categorical covariate {self.name!r} needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"duplicate levels for {self.name!r}")
            if len(self.levels) > MAX_LEVELS:
                raise SchemaError(f"{self.name!r} has more than {MAX_LEVELS} levels")
            object.__setattr__(self, "levels", tuple(self.levels))
        elif self.levels is not None:
            raise SchemaError(f"numeric covariate {self.name!r} cannot have levels")


@dataclass(frozen=True)
class Schema:
    """Declared covariate layout shared by every subject in a dataset."""

    covariates: tuple

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate covariate names")

    @property
    def p(self):
        return len(self.covariates)

    @property
    def names(self):
        return [c.name for c in self.covariates]

    def encode_value(self, j, value):
        """Encode one raw covariate value as a float code."""
        spec = self.covariates[j]
        if spec.kind == "numeric":
            v = float(value)
            if not np.isfinite(v):
                raise SchemaError(f"non-finite value for {spec.name!r}: {value!r}")
            return v
        try:
            return float(spec.levels.index(value))
        except ValueError:
            raise SchemaError(
                f"unseen level {value!r} for categorical covariate {spec.name!r}"
            ) from None

    def encode_vector(self, values):
        if len(values) != self.p:
            raise SchemaError(f"expected {self.p} covariates, got {len(values)}")
        return np.array([self.encode_value(j, v) for j, v in enumerate(values)])

    def decode_value(self, j, code):
        spec = self.covariates[j]
        if spec.kind == "numeric":
            return float(code)
        return spec.levels[int(round(code))]

    def parse_cell(self, j, text):
        """Parse one CSV cell according to the column kind."""
        spec = self.covariates[j]
        if spec.kind == "numeric":
            try:
                value = float(text)
            except ValueError:
                raise SchemaError(f"bad numeric cell {text!r} for {spec.name!r}") from None
            return value
        for lev in spec.levels:
            if str(lev) == text:
                return lev
        raise SchemaError(f"unseen level {text!r} for categorical covariate {spec.name!r}")

    def to_json_obj(self):
        out = []
        for c in self.covariates:
            entry = {"name": c.name, "kind": c.kind}
            if c.kind == "categorical":
                entry["levels"] = list(c.levels)
            out.append(entry)
        return out

    @classmethod
    def from_json_obj(cls, obj):
        covs = []
        for entry in obj:
            covs.append(
                CovariateSpec(
                    name=entry["name"],
                    kind=entry["kind"],
                    levels=tuple(entry["levels"]) if "levels" in entry else None,
                )
            )
        return cls(tuple(covs))


def save_schema(path, schema):
    with open(path, "w") as f:
        json.dump({"version": 1, "covariates": schema.to_json_obj()}, f, indent=2)


def load_schema(path):
    with open(path) as f:
        obj = json.load(f)
    return Schema.from_json_obj(obj["covariates"])


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: intermittent covariate observations plus outcome.

    ``obs_times`` are strictly increasing with ``obs_times[0] >= 0`` (the
    left-truncation entry time); ``end_time`` is the event/censoring time
    and must exceed the last observation time; ``event`` is True for an
    observed event, False for right-censoring.
    """

    subject_id: str
    obs_times: tuple
    covariates: tuple  # J rows of p raw values each
    end_time: float
    event: bool

    def __post_init__(self):
        object.__setattr__(self, "obs_times", tuple(float(t) for t in self.obs_times))
        object.__setattr__(self, "covariates", tuple(tuple(r) for r in self.covariates))
        t = self.obs_times
        if len(t) < 1:
            raise MalformedRecordError(f"subject {self.subject_id!r}: no observations")
        if t[0] < 0:
            raise MalformedRecordError(f"subject {self.subject_id!r}: negative entry time")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise MalformedRecordError(
                f"subject {self.subject_id!r}: observation times not strictly increasing"
            )
        if len(self.covariates) != len(t):
            raise MalformedRecordError(
                f"subject {self.subject_id!r}: {len(self.covariates)} covariate rows "
                f"for {len(t)} observation times"
            )
        if self.end_time <= t[-1]:
            raise MalformedRecordError(
                f"subject {self.subject_id!r}: end time {self.end_time} not after "
                f"last observation time {t[-1]}"
            )

    @property
    def n_obs(self):
        return len(self.obs_times)

    def stream(self):
        return CovariateStream(self.obs_times, self.covariates)


@dataclass(frozen=True)
class PseudoSubject:
    """One LTRC interval row produced by counting-process reformatting."""

    L: float
    R: float
    delta: bool
    x: tuple
    parent_subject_id: str
    interval_index: int

    def __post_init__(self):
        if not (0 <= self.L < self.R):
            raise MalformedRecordError(
                f"pseudo-subject of {self.parent_subject_id!r}: "
                f"requires 0 <= L < R, got ({self.L}, {self.R})"
            )


@dataclass(frozen=True)
class CovariateStream:
    """A query-time sequence of covariate values: x[j] holds on [t*_j, t*_{j+1})."""

    change_times: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "change_times", tuple(float(t) for t in self.change_times)
        )
        object.__setattr__(self, "values", tuple(tuple(v) for v in self.values))
        t = self.change_times
        if not t:
            raise MalformedRecordError("covariate stream is empty")
        if t[0] < 0:
            raise MalformedRecordError("stream must start at a non-negative time")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise MalformedRecordError("stream change times not strictly increasing")
        if len(self.values) != len(t):
            raise MalformedRecordError("stream values/times length mismatch")


def stream_at(stream: CovariateStream, t: float):
    """Covariate vector held at time t (value on [t*_j, t*_{j+1}))."""
    times = stream.change_times
    if t < times[0]:
        raise BeforeEntryError(f"t={t} precedes stream entry time {times[0]}")
    j = int(np.searchsorted(np.asarray(times), t, side="right")) - 1
    return stream.values[j]


def reformat(dataset: Sequence[SubjectRecord]):
    """Split every subject into its LTRC pseudo-subject rows.

    Row j of subject i is ``(t_j, t_{j+1}, event * [j == J-1], x_j)`` with
    ``t_J`` the subject's end time.  Parent ids and interval indices are
    preserved so subject-level bootstrap and OOB grouping stay possible.
    """
    rows = []
    for rec in dataset:
        bounds = rec.obs_times + (rec.end_time,)
        last = rec.n_obs - 1
        for j in range(rec.n_obs):
            rows.append(
                PseudoSubject(
                    L=bounds[j],
                    R=bounds[j + 1],
                    delta=bool(rec.event) and j == last,
                    x=rec.covariates[j],
                    parent_subject_id=rec.subject_id,
                    interval_index=j,
                )
            )
    return rows


def reconstruct_subjects(rows: Sequence[PseudoSubject]):
    """Inverse of :func:`reformat`: regroup rows into subject records."""
    by_id: dict = {}
    order = []
    for r in rows:
        if r.parent_subject_id not in by_id:
            by_id[r.parent_subject_id] = []
            order.append(r.parent_subject_id)
        by_id[r.parent_subject_id].append(r)
    out = []
    for sid in order:
        group = sorted(by_id[sid], key=lambda r: r.interval_index)
        for j, r in enumerate(group):
            if r.interval_index != j:
                raise MalformedRecordError(f"subject {sid!r}: interval indices not contiguous")
            if j > 0 and group[j - 1].R != r.L:
                raise MalformedRecordError(f"subject {sid!r}: intervals do not tile")
            if r.delta and j != len(group) - 1:
                raise MalformedRecordError(f"subject {sid!r}: event before last interval")
        out.append(
            SubjectRecord(
                subject_id=sid,
                obs_times=tuple(r.L for r in group),
                covariates=tuple(r.x for r in group),
                end_time=group[-1].R,
                event=group[-1].delta,
            )
        )
    return out


@dataclass(frozen=True)
class RowArrays:
    """Array-encoded pseudo-subject rows, the working form for fitting.

    ``X`` holds float codes (categorical levels encoded by index).  Rows of
    one subject are contiguous and ordered by interval index; ``subj`` maps
    each row to its position in ``subject_ids``.
    """

    L: np.ndarray
    R: np.ndarray
    delta: np.ndarray
    X: np.ndarray
    subj: np.ndarray
    interval: np.ndarray
    subject_ids: tuple
    schema: Schema

    def __post_init__(self):
        for name in ("L", "R", "delta", "X", "subj", "interval"):
            getattr(self, name).flags.writeable = False

    @property
    def n_rows(self):
        return self.L.size

    @property
    def n_subjects(self):
        return len(self.subject_ids)

    @classmethod
    def from_subjects(cls, dataset: Sequence[SubjectRecord], schema: Schema):
        rows = reformat(dataset)
        ids = []
        idx_of = {}
        for rec in dataset:
            if rec.subject_id in idx_of:
                raise MalformedRecordError(f"duplicate subject id {rec.subject_id!r}")
            idx_of[rec.subject_id] = len(ids)
            ids.append(rec.subject_id)
        n = len(rows)
        L = np.empty(n)
        R = np.empty(n)
        delta = np.zeros(n, dtype=np.uint8)
        X = np.empty((n, schema.p))
        subj = np.empty(n, dtype=np.int64)
        interval = np.empty(n, dtype=np.int64)
        for i, r in enumerate(rows):
            L[i] = r.L
            R[i] = r.R
            delta[i] = 1 if r.delta else 0
            X[i] = schema.encode_vector(r.x)
            subj[i] = idx_of[r.parent_subject_id]
            interval[i] = r.interval_index
        return cls(L, R, delta, X, subj, interval, tuple(ids), schema)

    def subject_end_times(self):
        """Per-subject (end_time, event) from the last interval of each."""
        ends = np.zeros(self.n_subjects)
        events = np.zeros(self.n_subjects, dtype=np.uint8)
        np.maximum.at(ends, self.subj, self.R)
        last = self.R == ends[self.subj]
        events[self.subj[last]] = self.delta[last]
        return ends, events


# ---------------------------------------------------------------------------
# CSV ingestion / emission
# ---------------------------------------------------------------------------

LONG_FIXED = ("id", "tstart", "tstop", "event")
WIDE_FIXED = ("id", "time", "event")


def _open_rows(path):
    with open(path, newline="") as f:
        reader = csv.reader(line for line in f if not line.startswith("#"))
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def _check_covariate_header(got, schema, n_fixed, path):
    expected = schema.names
    if list(got) != expected:
        raise SchemaError(
            f"{path}: covariate columns {got} do not match schema {expected}"
        )


def read_long_csv(path, schema: Schema):
    """Read one-row-per-interval data: id, tstart, tstop, event, x1..xp."""
    header, body = _open_rows(path)
    if tuple(header[:4]) != LONG_FIXED:
        raise SchemaError(f"{path}: expected leading columns {LONG_FIXED}, got {header[:4]}")
    _check_covariate_header(header[4:], schema, 4, path)
    rows = []
    counter: dict = {}
    for line in body:
        sid = line[0]
        j = counter.get(sid, 0)
        counter[sid] = j + 1
        values = tuple(schema.parse_cell(k, cell) for k, cell in enumerate(line[4:]))
        rows.append(
            PseudoSubject(
                L=float(line[1]),
                R=float(line[2]),
                delta=line[3] in ("1", "true", "True"),
                x=values,
                parent_subject_id=sid,
                interval_index=j,
            )
        )
    return reconstruct_subjects(rows)


def read_wide_csv(path, schema: Schema):
    """Read wide subject data: id, time, event, x1..xp.

    Observation rows leave ``event`` empty; the terminal row per subject
    carries event 0/1 in ``event`` (covariate cells ignored) and its
    ``time`` is the end time.
    """
    header, body = _open_rows(path)
    if tuple(header[:3]) != WIDE_FIXED:
        raise SchemaError(f"{path}: expected leading columns {WIDE_FIXED}, got {header[:3]}")
    _check_covariate_header(header[3:], schema, 3, path)
    groups: dict = {}
    order = []
    for line in body:
        sid = line[0]
        if sid not in groups:
            groups[sid] = []
            order.append(sid)
        groups[sid].append(line)
    subjects = []
    for sid in order:
        times, values, end_time, event = [], [], None, None
        for line in groups[sid]:
            if line[2] != "":
                end_time = float(line[1])
                event = line[2] in ("1", "true", "True")
            else:
                times.append(float(line[1]))
                values.append(
                    tuple(schema.parse_cell(k, cell) for k, cell in enumerate(line[3:]))
                )
        if end_time is None:
            raise MalformedRecordError(f"subject {sid!r}: no terminal row")
        subjects.append(
            SubjectRecord(
                subject_id=sid,
                obs_times=tuple(times),
                covariates=tuple(values),
                end_time=end_time,
                event=event,
            )
        )
    return subjects


def write_long_csv(path, dataset, schema, header_comment=None):
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        writer = csv.writer(f)
        writer.writerow(list(LONG_FIXED) + schema.names)
        for row in reformat(dataset):
            writer.writerow(
                [
                    row.parent_subject_id,
                    repr(row.L),
                    repr(row.R),
                    int(row.delta),
                ]
                + [str(v) for v in row.x]
            )


def read_stream_csv(path, schema: Schema):
    """Read a covariate stream: time, x1..xp (one row per change)."""
    header, body = _open_rows(path)
    if header[0] != "time":
        raise SchemaError(f"{path}: expected leading column 'time', got {header[0]!r}")
    _check_covariate_header(header[1:], schema, 1, path)
    times, values = [], []
    for line in body:
        times.append(float(line[0]))
        values.append(tuple(schema.parse_cell(k, cell) for k, cell in enumerate(line[1:])))
    return CovariateStream(tuple(times), tuple(values))
