import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvsurv.data import (
    CovariateSpec,
    CovariateStream,
    RowArrays,
    Schema,
    SubjectRecord,
    read_long_csv,
    read_stream_csv,
    read_wide_csv,
    reconstruct_subjects,
    reformat,
    save_schema,
    load_schema,
    stream_at,
    write_long_csv,
)
from tvsurv.errors import BeforeEntryError, MalformedRecordError, SchemaError


def simple_schema(p=1):
    return Schema(tuple(CovariateSpec(name=f"x{j+1}", kind="numeric") for j in range(p)))


def test_reformat_three_intervals():
    rec = SubjectRecord("a", (0.0, 1.0, 2.0), ((0.1,), (0.2,), (0.3,)), 2.5, True)
    rows = reformat([rec])
    got = [(r.L, r.R, r.delta, r.x) for r in rows]
    assert got == [
        (0.0, 1.0, False, (0.1,)),
        (1.0, 2.0, False, (0.2,)),
        (2.0, 2.5, True, (0.3,)),
    ]


def test_reformat_single_interval():
    rec = SubjectRecord("a", (0.0,), ((7.0,),), 4.0, False)
    (row,) = reformat([rec])
    assert (row.L, row.R, row.delta, row.x) == (0.0, 4.0, False, (7.0,))


def test_reformat_vaccination_branch():
    # unvaccinated on [0,1), one dose at t=1, event at t=1.7
    rec = SubjectRecord("b01", (0.0, 1.0), ((0,), (1,)), 1.7, True)
    rows = reformat([rec])
    got = [(r.L, r.R, r.delta, r.x) for r in rows]
    assert got == [(0.0, 1.0, False, (0,)), (1.0, 1.7, True, (1,))]


def test_malformed_records_name_the_subject():
    with pytest.raises(MalformedRecordError, match="bad-id"):
        SubjectRecord("bad-id", (0.0, 0.0), ((1,), (2,)), 3.0, True)
    with pytest.raises(MalformedRecordError, match="end time"):
        SubjectRecord("s", (0.0, 2.0), ((1,), (2,)), 2.0, True)
    with pytest.raises(MalformedRecordError):
        SubjectRecord("s", (-1.0,), ((1,),), 2.0, True)


@st.composite
def subject_records(draw, p=2):
    n_obs = draw(st.integers(1, 5))
    gaps = draw(
        st.lists(
            st.floats(0.25, 4.0, allow_nan=False), min_size=n_obs, max_size=n_obs
        )
    )
    t0 = draw(st.floats(0.0, 3.0))
    times = np.concatenate(([t0], t0 + np.cumsum(gaps)))
    covs = tuple(
        tuple(
            draw(st.floats(-5, 5, allow_nan=False, allow_infinity=False))
            for _ in range(p)
        )
        for _ in range(n_obs)
    )
    sid = draw(st.text(st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=6))
    event = draw(st.booleans())
    return SubjectRecord(sid, tuple(times[:n_obs]), covs, float(times[n_obs]), event)


@settings(max_examples=60, deadline=None)
@given(st.lists(subject_records(), min_size=1, max_size=6, unique_by=lambda r: r.subject_id))
def test_reformat_round_trip(records):
    assert reconstruct_subjects(reformat(records)) == records


@settings(max_examples=60, deadline=None)
@given(st.lists(subject_records(), min_size=1, max_size=6, unique_by=lambda r: r.subject_id))
def test_reformat_invariants(records):
    rows = reformat(records)
    assert len(rows) == sum(r.n_obs for r in records)
    for rec in records:
        mine = [r for r in rows if r.parent_subject_id == rec.subject_id]
        # delta flags sum to the subject's event indicator
        assert sum(r.delta for r in mine) == (1 if rec.event else 0)
        # intervals tile [t0, end) without gaps or overlaps
        mine.sort(key=lambda r: r.interval_index)
        assert mine[0].L == rec.obs_times[0]
        assert mine[-1].R == rec.end_time
        for a, b in zip(mine, mine[1:]):
            assert a.R == b.L
        assert all(r.L < r.R for r in mine)


def test_stream_at_examples():
    s = CovariateStream((0.0, 1.0, 2.0), (("a",), ("b",), ("c",)))
    assert stream_at(s, 1.5) == ("b",)
    assert stream_at(s, 2.0) == ("c",)  # boundary uses the new value
    assert stream_at(s, 0.0) == ("a",)
    with pytest.raises(BeforeEntryError):
        stream_at(CovariateStream((1.0,), (("a",),)), 0.5)


def test_stream_validation():
    with pytest.raises(MalformedRecordError):
        CovariateStream((1.0, 1.0), (("a",), ("b",)))
    with pytest.raises(MalformedRecordError):
        CovariateStream((), ())


def test_schema_encoding_and_unseen_level():
    schema = Schema(
        (
            CovariateSpec("age", "numeric"),
            CovariateSpec("grade", "categorical", levels=("lo", "mid", "hi")),
        )
    )
    np.testing.assert_array_equal(schema.encode_vector((41.5, "mid")), [41.5, 1.0])
    with pytest.raises(SchemaError, match="unseen level"):
        schema.encode_vector((41.5, "unknown"))
    with pytest.raises(SchemaError, match="non-finite"):
        schema.encode_vector((float("nan"), "lo"))


def test_schema_roundtrip(tmp_path):
    schema = Schema(
        (
            CovariateSpec("age", "numeric"),
            CovariateSpec("grade", "categorical", levels=(1, 2, 3)),
        )
    )
    path = tmp_path / "schema.json"
    save_schema(path, schema)
    assert load_schema(path) == schema


def test_long_csv_roundtrip(tmp_path):
    schema = Schema(
        (
            CovariateSpec("x1", "numeric"),
            CovariateSpec("x2", "categorical", levels=(0, 1, 2)),
        )
    )
    records = [
        SubjectRecord("a", (0.0, 1.5), ((0.25, 0), (0.5, 2)), 3.25, True),
        SubjectRecord("b", (0.5,), ((1.0, 1),), 2.0, False),
    ]
    path = tmp_path / "data.csv"
    write_long_csv(path, records, schema, header_comment="test artifact")
    assert read_long_csv(path, schema) == records


def test_wide_csv(tmp_path):
    schema = simple_schema(p=1)
    path = tmp_path / "wide.csv"
    path.write_text(
        "id,time,event,x1\n"
        "a,0.0,,0.25\n"
        "a,1.0,,0.75\n"
        "a,2.5,1,\n"
        "b,0.0,,0.1\n"
        "b,4.0,0,\n"
    )
    records = read_wide_csv(path, schema)
    assert records == [
        SubjectRecord("a", (0.0, 1.0), ((0.25,), (0.75,)), 2.5, True),
        SubjectRecord("b", (0.0,), ((0.1,),), 4.0, False),
    ]


def test_stream_csv(tmp_path):
    schema = simple_schema(p=2)
    path = tmp_path / "stream.csv"
    path.write_text("time,x1,x2\n0.0,1.0,2.0\n1.5,3.0,4.0\n")
    stream = read_stream_csv(path, schema)
    assert stream.change_times == (0.0, 1.5)
    assert stream.values == ((1.0, 2.0), (3.0, 4.0))


def test_csv_schema_mismatch(tmp_path):
    schema = simple_schema(p=2)
    path = tmp_path / "bad.csv"
    path.write_text("id,tstart,tstop,event,x1\na,0,1,1,0.5\n")
    with pytest.raises(SchemaError):
        read_long_csv(path, schema)


def test_row_arrays_encoding():
    schema = Schema(
        (
            CovariateSpec("x1", "numeric"),
            CovariateSpec("x2", "categorical", levels=("u", "v")),
        )
    )
    records = [
        SubjectRecord("a", (0.0, 1.0), ((0.5, "u"), (0.7, "v")), 2.0, True),
        SubjectRecord("b", (0.0,), ((0.9, "v"),), 1.0, False),
    ]
    rows = RowArrays.from_subjects(records, schema)
    assert rows.n_rows == 3 and rows.n_subjects == 2
    np.testing.assert_array_equal(rows.X[:, 1], [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(rows.subj, [0, 0, 1])
    ends, events = rows.subject_end_times()
    np.testing.assert_array_equal(ends, [2.0, 1.0])
    np.testing.assert_array_equal(events, [1, 0])
    with pytest.raises(ValueError):
        rows.L[0] = 5.0  # immutable
