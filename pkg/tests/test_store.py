"""Time-series store: append, query, export and import."""

from __future__ import annotations

import csv
import io
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasbench.injector import LatencyHistogram
from faasbench.model import Sample, Status
from faasbench.store import (
    SAMPLE,
    Point,
    PointError,
    Store,
    StoreError,
    export_csv,
    export_lp,
    export_plot,
    from_line,
    import_lp,
    iter_samples,
    point_to_sample,
    sample_to_point,
    to_line,
)


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path)
    s.create_run("r1")
    return s


def _pt(ts, provider="aws", latency=1, measurement=SAMPLE):
    return Point(measurement, {"provider": provider}, {"latency_ns": latency}, ts)


def test_append_counts(store):
    assert store.append("r1", [_pt(1)]) == 1
    assert store.append("r1", []) == 0
    with pytest.raises(PointError):
        store.append("r1", ["not a point"])
    with pytest.raises(StoreError):
        store.append("missing", [_pt(1)])


def test_ten_thousand_points_in_order(store, tmp_path):
    rng = random.Random(1)
    pts = [_pt(rng.randrange(10 ** 12), latency=i) for i in range(10_000)]
    store.append("r1", pts[:5000])
    store.append("r1", pts[5000:])
    fresh = Store(tmp_path)  # re-read from disk
    got = fresh.query("r1", SAMPLE)
    assert len(got) == 10_000
    assert [p.timestamp for p in got] == sorted(p.timestamp for p in pts)
    assert sorted(p.fields["latency_ns"] for p in got) == list(range(10_000))


def test_query_filters(store):
    store.append("r1", [_pt(1, "aws", 80), _pt(2, "google", 1770), _pt(3, "aws", 100),
                        _pt(4, "aws", 5, measurement="other")])
    assert [p.fields["latency_ns"] for p in store.query("r1", SAMPLE, {"provider": "aws"})] == [80, 100]
    assert [p.timestamp for p in store.query("r1", SAMPLE, start=2, end=3)] == [2, 3]
    assert store.query("r1", "nothing") == []
    with pytest.raises(StoreError):
        store.query("r1", SAMPLE, start=5, end=1)


def test_query_aggregates(store):
    store.append("r1", [_pt(1, "x", 80), _pt(2, "x", 1770)])
    assert store.query("r1", SAMPLE, aggregate="mean") == [({"provider": "x"}, 925.0)]
    assert store.query("r1", SAMPLE, aggregate="count") == [({"provider": "x"}, 2)]
    assert store.query("r1", SAMPLE, aggregate="percentile", q=50) == [({"provider": "x"}, 80)]
    with pytest.raises(StoreError):
        store.query("r1", SAMPLE, aggregate="percentile")
    with pytest.raises(StoreError):
        store.query("r1", SAMPLE, aggregate="median")


def test_query_across_runs(store):
    store.create_run("r2")
    store.append("r1", [_pt(1)])
    store.append("r2", [_pt(2)])
    assert [p.timestamp for p in store.query(None, SAMPLE)] == [1, 2]
    assert store.runs() == ["r1", "r2"]


def test_p50_matches_histogram(store):
    rng = random.Random(5)
    values = [int(rng.lognormvariate(18, 0.8)) for _ in range(2000)]
    store.append("r1", [_pt(i, latency=v) for i, v in enumerate(values)])
    ((_, p50),) = store.query("r1", SAMPLE, aggregate="percentile", q=50)
    h = LatencyHistogram()
    h.record_many(values)
    lo, hi = h.bucket_bounds(p50)
    assert lo <= h.percentile(50) <= hi


def test_meta_lifecycle(store):
    assert store.meta("r1").status == "running"
    store.update_meta("r1", status="complete", done_steps=["a"])
    m = store.meta("r1")
    assert m.status == "complete" and m.info["done_steps"] == ["a"]
    with pytest.raises(StoreError):
        store.create_run("r1")
    assert store.create_run("r1", exist_ok=True).status == "complete"
    with pytest.raises(StoreError):
        store.create_run("../escape")
    with pytest.raises(StoreError):
        store.meta("nope")


@pytest.mark.parametrize("kwargs", [
    {"measurement": ""}, {"timestamp": 1.5}, {"fields": {}}, {"tags": {"Upper": "x"}},
    {"tags": {"n": 3}}, {"fields": {"x": None}}, {"fields": {"": 1}},
])
def test_invalid_points(kwargs):
    base = {"measurement": "m", "tags": {}, "fields": {"v": 1}, "timestamp": 0}
    with pytest.raises(PointError):
        Point(**{**base, **kwargs})


def test_sample_round_trip():
    s = Sample("dep", 4, 100, 120, 900, 880, Status.OK, 200, "i-1", True, 79, 700)
    p = sample_to_point(s, {"provider": "aws"})
    assert p.tags == {"deployment": "dep", "provider": "aws"} and p.timestamp == 100
    assert point_to_sample(p) == s
    assert list(iter_samples([p, _pt(1, measurement="x")])) == [s]


def test_csv_header_only_when_empty():
    assert export_csv([]) == "measurement,timestamp\r\n"


def test_csv_rows_and_quoting():
    pts = [Point("m", {"k": 'a,"b"'}, {"s": "line\nbreak", "f": 1.5}, 1),
           Point("m", {"k": "plain"}, {"b": True}, 2),
           Point("m", {}, {"f": 2.0}, 3)]
    text = export_csv(pts)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["measurement", "timestamp", "k", "b", "f", "s"]
    assert len(rows) == 4
    assert rows[1] == ["m", "1", 'a,"b"', "", "1.5", "line\nbreak"]
    assert rows[2][3] == "true"
    assert '"a,""b"""' in text


def test_line_protocol_format():
    p = Point("sample", {"provider": "aws", "deployment": "d 1"},
              {"latency_ns": 5, "cold": True, "status": "Ok", "ratio": 0.5}, 42)
    assert to_line(p) == 'sample,deployment=d\\ 1,provider=aws cold=true,latency_ns=5i,ratio=0.5,status="Ok" 42'
    assert from_line(to_line(p)) == p


_text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)
_field = st.one_of(st.integers(-2 ** 63, 2 ** 63 - 1), st.booleans(), _text,
                   st.floats(allow_nan=False))
_points = st.builds(
    Point,
    _text.filter(bool),
    st.dictionaries(_text.filter(lambda k: k and k == k.lower()), _text, max_size=4),
    st.dictionaries(_text.filter(bool), _field, min_size=1, max_size=5),
    st.integers(-2 ** 63, 2 ** 63 - 1),
)


@given(st.lists(_points, max_size=8))
@settings(max_examples=200)
def test_lp_round_trip(points):
    assert import_lp(export_lp(points)) == points


def test_lp_round_trip_nan():
    (p,) = import_lp(export_lp([Point("m", {}, {"x": float("nan")}, 0)]))
    assert math.isnan(p.fields["x"])


def test_lp_rejects_garbage():
    with pytest.raises(PointError):
        from_line("just-one-token")
    with pytest.raises(PointError):
        from_line('m s="open 1')


def test_plot_exports():
    pts = [Point(SAMPLE, {"deployment": "a"}, {"latency_ns": 2_000_000}, 1_000_000_000),
           Point("stress", {"deployment": "a"}, {"rate": 10.0, "achieved_rps": 9.5, "mean": 3e6}, 0)]
    scatter = export_plot(pts, "scatter")
    assert "1.000000 2.000" in scatter and "deployment=a" in scatter
    curve = export_plot(pts, "curve")
    assert "10.0 9.5 3.000" in curve
    with pytest.raises(StoreError):
        export_plot(pts, "bars")
