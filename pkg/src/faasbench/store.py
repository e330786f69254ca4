"""Append-only time-series store.

Layout::

    <root>/<run_id>/points.jsonl   one JSON object per point, append only
    <root>/<run_id>/meta.json      run status and free-form run metadata

A point is ``{"m": measurement, "t": {tags}, "f": {fields}, "ts": ns}``.
JSON keeps ints, floats (shortest round-trip repr), bools and strings apart,
so re-reading is lossless. The line-protocol export is likewise lossless:
integers carry an ``i`` suffix, floats use ``repr``, strings are quoted.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from faasbench.injector.histogram import nearest_rank
from faasbench.model import Sample, Status

logger = logging.getLogger(__name__)

POINTS_FILE = "points.jsonl"
META_FILE = "meta.json"
SAMPLE = "sample"

FieldValue = int | float | bool | str
_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class StoreError(Exception):
    pass


class PointError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    measurement: str
    tags: Mapping[str, str]
    fields: Mapping[str, FieldValue]
    timestamp: int

    def __post_init__(self):
        if not self.measurement:
            raise PointError("measurement must be nonempty")
        if not isinstance(self.timestamp, int) or isinstance(self.timestamp, bool):
            raise PointError("timestamp must be integer nanoseconds")
        if not self.fields:
            raise PointError("a point needs at least one field")
        for k, v in self.tags.items():
            if not k or k != k.lower():
                raise PointError(f"tag key {k!r} must be nonempty lowercase")
            if not isinstance(v, str):
                raise PointError(f"tag {k!r} must be a string, got {type(v).__name__}")
        for k, v in self.fields.items():
            if not k:
                raise PointError("empty field key")
            if not isinstance(v, (int, float, bool, str)):
                raise PointError(f"field {k!r} has unsupported type {type(v).__name__}")
        object.__setattr__(self, "tags", dict(sorted(self.tags.items())))
        object.__setattr__(self, "fields", dict(sorted(self.fields.items())))

    @property
    def series(self) -> tuple:
        return (self.measurement, tuple(self.tags.items()))

    def to_json(self) -> str:
        return json.dumps({"m": self.measurement, "t": self.tags, "f": self.fields,
                           "ts": self.timestamp}, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> Point:
        d = json.loads(line)
        return cls(d["m"], d["t"], d["f"], d["ts"])


# -- samples <-> points ----------------------------------------------------


def sample_to_point(s: Sample, tags: Mapping[str, str], measurement: str = SAMPLE) -> Point:
    fields: dict[str, FieldValue] = {
        "seq": s.seq,
        "latency_ns": s.latency_ns,
        "service_latency_ns": s.service_latency_ns,
        "actual_start": s.actual_start,
        "status": s.status.value,
        "response_bytes": s.response_bytes,
    }
    if s.http_code is not None:
        fields["http_code"] = s.http_code
    if s.instance_id is not None:
        fields["instance_id"] = s.instance_id
    if s.cold is not None:
        fields["cold"] = s.cold
    if s.exec_ns is not None:
        fields["exec_ns"] = s.exec_ns
    return Point(measurement, {**tags, "deployment": s.deployment_id}, fields, s.intended_start)


def point_to_sample(p: Point) -> Sample:
    f = p.fields
    return Sample(
        deployment_id=p.tags.get("deployment", ""),
        seq=f["seq"],
        intended_start=p.timestamp,
        actual_start=f["actual_start"],
        latency_ns=f["latency_ns"],
        service_latency_ns=f["service_latency_ns"],
        status=Status(f["status"]),
        http_code=f.get("http_code"),
        instance_id=f.get("instance_id"),
        cold=f.get("cold"),
        response_bytes=f.get("response_bytes", 0),
        exec_ns=f.get("exec_ns"),
    )


# -- store -------------------------------------------------------------------


@dataclass
class RunMeta:
    run_id: str
    status: str = "running"
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "status": self.status, "info": self.info}


class Store:
    """Per-run directories under ``root``; one writer per run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._cache: dict[str, list[Point]] = {}

    def run_dir(self, run_id: str) -> Path:
        if not _RUN_ID.match(run_id):
            raise StoreError(f"invalid run id {run_id!r}")
        return self.root / run_id

    def runs(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / META_FILE).exists())

    def exists(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / META_FILE).exists()

    def create_run(self, run_id: str, info: Mapping | None = None, exist_ok: bool = False) -> RunMeta:
        d = self.run_dir(run_id)
        if (d / META_FILE).exists():
            if not exist_ok:
                raise StoreError(f"run {run_id!r} already exists")
            return self.meta(run_id)
        d.mkdir(parents=True, exist_ok=True)
        (d / POINTS_FILE).touch()
        meta = RunMeta(run_id, "running", dict(info or {}))
        self._write_meta(meta)
        return meta

    def meta(self, run_id: str) -> RunMeta:
        path = self.run_dir(run_id) / META_FILE
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise StoreError(f"no run {run_id!r} in {self.root}") from None
        return RunMeta(d["run_id"], d["status"], d.get("info", {}))

    def _write_meta(self, meta: RunMeta) -> None:
        path = self.run_dir(meta.run_id) / META_FILE
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(meta.to_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    def update_meta(self, run_id: str, status: str | None = None, **info) -> RunMeta:
        meta = self.meta(run_id)
        if status is not None:
            meta.status = status
        meta.info.update(info)
        self._write_meta(meta)
        return meta

    def append(self, run_id: str, points: Iterable[Point]) -> int:
        """Append points durably; returns how many were written."""
        pts = list(points)
        if not pts:
            return 0
        for p in pts:
            if not isinstance(p, Point):
                raise PointError(f"not a Point: {p!r}")
        path = self.run_dir(run_id) / POINTS_FILE
        if not path.parent.exists():
            raise StoreError(f"no run {run_id!r}; create it first")
        data = "".join(p.to_json() + "\n" for p in pts)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        if run_id in self._cache:
            self._cache[run_id].extend(pts)
        return len(pts)

    def points(self, run_id: str) -> list[Point]:
        """All points of a run, in timestamp order within each series."""
        if run_id not in self._cache:
            path = self.run_dir(run_id) / POINTS_FILE
            if not path.exists():
                raise StoreError(f"no run {run_id!r} in {self.root}")
            with open(path, encoding="utf-8") as fh:
                self._cache[run_id] = [Point.from_json(line) for line in fh if line.strip()]
        # stable sort keeps append order for equal timestamps
        return sorted(self._cache[run_id], key=lambda p: p.timestamp)

    def query(self, run_id: str | None, measurement: str, tags: Mapping[str, str] | None = None,
              start: int | None = None, end: int | None = None, aggregate: str = "none",
              field_name: str = "latency_ns", q: float | None = None):
        """Filter points and optionally aggregate one field per series.

        ``run_id=None`` queries across every run. ``aggregate`` is one of
        ``none`` (returns points), ``count``, ``mean`` or ``percentile`` (with
        ``q``); aggregates return ``[(tags, value), ...]`` per series.
        """
        if start is not None and end is not None and start > end:
            raise StoreError("start must not be after end")
        runs = self.runs() if run_id is None else [run_id]
        want = dict(tags or {})
        rows = []
        for r in runs:
            for p in self.points(r):
                if p.measurement != measurement:
                    continue
                if start is not None and p.timestamp < start:
                    continue
                if end is not None and p.timestamp > end:
                    continue
                if any(p.tags.get(k) != str(v) for k, v in want.items()):
                    continue
                rows.append(p)
        if aggregate == "none":
            return rows
        return aggregate_series(rows, aggregate, field_name, q)


def aggregate_series(points: list[Point], aggregate: str, field_name: str,
                     q: float | None = None) -> list[tuple[dict, float]]:
    groups: dict[tuple, list] = {}
    for p in points:
        groups.setdefault(tuple(p.tags.items()), []).append(p.fields.get(field_name))
    out = []
    for key, values in groups.items():
        nums = [v for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
        if aggregate == "count":
            value = len(values)
        elif not nums:
            continue
        elif aggregate == "mean":
            value = math.fsum(nums) / len(nums)
        elif aggregate == "percentile":
            if q is None or not 0 <= q <= 100:
                raise StoreError("percentile aggregate needs 0 <= q <= 100")
            nums.sort()
            value = nums[nearest_rank(q, len(nums)) - 1]
        else:
            raise StoreError(f"unknown aggregate {aggregate!r}")
        out.append((dict(key), value))
    return out


# -- export / import -----------------------------------------------------------


def export_csv(points: Iterable[Point]) -> str:
    pts = list(points)
    tag_keys = sorted({k for p in pts for k in p.tags})
    field_keys = sorted({k for p in pts for k in p.fields})
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["measurement", "timestamp", *tag_keys, *field_keys])
    for p in pts:
        w.writerow([p.measurement, p.timestamp, *(p.tags.get(k, "") for k in tag_keys),
                    *(_csv_value(p.fields.get(k)) for k in field_keys)])
    return buf.getvalue()


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_KEY_CHARS = ',= "'


# line breaks inside keys or strings would split a record, so they get
# letter escapes; everything else is a backslash before the literal char
_CONTROL = {"\n": "n", "\r": "r"}
_UNCONTROL = {v: k for k, v in _CONTROL.items()}


def _esc(s: str, chars: str) -> str:
    s = s.replace("\\", "\\\\")
    for c in chars:
        s = s.replace(c, "\\" + c)
    for c, letter in _CONTROL.items():
        s = s.replace(c, "\\" + letter)
    return s


def _lp_value(v: FieldValue) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return f"{v}i"
    if isinstance(v, float):
        return repr(v)
    return '"' + _esc(v, '"') + '"'


def to_line(p: Point) -> str:
    head = _esc(p.measurement, ', "')
    if head.startswith("#"):
        head = "\\" + head  # not a comment line
    tags = "".join(f",{_esc(k, _KEY_CHARS)}={_esc(v, _KEY_CHARS)}" for k, v in p.tags.items())
    fields = ",".join(f"{_esc(k, _KEY_CHARS)}={_lp_value(v)}" for k, v in p.fields.items())
    return f"{head}{tags} {fields} {p.timestamp}"


def export_lp(points: Iterable[Point]) -> str:
    return "".join(to_line(p) + "\n" for p in points)


def _split(s: str, seps: str) -> list[str]:
    """Split on unescaped separators outside double quotes; keeps escapes."""
    parts, cur, i, quoted = [], [], 0, False
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            cur.append(s[i:i + 2])
            i += 2
            continue
        if c == '"':
            quoted = not quoted
        if c in seps and not quoted:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        i += 1
    parts.append("".join(cur))
    return parts


def _unesc(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: _UNCONTROL.get(m.group(1), m.group(1)), s)


def _parse_value(raw: str) -> FieldValue:
    if raw.startswith('"'):
        if len(raw) < 2 or not raw.endswith('"'):
            raise PointError(f"unterminated string field {raw!r}")
        return _unesc(raw[1:-1])
    if raw == "true":
        return True
    if raw == "false":
        return False
    if raw.endswith("i"):
        return int(raw[:-1])
    return float(raw)


def from_line(line: str) -> Point:
    parts = _split(line.rstrip("\n"), " ")
    if len(parts) != 3:
        raise PointError(f"malformed line: {line!r}")
    head, body, ts = parts
    key = _split(head, ",")
    tags = {}
    for kv in key[1:]:
        k, v = _split(kv, "=")
        tags[_unesc(k)] = _unesc(v)
    fields = {}
    for kv in _split(body, ","):
        # string values may contain '=', so rejoin everything after the key
        pieces = _split(kv, "=")
        k, v = pieces[0], "=".join(pieces[1:])
        fields[_unesc(k)] = _parse_value(v)
    return Point(_unesc(key[0]), tags, fields, int(ts))


def import_lp(text: str) -> list[Point]:
    lines = text.split("\n")
    return [from_line(line) for line in lines if line.strip() and not line.startswith("#")]


def export_plot(points: Iterable[Point], kind: str = "scatter") -> str:
    """Whitespace-separated columns for gnuplot.

    ``scatter``: one block per series of ``time_s latency_ms``.
    ``curve``: one block per series of ``goal_rps achieved_rps mean_latency_ms``.
    Blocks are separated by two blank lines (gnuplot ``index``).
    """
    pts = list(points)
    blocks: dict[tuple, list[str]] = {}
    if kind == "scatter":
        for p in pts:
            if "latency_ns" not in p.fields:
                continue
            blocks.setdefault(tuple(p.tags.items()), []).append(
                f"{p.timestamp / 1e9:.6f} {p.fields['latency_ns'] / 1e6:.3f}")
        header = "# time_s latency_ms"
    elif kind == "curve":
        for p in pts:
            if "achieved_rps" not in p.fields or "rate" not in p.fields:
                continue
            mean = p.fields.get("mean")
            mean_ms = "nan" if mean is None else f"{mean / 1e6:.3f}"
            blocks.setdefault(tuple(p.tags.items()), []).append(
                f"{p.fields['rate']} {p.fields['achieved_rps']} {mean_ms}")
        header = "# goal_rps achieved_rps mean_latency_ms"
    else:
        raise StoreError(f"unknown plot kind {kind!r}")
    out = []
    for key, lines in blocks.items():
        label = " ".join(f"{k}={v}" for k, v in key if k != "run_id")
        out.append(f"# series {label}\n{header}\n" + "\n".join(lines) + "\n")
    return "\n\n".join(out)


def iter_samples(points: Iterable[Point]) -> Iterator[Sample]:
    for p in points:
        if p.measurement == SAMPLE:
            yield point_to_sample(p)
