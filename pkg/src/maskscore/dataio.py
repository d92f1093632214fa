"""JSON-lines ingestion and byte-stable persistence of scores.

Datasets are UTF-8 JSON-lines, one record per line (blank lines are
ignored). Segment records carry id/source/candidate plus optional
system, human-judgment object, and split; pairwise records carry
id/source/better/worse. Unknown fields ride along in an extras mapping
so round trips lose nothing.

All writers emit sorted keys and shortest round-trip float formatting,
making output byte-stable for identical inputs, and they write through
a same-directory temp file with an atomic rename so a failing run never
leaves a partial file behind.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

from .errors import DuplicateId, IoError, LengthMismatch, ParseError
from .estimator import ScoreReport

SEGMENT_KEYS = ("id", "source", "candidate", "system", "human", "split")
PAIRWISE_KEYS = ("id", "source", "better", "worse")


@dataclass(frozen=True)
class EvalRecord:
    """One segment-level evaluation record."""

    id: str
    source: str
    candidate: str
    system_id: str | None = None
    human: dict[str, float] = field(default_factory=dict)
    split: str | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, value in self.human.items():
            if not math.isfinite(value):
                raise ValueError(f"human value {name}={value} is not finite")


@dataclass(frozen=True)
class PairRecord:
    """One pairwise-preference record."""

    id: str
    source: str
    better: str
    worse: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.better == self.worse:
            raise ValueError("better and worse must differ")


def _want_str(obj: dict, key: str, line: int) -> str:
    if key not in obj:
        raise ParseError(line, f"missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise ParseError(line, f"field {key!r} must be a string, got {type(value).__name__}")
    return value


def _optional_str(obj: dict, key: str, line: int) -> str | None:
    if key not in obj:
        return None
    value = obj[key]
    if not isinstance(value, str):
        raise ParseError(line, f"field {key!r} must be a string, got {type(value).__name__}")
    return value


def _human_map(obj: dict, line: int) -> dict[str, float]:
    raw = obj.get("human")
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ParseError(line, "field 'human' must be an object of numbers")
    out = {}
    for name, value in raw.items():
        # bool is an int subclass and must not pass as a judgment value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(line, f"human value {name!r} must be a number")
        if not math.isfinite(value):
            raise ParseError(line, f"human value {name!r} is not finite")
        out[str(name)] = float(value)
    return out


def _parse_segment(obj: dict, line: int) -> EvalRecord:
    return EvalRecord(
        id=_want_str(obj, "id", line),
        source=_want_str(obj, "source", line),
        candidate=_want_str(obj, "candidate", line),
        system_id=_optional_str(obj, "system", line),
        human=_human_map(obj, line),
        split=_optional_str(obj, "split", line),
        extras={k: v for k, v in obj.items() if k not in SEGMENT_KEYS},
    )


def _parse_pairwise(obj: dict, line: int) -> PairRecord:
    rec = {key: _want_str(obj, key, line) for key in PAIRWISE_KEYS}
    if rec["better"] == rec["worse"]:
        raise ParseError(line, "better and worse must differ")
    return PairRecord(
        **rec, extras={k: v for k, v in obj.items() if k not in PAIRWISE_KEYS}
    )


def load_dataset(path: str, kind: str = "segment"):
    """Read a JSON-lines dataset; returns records in file order.

    ``kind`` selects the segment or pairwise schema. Raises ParseError
    with the 1-based line number on any malformed line and DuplicateId
    when an id repeats (both line numbers attached).
    """
    if kind not in ("segment", "pairwise"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    parse = _parse_segment if kind == "segment" else _parse_pairwise
    records = []
    seen: dict[str, int] = {}
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(line_no, "each line must hold a JSON object")
            record = parse(obj, line_no)
            if record.id in seen:
                raise DuplicateId(record.id, seen[record.id], line_no)
            seen[record.id] = line_no
            records.append(record)
    return records


def json_line(obj: dict) -> str:
    """Canonical one-line JSON encoding used by every writer.

    Sorted keys and repr floats keep output byte-stable for identical
    inputs regardless of insertion order or thread count.
    """
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_jsonl(rows, path: str) -> None:
    """Write dict rows as JSON-lines atomically (temp file + rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".jsonl")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json_line(row))
                handle.write("\n")
        os.replace(tmp_path, path)
    except OSError as exc:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_text(text: str, path: str) -> None:
    """Write a text file atomically (temp file + rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".txt")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except OSError as exc:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_jsonl(path: str) -> list[dict]:
    """Read raw JSON-lines rows (used for score dumps and reports)."""
    rows = []
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                row = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(row, dict):
                raise ParseError(line_no, "each line must hold a JSON object")
            rows.append(row)
    return rows


def record_to_dict(record) -> dict:
    """Serializable form of a dataset record, extras flattened back in."""
    if isinstance(record, EvalRecord):
        out: dict = {
            "id": record.id,
            "source": record.source,
            "candidate": record.candidate,
        }
        if record.system_id is not None:
            out["system"] = record.system_id
        if record.human:
            out["human"] = dict(record.human)
        if record.split is not None:
            out["split"] = record.split
    elif isinstance(record, PairRecord):
        out = {
            "id": record.id,
            "source": record.source,
            "better": record.better,
            "worse": record.worse,
        }
    else:
        raise TypeError(f"not a dataset record: {type(record).__name__}")
    out.update(record.extras)
    return out


def write_dataset(records, path: str) -> None:
    """Persist dataset records as JSON-lines (atomic, byte-stable)."""
    write_jsonl((record_to_dict(r) for r in records), path)


def config_to_dict(report: ScoreReport) -> dict:
    """Resolved-configuration echo embedded in every score dump row."""
    out: dict = {"schema_version": 1, "weighting": report.weighting}
    cfg = report.config
    if cfg is not None:
        out.update(
            k=cfg.k,
            timesteps=cfg.timesteps,
            strategy=cfg.strategy,
            alpha_bi=cfg.alpha_bi,
            seed=cfg.seed,
        )
    return out


def score_row(record_id: str, report: ScoreReport) -> dict:
    """The stable score-dump row shape for one scored record."""
    return {
        "id": record_id,
        "score": report.score,
        "per_timestep": {repr(t): v for t, v in report.per_timestep.items()},
        "config": config_to_dict(report),
        "sample_std": report.sample_std,
    }


def write_scores(records, reports, path: str, extra_fields=None) -> None:
    """Write one score object per record: id, score, per_timestep, config.

    ``records`` and ``reports`` are aligned by position. ``extra_fields``
    optionally maps a record index to additional keys for that row
    (additive; the four base keys are stable).
    """
    record_list = list(records)
    report_list = list(reports)
    if len(record_list) != len(report_list):
        raise LengthMismatch(
            f"{len(record_list)} records vs {len(report_list)} reports"
        )

    def rows():
        for index, (record, report) in enumerate(zip(record_list, report_list)):
            row = score_row(record.id if hasattr(record, "id") else str(record), report)
            if extra_fields and index in extra_fields:
                row.update(extra_fields[index])
            yield row

    write_jsonl(rows(), path)
