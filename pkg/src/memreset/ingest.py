"""Parsing and validation of anonymized token logs.

A log has one row per API call with the columns ``datetime_UTC``,
``user_id``, ``prompt_tokens`` and ``completion_tokens``. Rows that fail
validation are collected in a :class:`ValidationReport` instead of aborting
the parse.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import BinaryIO, Iterable, Mapping

FIELDS: tuple[str, ...] = ("datetime_UTC", "user_id", "prompt_tokens", "completion_tokens")
FORMATS: tuple[str, ...] = ("csv", "jsonl")

_TIMESTAMP_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})(?:[.,](\d+))?"
    r"(Z|z|[+-]\d{2}(?::?\d{2})?)?"
)
_INT_RE = re.compile(r"[+-]?[0-9]+")


class IngestError(Exception):
    """Fatal ingestion failure (unreadable stream, unknown format, bad header)."""


class RowError(ValueError):
    """A single row is malformed; carries the rejection reason."""


@dataclass(frozen=True)
class LogRecord:
    """One raw API call."""

    timestamp: datetime
    user_id: str
    prompt_tokens: int
    completion_tokens: int
    source_line: int = 0


@dataclass
class ValidationReport:
    row_count: int = 0
    user_count: int = 0
    time_span: tuple[datetime, datetime] | None = None
    rejected_rows: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "row_count": self.row_count,
            "user_count": self.user_count,
            "time_span": (
                [format_timestamp(t) for t in self.time_span] if self.time_span else None
            ),
            "rejected_rows": [{"line": n, "reason": r} for n, r in self.rejected_rows],
        }


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp, truncating to whole seconds.

    A missing offset is read as UTC. Any non-zero offset is rejected.
    """
    m = _TIMESTAMP_RE.fullmatch(text.strip())
    if m is None:
        raise RowError("invalid timestamp")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    offset = m.group(8)
    if offset and offset not in ("Z", "z"):
        digits = offset[1:].replace(":", "")
        if int(digits) != 0:
            raise RowError("non-UTC timestamp offset")
    try:
        return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
    except ValueError:
        raise RowError("invalid timestamp") from None


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_count(value: object, name: str) -> int:
    if isinstance(value, bool):
        raise RowError(f"invalid {name}")
    if isinstance(value, int):
        n = value
    elif isinstance(value, str) and _INT_RE.fullmatch(value.strip()):
        try:
            n = int(value.strip())
        except ValueError:  # beyond the interpreter's digit limit
            raise RowError(f"invalid {name}") from None
    else:
        raise RowError(f"invalid {name}")
    if n < 0:
        raise RowError("negative token count")
    return n


def _parse_user(value: object) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise RowError("invalid user_id")
    user = str(value).strip()
    if not user:
        raise RowError("empty user_id")
    if any(ord(ch) < 32 or ord(ch) == 127 for ch in user):
        raise RowError("control character in user_id")
    return user


def _make_record(values: Mapping[str, object], line: int) -> LogRecord:
    ts = values["datetime_UTC"]
    if not isinstance(ts, str):
        raise RowError("invalid timestamp")
    return LogRecord(
        timestamp=parse_timestamp(ts),
        user_id=_parse_user(values["user_id"]),
        prompt_tokens=_parse_count(values["prompt_tokens"], "prompt_tokens"),
        completion_tokens=_parse_count(values["completion_tokens"], "completion_tokens"),
        source_line=line,
    )


def _read_all(source: BinaryIO | bytes) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    try:
        data = source.read()
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read input: {exc}") from exc
    if isinstance(data, str):
        return data.encode("utf-8")
    if not isinstance(data, (bytes, bytearray)):
        raise IngestError("input stream did not return bytes")
    return bytes(data)


def _lines(data: bytes) -> Iterable[tuple[int, str | None]]:
    """Yield (line number, decoded text or None when not UTF-8)."""
    if data.startswith(b"\xef\xbb\xbf"):
        data = data[3:]
    for number, raw in enumerate(data.split(b"\n"), start=1):
        if raw.endswith(b"\r"):
            raw = raw[:-1]
        try:
            yield number, raw.decode("utf-8")
        except UnicodeDecodeError:
            yield number, None


def _resolve_header(header: list[str], column_map: Mapping[str, str] | None) -> list[int]:
    names = [h.strip() for h in header]
    wanted = [(column_map or {}).get(f, f) for f in FIELDS]
    missing = [w for w in wanted if w not in names]
    if missing:
        raise IngestError(f"CSV header is missing column(s): {', '.join(missing)}")
    return [names.index(w) for w in wanted]


def parse_log(
    source: BinaryIO | bytes,
    format: str = "csv",
    column_map: Mapping[str, str] | None = None,
) -> tuple[list[LogRecord], ValidationReport]:
    """Parse a token log into records plus a validation report.

    ``column_map`` maps canonical field names to the column (CSV) or key
    (JSONL) names used by a foreign log. Blank lines are ignored. Malformed
    rows never abort the parse; they are listed in ``rejected_rows``.
    """
    if format not in FORMATS:
        raise IngestError(f"unknown format {format!r}; expected one of {FORMATS}")
    data = _read_all(source)
    records: list[LogRecord] = []
    rejected: list[tuple[int, str]] = []
    keys = [(column_map or {}).get(f, f) for f in FIELDS]
    columns: list[int] | None = None

    for number, text in _lines(data):
        if text is None:
            if format == "csv" and columns is None:
                raise IngestError("CSV header is not valid UTF-8")
            rejected.append((number, "invalid UTF-8"))
            continue
        if not text.strip():
            continue
        if format == "csv":
            try:
                cells = next(csv.reader([text]))
            except csv.Error:
                if columns is None:
                    raise IngestError("CSV header cannot be parsed") from None
                rejected.append((number, "malformed CSV"))
                continue
            if columns is None:
                columns = _resolve_header(cells, column_map)
                width = len(cells)
                continue
            if len(cells) != width:
                rejected.append((number, f"expected {width} fields, got {len(cells)}"))
                continue
            values = {f: cells[i] for f, i in zip(FIELDS, columns)}
        else:
            try:
                obj = json.loads(text)
            except (ValueError, RecursionError):
                rejected.append((number, "malformed JSON"))
                continue
            if not isinstance(obj, dict):
                rejected.append((number, "JSON row is not an object"))
                continue
            absent = [k for k in keys if k not in obj]
            if absent:
                rejected.append((number, f"missing field(s): {', '.join(absent)}"))
                continue
            values = {f: obj[k] for f, k in zip(FIELDS, keys)}
        try:
            records.append(_make_record(values, number))
        except RowError as exc:
            rejected.append((number, str(exc)))

    if format == "csv" and columns is None:
        raise IngestError("CSV input has no header")
    return records, build_report(records, rejected)


def build_report(records: list[LogRecord], rejected: list[tuple[int, str]]) -> ValidationReport:
    span = None
    if records:
        times = [r.timestamp for r in records]
        span = (min(times), max(times))
    return ValidationReport(
        row_count=len(records),
        user_count=len({r.user_id for r in records}),
        time_span=span,
        rejected_rows=list(rejected),
    )


def sort_records(records: list[LogRecord]) -> list[LogRecord]:
    """Stable sort by (user_id, timestamp, source_line)."""
    return sorted(records, key=lambda r: (r.user_id, r.timestamp, r.source_line))


def write_log(records: Iterable[LogRecord], format: str = "csv") -> bytes:
    """Serialize records in the canonical log layout (inverse of :func:`parse_log`)."""
    if format not in FORMATS:
        raise IngestError(f"unknown format {format!r}; expected one of {FORMATS}")
    buf = io.StringIO()
    if format == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for r in records:
            writer.writerow(
                (format_timestamp(r.timestamp), r.user_id, r.prompt_tokens, r.completion_tokens)
            )
    else:
        for r in records:
            row = dict(
                zip(
                    FIELDS,
                    (format_timestamp(r.timestamp), r.user_id, r.prompt_tokens, r.completion_tokens),
                )
            )
            buf.write(json.dumps(row) + "\n")
    return buf.getvalue().encode("utf-8")


def data_line_offset(format: str) -> int:
    """Line number of the first data row in a file written by :func:`write_log`."""
    return 2 if format == "csv" else 1


def seconds_between(a: datetime, b: datetime) -> int:
    return (b - a) // timedelta(seconds=1)
