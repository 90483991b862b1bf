"""Reconstruction of conversation threads from sorted log records.

Logs carry no thread identifier. A new thread is recognised by its title
request: an auxiliary call made at the same second as the first user prompt
whose prompt is larger than that prompt by a constant offset. Those helper
calls mark thread starts and are then dropped from the data.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime
from itertools import combinations, groupby
from typing import Iterable, Sequence

from .ingest import LogRecord, format_timestamp, parse_timestamp, seconds_between

MONOTONIC_MODES = ("nondecreasing", "strict")


class ReconstructionError(Exception):
    pass


@dataclass(frozen=True)
class Message:
    thread_id: str
    message_index: int
    timestamp: datetime
    prompt_tokens: int
    completion_tokens: int
    pause_seconds: int | None = None
    source_line: int = 0


@dataclass(frozen=True)
class Thread:
    thread_id: str
    user_id: str
    messages: tuple[Message, ...]
    orphan: bool = False

    @property
    def prompt_tokens(self) -> list[int]:
        return [m.prompt_tokens for m in self.messages]

    @property
    def pauses(self) -> list[int | None]:
        return [m.pause_seconds for m in self.messages]


@dataclass(frozen=True)
class HelperMarker:
    """A title request paired with the first prompt of the thread it opens.

    ``alternatives`` lists the source lines of other records that could have
    been the pair; it is empty unless the pairing was ambiguous.
    """

    helper: LogRecord
    start: LogRecord
    inferred_delta: int
    alternatives: tuple[int, ...] = ()

    @property
    def ambiguous(self) -> bool:
        return bool(self.alternatives)


@dataclass
class Reconstruction:
    """Everything produced by :func:`reconstruct`, including diagnostics."""

    threads: list[Thread]
    title_delta: int
    markers: int
    dropped_irregular: int
    orphan_threads: int
    ambiguous: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "title_delta": self.title_delta,
            "helpers_detected": self.markers,
            "threads_kept": len(self.threads),
            "threads_dropped_irregular": self.dropped_irregular,
            "orphan_threads": self.orphan_threads,
            "ambiguous_pairings": self.ambiguous,
        }


def _same_second_groups(records: Sequence[LogRecord]) -> Iterable[list[LogRecord]]:
    for _, grp in groupby(records, key=lambda r: (r.user_id, r.timestamp)):
        group = list(grp)
        if len(group) > 1:
            yield group


def infer_title_delta(records: Sequence[LogRecord]) -> int:
    """Most common prompt-token offset between same-user, same-second records.

    Ties go to the smallest offset. Zero offsets are ignored since a helper
    prompt is strictly larger than the prompt it titles.
    """
    counts: Counter[int] = Counter()
    for group in _same_second_groups(records):
        for a, b in combinations(group, 2):
            delta = abs(a.prompt_tokens - b.prompt_tokens)
            if delta:
                counts[delta] += 1
    if not counts:
        raise ReconstructionError("cannot infer delta; supply --title-delta")
    best = max(counts.values())
    return min(d for d, n in counts.items() if n == best)


def detect_helpers(records: Sequence[LogRecord], delta: int) -> list[HelperMarker]:
    """Pair every title request with the thread-start prompt it accompanies.

    ``records`` must be sorted with :func:`~memreset.ingest.sort_records`.
    A record can take part in at most one pair. When several records qualify
    as the start for one helper the lowest source line wins and the marker
    lists the others in ``alternatives``.
    """
    markers: list[HelperMarker] = []
    for group in _same_second_groups(records):
        used: set[int] = set()
        for h in sorted(group, key=lambda r: r.source_line):
            if id(h) in used:
                continue
            candidates = [
                m
                for m in group
                if m is not h
                and id(m) not in used
                and m.prompt_tokens + delta == h.prompt_tokens
            ]
            if not candidates:
                continue
            candidates.sort(key=lambda r: r.source_line)
            start = candidates[0]
            used.update((id(h), id(start)))
            markers.append(
                HelperMarker(
                    helper=h,
                    start=start,
                    inferred_delta=delta,
                    alternatives=tuple(m.source_line for m in candidates[1:]),
                )
            )
    return markers


def _thread(user: str, number: int, records: list[LogRecord], orphan: bool) -> Thread:
    tid = f"{user}#{number}"
    messages = tuple(
        Message(
            thread_id=tid,
            message_index=i,
            timestamp=r.timestamp,
            prompt_tokens=r.prompt_tokens,
            completion_tokens=r.completion_tokens,
            source_line=r.source_line,
        )
        for i, r in enumerate(records, start=1)
    )
    return Thread(thread_id=tid, user_id=user, messages=messages, orphan=orphan)


def label_threads(records: Sequence[LogRecord], markers: Sequence[HelperMarker]) -> list[Thread]:
    """Split each user's records into threads at the marked start records.

    Helper records are removed. Records of a user that precede the user's
    first marker form an orphan thread (numbered 0).
    """
    helper_ids = {id(m.helper) for m in markers}
    start_ids = {id(m.start) for m in markers}
    threads: list[Thread] = []
    for user, grp in groupby(records, key=lambda r: r.user_id):
        number = 0
        current: list[LogRecord] = []
        for r in grp:
            if id(r) in helper_ids:
                continue
            if id(r) in start_ids:
                if current:
                    threads.append(_thread(user, number, current, orphan=number == 0))
                number += 1
                current = [r]
            else:
                current.append(r)
        if current:
            threads.append(_thread(user, number, current, orphan=number == 0))
    return threads


def is_monotonic(values: Sequence[int], mode: str = "nondecreasing") -> bool:
    if mode == "nondecreasing":
        return all(a <= b for a, b in zip(values, values[1:]))
    if mode == "strict":
        return all(a < b for a, b in zip(values, values[1:]))
    raise ValueError(f"unknown monotonicity mode {mode!r}; expected one of {MONOTONIC_MODES}")


def filter_irregular(
    threads: Sequence[Thread], mode: str = "nondecreasing"
) -> tuple[list[Thread], int]:
    """Drop threads whose prompt tokens do not grow monotonically."""
    kept = [t for t in threads if is_monotonic(t.prompt_tokens, mode)]
    return kept, len(threads) - len(kept)


def annotate(threads: Sequence[Thread]) -> list[Thread]:
    """Fill in 1-based message indices and the pause before each message."""
    out = []
    for t in threads:
        messages = []
        prev = None
        for i, m in enumerate(t.messages, start=1):
            pause = None if prev is None else seconds_between(prev, m.timestamp)
            messages.append(replace(m, message_index=i, pause_seconds=pause))
            prev = m.timestamp
        out.append(replace(t, messages=tuple(messages)))
    return out


def reconstruct(
    records: Sequence[LogRecord],
    title_delta: int | None = None,
    mode: str = "nondecreasing",
    keep_orphans: bool = False,
) -> Reconstruction:
    """Run the full reconstruction on records sorted by ``sort_records``.

    Orphan threads are counted but left out of the result unless
    ``keep_orphans`` is set.
    """
    if mode not in MONOTONIC_MODES:
        raise ValueError(f"unknown monotonicity mode {mode!r}; expected one of {MONOTONIC_MODES}")
    delta = infer_title_delta(records) if title_delta is None else title_delta
    markers = detect_helpers(records, delta)
    labelled = label_threads(records, markers)
    orphans = sum(t.orphan for t in labelled)
    if not keep_orphans:
        labelled = [t for t in labelled if not t.orphan]
    kept, dropped = filter_irregular(labelled, mode)
    ambiguous = [
        {
            "helper_line": m.helper.source_line,
            "chosen_start_line": m.start.source_line,
            "other_candidate_lines": list(m.alternatives),
        }
        for m in markers
        if m.ambiguous
    ]
    return Reconstruction(
        threads=annotate(kept),
        title_delta=delta,
        markers=len(markers),
        dropped_irregular=dropped,
        orphan_threads=orphans,
        ambiguous=ambiguous,
    )


def thread_to_dict(thread: Thread) -> dict:
    return {
        "thread_id": thread.thread_id,
        "user_id": thread.user_id,
        "orphan": thread.orphan,
        "messages": [
            {
                "message_index": m.message_index,
                "datetime_UTC": format_timestamp(m.timestamp),
                "prompt_tokens": m.prompt_tokens,
                "completion_tokens": m.completion_tokens,
                "pause_in_seconds": m.pause_seconds,
                "source_line": m.source_line,
            }
            for m in thread.messages
        ],
    }


def thread_from_dict(data: dict) -> Thread:
    tid = data["thread_id"]
    messages = tuple(
        Message(
            thread_id=tid,
            message_index=m["message_index"],
            timestamp=parse_timestamp(m["datetime_UTC"]),
            prompt_tokens=m["prompt_tokens"],
            completion_tokens=m["completion_tokens"],
            pause_seconds=m.get("pause_in_seconds"),
            source_line=m.get("source_line", 0),
        )
        for m in data["messages"]
    )
    return Thread(
        thread_id=tid, user_id=data["user_id"], messages=messages, orphan=data.get("orphan", False)
    )


def dump_threads(threads: Iterable[Thread]) -> bytes:
    """Thread JSONL: one thread per line with its messages embedded."""
    lines = [json.dumps(thread_to_dict(t), separators=(",", ":")) for t in threads]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def load_threads(data: bytes) -> list[Thread]:
    return [
        thread_from_dict(json.loads(line))
        for line in data.decode("utf-8").splitlines()
        if line.strip()
    ]

