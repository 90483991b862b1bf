"""Tables and summaries of reconstructed threads and simulation results."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .impact import ImpactEstimate
from .simulate import DEFAULT_THRESHOLDS, SimulationResult, format_threshold
from .threads import Thread


@dataclass(frozen=True)
class IndexStats:
    message_index: int
    n: int
    min: int
    median: float
    p90: float
    max: int


@dataclass
class TokenDistribution:
    rows: list[IndexStats] = field(default_factory=list)

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("message_index", "n", "min", "median", "p90", "max"))
        for r in self.rows:
            writer.writerow((r.message_index, r.n, r.min, _num(r.median), _num(r.p90), r.max))
        return buf.getvalue().encode("utf-8")


@dataclass
class PauseHistogram:
    """Counts per bin ``[edges[i], edges[i+1])`` plus zero-second pauses."""

    edges: list[float]
    counts: list[int]
    bins_per_decade: int
    underflow: int = 0

    @property
    def total(self) -> int:
        return self.underflow + sum(self.counts)

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("lower_seconds", "upper_seconds", "count"))
        writer.writerow((0, _num(self.edges[0]), self.underflow))
        for lo, hi, n in zip(self.edges, self.edges[1:], self.counts):
            writer.writerow((_num(lo), _num(hi), n))
        return buf.getvalue().encode("utf-8")


def _num(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return format(x, ".6g")


def token_distribution(threads: Sequence[Thread]) -> TokenDistribution:
    """Prompt-token statistics for each message position across threads."""
    by_index: dict[int, list[int]] = {}
    for t in threads:
        for m in t.messages:
            by_index.setdefault(m.message_index, []).append(m.prompt_tokens)
    rows = []
    for idx in sorted(by_index):
        values = np.asarray(by_index[idx])
        rows.append(
            IndexStats(
                message_index=idx,
                n=len(values),
                min=int(values.min()),
                median=float(np.median(values)),
                p90=float(np.percentile(values, 90)),
                max=int(values.max()),
            )
        )
    return TokenDistribution(rows)


def _decade_bin(x: float, per_decade: int) -> int:
    k = math.floor(per_decade * math.log10(x))
    # guard float error at exact edges
    while 10 ** ((k + 1) / per_decade) <= x:
        k += 1
    while 10 ** (k / per_decade) > x:
        k -= 1
    return k


def pause_histogram(threads: Sequence[Thread], bins_per_decade: int = 1) -> PauseHistogram:
    """Histogram of pauses with edges ``10 ** (k / bins_per_decade)`` seconds.

    Bins start at one second; zero-second pauses go to ``underflow``.
    """
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be >= 1")
    pauses = [m.pause_seconds for t in threads for m in t.messages if m.pause_seconds is not None]
    positive = [p for p in pauses if p > 0]
    bins = [_decade_bin(p, bins_per_decade) for p in positive]
    top = max(bins, default=0)
    counts = [0] * (top + 1)
    for k in bins:
        counts[k] += 1
    edges = [10 ** (k / bins_per_decade) for k in range(top + 2)]
    return PauseHistogram(edges, counts, bins_per_decade, underflow=len(pauses) - len(positive))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    """Provenance of one stage: inputs, outputs, configuration, times.

    Timestamps honour ``SOURCE_DATE_EPOCH`` so that manifests can be
    reproduced byte for byte.
    """

    stage: str
    tool_version: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: Path) -> None:
        self.outputs[path.name] = sha256_file(path)

    def finish(self) -> None:
        self.finished_at = _now()

    def to_json(self) -> bytes:
        data = {
            "stage": self.stage,
            "tool_version": self.tool_version,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        return (json.dumps(data, indent=2, sort_keys=True) + "\n").encode("utf-8")


def verify_manifest(path: str | Path) -> list[str]:
    """Names of outputs whose current digest differs from the manifest."""
    path = Path(path)
    data = json.loads(path.read_text("utf-8"))
    bad = []
    for name, digest in data["outputs"].items():
        target = path.parent / name
        if not target.exists() or sha256_file(target) != digest:
            bad.append(name)
    return bad


def _threshold_label(theta: float) -> str:
    if theta == math.inf:
        return "no reset"
    if theta % 3600 == 0:
        return f"{int(theta // 3600)} h"
    if theta % 60 == 0:
        return f"{int(theta // 60)} min"
    return f"{_num(theta)} s"


def summary_markdown(
    results: Sequence[SimulationResult],
    n_threads: int,
    n_messages: int,
    reconstruction: dict | None = None,
    impact: dict | None = None,
) -> bytes:
    """Human-readable summary; percentages are rounded to one decimal."""
    out = ["# Memory reset simulation", ""]
    out.append(f"Threads analysed: {n_threads:,}  ")
    out.append(f"Messages analysed: {n_messages:,}")
    if reconstruction:
        out.append("")
        out.append(
            f"Reconstruction: title delta {reconstruction['title_delta']}, "
            f"{reconstruction['helpers_detected']:,} title requests removed, "
            f"{reconstruction['threads_dropped_irregular']:,} irregular threads dropped, "
            f"{reconstruction['orphan_threads']:,} orphan threads, "
            f"{len(reconstruction['ambiguous_pairings']):,} ambiguous pairings."
        )
    out += [
        "",
        "| reset after pause > | prompt tokens | reduction | threads affected | resets |",
        "|---|---:|---:|---:|---:|",
    ]
    for r in results:
        out.append(
            f"| {_threshold_label(r.threshold_seconds)} | {r.total_prompt_tokens_after:,} "
            f"| {r.reduction_pct}% | {r.threads_affected:,} of {r.total_threads:,} "
            f"| {r.resets_applied:,} |"
        )
    defaults = set(DEFAULT_THRESHOLDS[1:-1])
    if any(r.threshold_seconds in defaults for r in results):
        out += ["", "Thresholds between 24 h and 30 min are interpolated defaults."]
    if impact:
        out += ["", "## Estimated savings", ""]
        for entry in impact.get("per_threshold", []):
            co2 = ", ".join(f"{c['label']}: {c['kg']:.3g} kg CO2e" for c in entry["co2e_kg"])
            out.append(
                f"- {_threshold_label(_threshold_value(entry['threshold_seconds']))}: "
                f"{entry['tokens_saved']:,} tokens, {entry['cost_saved']} {entry['currency']}"
                + (f", {co2}" if co2 else "")
            )
    return ("\n".join(out) + "\n").encode("utf-8")


def _threshold_value(value) -> float:
    return math.inf if value == "inf" else float(value)


def impact_table(results: Sequence[SimulationResult], estimates: Sequence[ImpactEstimate]) -> dict:
    return {
        "per_threshold": [
            {"threshold_seconds": format_threshold(r.threshold_seconds), **e.to_dict()}
            for r, e in zip(results, estimates)
        ]
    }
