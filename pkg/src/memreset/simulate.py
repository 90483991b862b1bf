"""What-if replay of pause-triggered memory resets over reconstructed threads.

When the pause before a message exceeds a threshold the conversation is
assumed to start afresh, so the tokens of the outdated history are removed
from that message and every later one in the thread. The amount removed is
the (already adjusted) prompt of the record preceding the reset.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

from joblib import Parallel, delayed

from .memory_model import IdleReset, ModelLimits, Turn, accumulate
from .threads import Thread

#: 24 h, 12 h, 6 h, 3 h, 1 h, 30 min. Only the endpoints come from the study;
#: the intermediate steps are an interpolation.
DEFAULT_THRESHOLDS: tuple[int, ...] = (86_400, 43_200, 21_600, 10_800, 3_600, 1_800)

#: ``previous-prompt`` subtracts the previous record's prompt tokens, leaving
#: the previous completion in memory. ``previous-exchange`` also subtracts
#: that completion, which removes the full prior history.
RESET_RULES = ("previous-prompt", "previous-exchange")

_UNITS = {"s": 1, "m": 60, "min": 60, "h": 3600, "d": 86400}


@dataclass(frozen=True)
class AdjustedThread:
    thread_id: str
    prompt_tokens: tuple[int, ...]
    new_prompt_tokens: tuple[int, ...]
    reset_here: tuple[bool, ...]

    @property
    def resets(self) -> int:
        return sum(self.reset_here)


@dataclass(frozen=True)
class SimulationResult:
    threshold_seconds: float
    total_prompt_tokens_before: int
    total_prompt_tokens_after: int
    threads_affected: int
    resets_applied: int
    total_threads: int = 0

    @property
    def tokens_saved(self) -> int:
        return self.total_prompt_tokens_before - self.total_prompt_tokens_after

    @property
    def reduction_fraction(self) -> float:
        if self.total_prompt_tokens_before <= 0:
            return 0.0
        return 1 - self.total_prompt_tokens_after / self.total_prompt_tokens_before

    @property
    def reduction_pct(self) -> str:
        return f"{100 * self.reduction_fraction:.1f}"

    def to_dict(self) -> dict:
        return {
            "threshold_seconds": format_threshold(self.threshold_seconds),
            "total_prompt_tokens_before": self.total_prompt_tokens_before,
            "total_prompt_tokens_after": self.total_prompt_tokens_after,
            "tokens_saved": self.tokens_saved,
            "reduction_fraction": self.reduction_fraction,
            "reduction_pct": self.reduction_pct,
            "threads_affected": self.threads_affected,
            "total_threads": self.total_threads,
            "resets_applied": self.resets_applied,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SimulationResult:
        return cls(
            threshold_seconds=parse_duration(str(data["threshold_seconds"])),
            total_prompt_tokens_before=data["total_prompt_tokens_before"],
            total_prompt_tokens_after=data["total_prompt_tokens_after"],
            threads_affected=data["threads_affected"],
            resets_applied=data["resets_applied"],
            total_threads=data.get("total_threads", 0),
        )


def parse_duration(text: str) -> float:
    """Seconds from ``"1800"``, ``"30m"``, ``"24h"``, ``"2d"`` or ``"inf"``."""
    s = text.strip().lower()
    if s in ("inf", "infinity", "∞"):
        return math.inf
    for unit in sorted(_UNITS, key=len, reverse=True):
        if s.endswith(unit) and s[: -len(unit)].strip():
            value = float(s[: -len(unit)]) * _UNITS[unit]
            break
    else:
        value = float(s)
    if math.isnan(value) or value < 0:
        raise ValueError(f"invalid duration {text!r}")
    return int(value) if value != math.inf and value.is_integer() else value


def parse_thresholds(text: str) -> list[float]:
    values = [parse_duration(part) for part in text.split(",") if part.strip()]
    if not values:
        raise ValueError("at least one threshold is required")
    return values


def format_threshold(value: float) -> int | float | str:
    if value == math.inf:
        return "inf"
    return int(value) if float(value).is_integer() else value


def _adjust(
    prompts: Sequence[int],
    completions: Sequence[int],
    pauses: Sequence[int | None],
    threshold: float,
    rule: str,
) -> tuple[list[int], list[bool]]:
    removed = 0
    new: list[int] = []
    flags: list[bool] = []
    for j, (p, pause) in enumerate(zip(prompts, pauses)):
        reset = j > 0 and pause is not None and pause > threshold
        if reset:
            # previous record's adjusted prompt joins the removed history
            removed += prompts[j - 1] - removed
            if rule == "previous-exchange":
                removed += completions[j - 1]
        new.append(p if removed == 0 else min(p, max(1, p - removed)))
        flags.append(reset)
    return new, flags


def apply_reset(
    thread: Thread, threshold_seconds: float, rule: str = "previous-prompt"
) -> AdjustedThread:
    """Compute ``new_prompt_tokens`` for one annotated thread.

    At every message whose pause exceeds ``threshold_seconds`` the adjusted
    prompt of the preceding record is added to the running amount removed,
    which is then subtracted from that message and all later ones. Adjusted
    counts never drop below one token.
    """
    if rule not in RESET_RULES:
        raise ValueError(f"unknown reset rule {rule!r}; expected one of {RESET_RULES}")
    prompts = thread.prompt_tokens
    new, flags = _adjust(
        prompts,
        [m.completion_tokens for m in thread.messages],
        thread.pauses,
        threshold_seconds,
        rule,
    )
    return AdjustedThread(thread.thread_id, tuple(prompts), tuple(new), tuple(flags))


def replay_oracle(turns: Sequence[Turn], limits: ModelLimits, threshold_seconds: float) -> list[int]:
    """Prompt tokens obtained by replaying the turns under an idle-reset memory."""
    return accumulate(turns, limits, IdleReset(threshold_seconds))[0]


def infer_turns(thread: Thread, template_tokens: int = 0) -> list[Turn]:
    """Recover per-turn user tokens from observed full-history prompts.

    ``u[1] = P[1] - T`` and ``u[n] = P[n] - P[n-1] - c[n-1]``. Exact for
    unclamped threads; clamped or noisy steps are floored at one token.
    """
    turns = []
    prev = None
    for m in thread.messages:
        if prev is None:
            user = m.prompt_tokens - template_tokens
        else:
            user = m.prompt_tokens - prev.prompt_tokens - prev.completion_tokens
        turns.append(Turn(max(1, user), m.completion_tokens, m.pause_seconds))
        prev = m
    return turns


def _sweep_chunk(chunk, thresholds, rule):
    before = 0
    after = [0] * len(thresholds)
    affected = [0] * len(thresholds)
    resets = [0] * len(thresholds)
    for prompts, completions, pauses in chunk:
        before += sum(prompts)
        for i, theta in enumerate(thresholds):
            new, flags = _adjust(prompts, completions, pauses, theta, rule)
            after[i] += sum(new)
            n = sum(flags)
            resets[i] += n
            affected[i] += n > 0
    return before, after, affected, resets


def sweep(
    threads: Sequence[Thread],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    rule: str = "previous-prompt",
    jobs: int = 1,
) -> list[SimulationResult]:
    """Apply the reset simulation at each threshold and aggregate the totals.

    Threads are split into contiguous chunks that may run in parallel; the
    totals are integer sums, so the result does not depend on ``jobs``.
    """
    if not thresholds:
        raise ValueError("thresholds must be nonempty")
    if rule not in RESET_RULES:
        raise ValueError(f"unknown reset rule {rule!r}; expected one of {RESET_RULES}")
    thresholds = list(thresholds)
    compact = [
        (t.prompt_tokens, [m.completion_tokens for m in t.messages], t.pauses) for t in threads
    ]
    jobs = max(1, int(jobs))
    if jobs == 1 or len(compact) < 2 * jobs:
        parts = [_sweep_chunk(compact, thresholds, rule)]
    else:
        size = math.ceil(len(compact) / jobs)
        chunks = [compact[i : i + size] for i in range(0, len(compact), size)]
        parts = Parallel(n_jobs=jobs)(
            delayed(_sweep_chunk)(c, thresholds, rule) for c in chunks
        )
    before = sum(p[0] for p in parts)
    results = []
    for i, theta in enumerate(thresholds):
        results.append(
            SimulationResult(
                threshold_seconds=theta,
                total_prompt_tokens_before=before,
                total_prompt_tokens_after=sum(p[1][i] for p in parts),
                threads_affected=sum(p[2][i] for p in parts),
                resets_applied=sum(p[3][i] for p in parts),
                total_threads=len(compact),
            )
        )
    return results


CSV_COLUMNS = ("threshold_seconds", "before", "after", "reduction_pct", "threads_affected", "resets")


def results_to_csv(results: Sequence[SimulationResult]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow(
            (
                format_threshold(r.threshold_seconds),
                r.total_prompt_tokens_before,
                r.total_prompt_tokens_after,
                r.reduction_pct,
                r.threads_affected,
                r.resets_applied,
            )
        )
    return buf.getvalue().encode("utf-8")


def results_to_json(results: Sequence[SimulationResult]) -> bytes:
    return (json.dumps([r.to_dict() for r in results], indent=2) + "\n").encode("utf-8")


def results_from_json(data: bytes) -> list[SimulationResult]:
    return [SimulationResult.from_dict(d) for d in json.loads(data)]
