"""Synthetic token logs with known ground truth.

Each thread draws its own random stream from ``SeedSequence(seed,
spawn_key=(0, thread))``, so the output does not depend on the order in
which threads are generated. Prompt tokens follow the full-history
accumulation, and every thread starts with a title request at the same
second as its first message.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import timedelta
from typing import Sequence

import numpy as np

from .ingest import LogRecord, parse_timestamp
from .memory_model import FullHistory, ModelLimits, Turn, accumulate

DIST_KINDS = ("constant", "uniform", "geometric", "lognormal")

_GENERATE_STREAM = 0
_PERTURB_STREAM = 1


@dataclass(frozen=True)
class Dist:
    """Distribution descriptor for non-negative integer samples.

    ``constant:v``, ``uniform:low,high`` (inclusive), ``geometric:mean``
    (support starts at 1) and ``lognormal:median,sigma``.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        expected = {"constant": 1, "uniform": 2, "geometric": 1, "lognormal": 2}
        if self.kind not in expected:
            raise ValueError(f"unknown distribution {self.kind!r}; expected one of {DIST_KINDS}")
        if len(self.params) != expected[self.kind]:
            raise ValueError(f"{self.kind} takes {expected[self.kind]} parameter(s)")
        p = self.params
        if any(not math.isfinite(x) for x in p):
            raise ValueError("distribution parameters must be finite")
        if self.kind == "constant" and p[0] < 0:
            raise ValueError("constant must be >= 0")
        if self.kind == "uniform" and not 0 <= p[0] <= p[1]:
            raise ValueError("uniform needs 0 <= low <= high")
        if self.kind == "geometric" and p[0] < 1:
            raise ValueError("geometric mean must be >= 1")
        if self.kind == "lognormal" and (p[0] <= 0 or p[1] < 0):
            raise ValueError("lognormal needs median > 0 and sigma >= 0")

    @classmethod
    def parse(cls, text: str) -> Dist:
        kind, _, rest = text.partition(":")
        params = tuple(float(x) for x in rest.split(",")) if rest else ()
        return cls(kind.strip(), params)

    def __str__(self) -> str:
        return f"{self.kind}:{','.join(format(x, 'g') for x in self.params)}"

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "uniform":
            return (p[0] + p[1]) / 2
        if self.kind == "geometric":
            return p[0]
        return p[0] * math.exp(p[1] ** 2 / 2)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.kind == "constant":
            out = np.full(size, round(p[0]))
        elif self.kind == "uniform":
            out = rng.integers(int(p[0]), int(p[1]), size=size, endpoint=True)
        elif self.kind == "geometric":
            out = rng.geometric(1.0 / p[0], size=size)
        else:
            out = np.rint(rng.lognormal(math.log(p[0]), p[1], size=size))
        return out.astype(np.int64)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_users: int = 100
    n_threads: int = 1000
    messages_per_thread: Dist = Dist("geometric", (3.6,))
    user_tokens_dist: Dist = Dist("lognormal", (80.0, 1.0))
    completion_tokens_dist: Dist = Dist("lognormal", (250.0, 0.7))
    template_tokens: int = 0
    token_limit: int | None = 8_192
    title_delta: int = 64
    helper_completion_tokens: Dist = Dist("uniform", (5.0, 15.0))
    intra_pause_dist: Dist = Dist("lognormal", (45.0, 1.2))
    topic_change_rate: float = 0.08
    topic_pause_dist: Dist = Dist("lognormal", (10_800.0, 1.6))
    thread_gap_dist: Dist = Dist("lognormal", (14_400.0, 1.5))
    start: str = "2024-01-01T00:00:00Z"
    start_window_seconds: int = 30 * 86_400
    irregular_rate: float = 0.0
    collision_rate: float = 0.0

    def __post_init__(self):
        for name in ("n_users", "n_threads", "template_tokens", "title_delta", "start_window_seconds"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("topic_change_rate", "irregular_rate", "collision_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_threads > 0 and self.n_users == 0:
            raise ValueError("n_users must be positive when n_threads > 0")
        if self.title_delta == 0:
            raise ValueError("title_delta must be positive")
        if self.token_limit is not None and self.token_limit < 1:
            raise ValueError("token_limit must be >= 1")
        parse_timestamp(self.start)

    @property
    def limits(self) -> ModelLimits:
        return ModelLimits(self.template_tokens, self.token_limit)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(getattr(self, k), Dist):
                d[k] = str(getattr(self, k))
        return d

    @classmethod
    def from_dict(cls, data: dict) -> GeneratorConfig:
        kwargs = {}
        for k, v in data.items():
            if k not in cls.__dataclass_fields__:
                raise ValueError(f"unknown generator setting {k!r}")
            kwargs[k] = Dist.parse(v) if isinstance(cls.__dataclass_fields__[k].default, Dist) else v
        return cls(**kwargs)


#: Marginals picked by eye to resemble the shapes described for a
#: production chatbot log (short threads with a long tail, multi-day pauses,
#: 8,192-token limit). Qualitative only.
PRESETS: dict[str, GeneratorConfig] = {
    "paper-like": GeneratorConfig(
        n_users=1_500,
        n_threads=40_000,
        messages_per_thread=Dist("geometric", (3.6,)),
        user_tokens_dist=Dist("lognormal", (80.0, 1.3)),
        completion_tokens_dist=Dist("lognormal", (250.0, 0.7)),
        template_tokens=40,
        token_limit=8_192,
        title_delta=64,
        intra_pause_dist=Dist("lognormal", (45.0, 1.2)),
        topic_change_rate=0.08,
        topic_pause_dist=Dist("lognormal", (10_800.0, 1.6)),
        thread_gap_dist=Dist("lognormal", (14_400.0, 1.5)),
    ),
    "small": GeneratorConfig(n_users=20, n_threads=200),
}


def preset(name: str, **overrides) -> GeneratorConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return replace(base, **overrides)


@dataclass(frozen=True)
class TruthRow:
    """Ground truth for one emitted record; ``message_index`` is 0 for helpers."""

    row: int
    thread: int
    user_id: str
    message_index: int
    user_tokens: int
    completion_tokens: int
    pause_before_seconds: int | None
    helper: bool = False
    topic_change: bool = False
    irregular: bool = False


@dataclass
class GroundTruth:
    rows: list[TruthRow]
    template_tokens: int = 0
    token_limit: int | None = None
    title_delta: int = 0
    irregular_threads: frozenset[int] = field(default_factory=frozenset)

    @property
    def limits(self) -> ModelLimits:
        return ModelLimits(self.template_tokens, self.token_limit)

    def partition(self) -> dict[int, list[int]]:
        """Record rows of each thread's messages (helpers excluded), in order."""
        out: dict[int, list[tuple[int, int]]] = {}
        for r in self.rows:
            if not r.helper:
                out.setdefault(r.thread, []).append((r.message_index, r.row))
        return {t: [row for _, row in sorted(v)] for t, v in out.items()}

    def turns(self) -> dict[int, list[Turn]]:
        out: dict[int, list[tuple[int, Turn]]] = {}
        for r in self.rows:
            if not r.helper:
                turn = Turn(r.user_tokens, r.completion_tokens, r.pause_before_seconds)
                out.setdefault(r.thread, []).append((r.message_index, turn))
        return {t: [turn for _, turn in sorted(v, key=lambda x: x[0])] for t, v in out.items()}

    def to_jsonl(self) -> bytes:
        lines = [json.dumps(asdict(r), separators=(",", ":")) for r in self.rows]
        return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


@dataclass
class _Draft:
    index: int
    user: int
    turns: list[Turn]
    topic: list[bool]
    helper_completion: int
    gap: int
    offset: int
    collide: bool
    start: int = 0
    prompts: list[int] = field(default_factory=list)


def _rng(seed: int, stream: int, thread: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, thread)))


def _draft(config: GeneratorConfig, i: int) -> _Draft:
    rng = _rng(config.seed, _GENERATE_STREAM, i)
    user = int(rng.integers(config.n_users))
    n = max(1, int(config.messages_per_thread.sample(rng, 1)[0]))
    u = np.maximum(1, config.user_tokens_dist.sample(rng, n))
    c = np.maximum(0, config.completion_tokens_dist.sample(rng, n))
    topic = rng.random(n) < config.topic_change_rate
    intra = np.maximum(1, config.intra_pause_dist.sample(rng, n))
    long = np.maximum(1, config.topic_pause_dist.sample(rng, n))
    topic[0] = False
    turns = [
        Turn(int(u[k]), int(c[k]), None if k == 0 else int(long[k] if topic[k] else intra[k]))
        for k in range(n)
    ]
    return _Draft(
        index=i,
        user=user,
        turns=turns,
        topic=[bool(x) for x in topic],
        helper_completion=int(config.helper_completion_tokens.sample(rng, 1)[0]),
        gap=max(1, int(config.thread_gap_dist.sample(rng, 1)[0])),
        offset=int(rng.integers(config.start_window_seconds + 1)),
        collide=bool(rng.random() < config.collision_rate),
    )


def _layout(config: GeneratorConfig, drafts: list[_Draft]) -> None:
    """Place each user's threads one after another and compute prompts.

    With ``collision_rate`` > 0 a thread may start at the same second as the
    last message of the user's previous thread, with a first prompt equal to
    that message's prompt. This makes the title-request pairing ambiguous.
    """
    limits = config.limits
    last: dict[int, _Draft] = {}
    for d in drafts:
        prev = last.get(d.user)
        if prev is None:
            d.start = d.offset
        else:
            prev_end = prev.start + sum(t.pause_before_seconds or 0 for t in prev.turns)
            if d.collide:
                d.start = prev_end
                first = prev.prompts[-1] - limits.template_tokens
                if first >= 1:
                    d.turns[0] = replace(d.turns[0], user_tokens=first)
            else:
                d.start = prev_end + d.gap
        d.prompts = accumulate(d.turns, limits, FullHistory())[0]
        last[d.user] = d


def generate(config: GeneratorConfig) -> tuple[list[LogRecord], GroundTruth]:
    """Emit the log (time-ordered, as a server would write it) and its truth."""
    drafts = [_draft(config, i) for i in range(config.n_threads)]
    _layout(config, drafts)
    epoch = parse_timestamp(config.start)
    width = len(str(max(config.n_users - 1, 0)))

    pending = []
    for d in drafts:
        user = f"u{d.user:0{width}d}"
        t = d.start
        for k, (turn, prompt) in enumerate(zip(d.turns, d.prompts)):
            t += turn.pause_before_seconds or 0
            pending.append(
                (t, user, d.index, 2 * k, prompt, turn.completion_tokens,
                 TruthRow(0, d.index, user, k + 1, turn.user_tokens, turn.completion_tokens,
                          turn.pause_before_seconds, topic_change=d.topic[k]))
            )
        pending.append(
            (d.start, user, d.index, 1, d.prompts[0] + config.title_delta, d.helper_completion,
             TruthRow(0, d.index, user, 0, 0, d.helper_completion, None, helper=True))
        )
    pending.sort(key=lambda x: x[:4])

    records, rows = [], []
    for row, (t, user, _, _, prompt, completion, truth) in enumerate(pending):
        records.append(
            LogRecord(epoch + timedelta(seconds=t), user, int(prompt), int(completion), row + 2)
        )
        rows.append(replace(truth, row=row))
    truth = GroundTruth(rows, config.template_tokens, config.token_limit, config.title_delta)
    return records, truth


def perturb(
    records: Sequence[LogRecord], truth: GroundTruth, config: GeneratorConfig
) -> tuple[list[LogRecord], GroundTruth]:
    """Make a ``config.irregular_rate`` share of threads non-monotonic.

    A selected thread (it needs at least two messages) gets one message whose
    prompt falls below its predecessor's. The returned truth flags the thread
    and the altered row.
    """
    records = list(records)
    rows = list(truth.rows)
    if config.irregular_rate <= 0:
        return records, truth
    partition = truth.partition()
    irregular = set(truth.irregular_threads)
    for thread in sorted(partition):
        members = partition[thread]
        rng = _rng(config.seed, _PERTURB_STREAM, thread)
        if len(members) < 2 or not rng.random() < config.irregular_rate:
            continue
        k = int(rng.integers(1, len(members)))
        before = records[members[k - 1]].prompt_tokens
        if before < 1:
            continue
        target = members[k]
        records[target] = replace(records[target], prompt_tokens=int(rng.integers(0, before)))
        rows[target] = replace(rows[target], irregular=True)
        irregular.add(thread)
    return records, replace(truth, rows=rows, irregular_threads=frozenset(irregular))


def truth_from_jsonl(data: bytes) -> list[TruthRow]:
    return [TruthRow(**json.loads(line)) for line in data.decode("utf-8").splitlines() if line]

