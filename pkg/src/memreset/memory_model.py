"""Token accumulation of conversational memory.

A stateless model only sees context that is re-sent with each request, so a
chat front end resubmits the template plus every earlier exchange. The
prompt of request ``n`` under full history is::

    P[n] = min(L, T + sum(u[i] + c[i] for i < n) + u[n])

with ``T`` the template tokens, ``u``/``c`` the user and completion tokens of
each turn, and ``L`` the model's input limit. The other policies change which
earlier exchanges are counted.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence, Union

#: Input limits quoted for common chat models.
GPT35_TURBO_LIMIT = 4_096
GPT35_TURBO_8K_LIMIT = 8_192
GPT4_1106_PREVIEW_LIMIT = 128_000


@dataclass(frozen=True)
class Turn:
    user_tokens: int
    completion_tokens: int = 0
    pause_before_seconds: float | None = None


@dataclass(frozen=True)
class ModelLimits:
    """Template size and input limit. ``token_limit=None`` disables clamping."""

    template_tokens: int = 0
    token_limit: int | None = GPT35_TURBO_8K_LIMIT

    def __post_init__(self):
        if self.template_tokens < 0:
            raise ValueError("template_tokens must be >= 0")
        if self.token_limit is not None and self.token_limit < 1:
            raise ValueError("token_limit must be >= 1")


@dataclass(frozen=True)
class FullHistory:
    def describe(self) -> str:
        return "full"


@dataclass(frozen=True)
class BufferWindow:
    """Keep only the last ``window_k`` exchanges; ``math.inf`` keeps all."""

    window_k: float

    def __post_init__(self):
        if not (self.window_k >= 0):
            raise ValueError("window_k must be >= 0")
        if self.window_k != math.inf and self.window_k != int(self.window_k):
            raise ValueError("window_k must be an integer or inf")

    def describe(self) -> str:
        return f"window:k={_fmt_number(self.window_k)}"


@dataclass(frozen=True)
class SummaryMemory:
    """Replace history by a summary once it exceeds ``trigger_history_tokens``.

    Each summarization is charged as an extra call consuming the replaced
    history plus the produced summary.
    """

    summary_tokens: int
    trigger_history_tokens: int

    def __post_init__(self):
        if self.summary_tokens < 1:
            raise ValueError("summary_tokens must be >= 1")
        if self.trigger_history_tokens < 0:
            raise ValueError("trigger_history_tokens must be >= 0")

    def describe(self) -> str:
        return f"summary:trigger={self.trigger_history_tokens},summary={self.summary_tokens}"


@dataclass(frozen=True)
class IdleReset:
    """Drop history when the pause before a turn exceeds ``threshold_seconds``."""

    threshold_seconds: float

    def __post_init__(self):
        if not (self.threshold_seconds > 0):
            raise ValueError("threshold_seconds must be > 0")

    def describe(self) -> str:
        return f"idle:threshold={_fmt_number(self.threshold_seconds)}"


MemoryPolicy = Union[FullHistory, BufferWindow, SummaryMemory, IdleReset]


def _fmt_number(x: float) -> str:
    if x == math.inf:
        return "inf"
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _number(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not a valid policy parameter")
    return int(value) if value.is_integer() else value


def parse_policy(text: str) -> MemoryPolicy:
    """Parse a policy descriptor such as ``window:k=5`` or ``idle:threshold=1800``."""
    kind, _, rest = text.strip().partition(":")
    params: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"malformed policy parameter {item!r}")
            params[key.strip()] = value.strip()
    try:
        if kind == "full" and not params:
            return FullHistory()
        if kind == "window" and set(params) == {"k"}:
            return BufferWindow(_number(params["k"]))
        if kind == "summary" and set(params) == {"trigger", "summary"}:
            return SummaryMemory(int(params["summary"]), int(params["trigger"]))
        if kind == "idle" and set(params) == {"threshold"}:
            return IdleReset(_number(params["threshold"]))
    except ValueError as exc:
        raise ValueError(f"invalid policy {text!r}: {exc}") from None
    raise ValueError(f"invalid policy {text!r}")


def policy_to_dict(policy: MemoryPolicy) -> dict:
    if isinstance(policy, FullHistory):
        return {"kind": "full"}
    if isinstance(policy, BufferWindow):
        return {"kind": "window", "k": _json_number(policy.window_k)}
    if isinstance(policy, SummaryMemory):
        return {
            "kind": "summary",
            "trigger": policy.trigger_history_tokens,
            "summary": policy.summary_tokens,
        }
    if isinstance(policy, IdleReset):
        return {"kind": "idle", "threshold": _json_number(policy.threshold_seconds)}
    raise TypeError(f"not a memory policy: {policy!r}")


def policy_from_dict(data: dict) -> MemoryPolicy:
    kind = data.get("kind")
    if kind == "full":
        return FullHistory()
    if kind == "window":
        return BufferWindow(_from_json_number(data["k"]))
    if kind == "summary":
        return SummaryMemory(int(data["summary"]), int(data["trigger"]))
    if kind == "idle":
        return IdleReset(_from_json_number(data["threshold"]))
    raise ValueError(f"unknown policy kind {kind!r}")


def _json_number(x: float):
    return "inf" if x == math.inf else x


def _from_json_number(x) -> float:
    return math.inf if x == "inf" else x


def accumulate(
    turns: Sequence[Turn], limits: ModelLimits, policy: MemoryPolicy
) -> tuple[list[int], int]:
    """Prompt tokens of every request under ``policy`` plus summarization overhead.

    The completion of turn ``n`` is not part of ``P[n]``; it joins the history
    from turn ``n + 1`` on. After an idle reset the template is sent again.
    """
    if not turns:
        raise ValueError("turns must be nonempty")
    template = limits.template_tokens
    limit = limits.token_limit if limits.token_limit is not None else math.inf
    prompts: list[int] = []
    overhead = 0

    if isinstance(policy, BufferWindow):
        k = policy.window_k
        window: deque[int] = deque(maxlen=None if k == math.inf else int(k))
        for t in turns:
            prompts.append(int(min(limit, template + sum(window) + t.user_tokens)))
            window.append(t.user_tokens + t.completion_tokens)
        return prompts, 0

    history = 0
    for t in turns:
        if isinstance(policy, IdleReset):
            pause = t.pause_before_seconds
            if pause is not None and pause > policy.threshold_seconds:
                history = 0
        elif isinstance(policy, SummaryMemory):
            if history > policy.trigger_history_tokens:
                overhead += history + policy.summary_tokens
                history = policy.summary_tokens
        elif not isinstance(policy, FullHistory):
            raise TypeError(f"not a memory policy: {policy!r}")
        prompts.append(int(min(limit, template + history + t.user_tokens)))
        history += t.user_tokens + t.completion_tokens
    return prompts, overhead


def policy_total(turns: Sequence[Turn], limits: ModelLimits, policy: MemoryPolicy) -> int:
    prompts, overhead = accumulate(turns, limits, policy)
    return sum(prompts) + overhead
