from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from memreset.ingest import LogRecord
from memreset.threads import Message, Thread, annotate

T0 = datetime(2024, 1, 2, 10, 0, 0, tzinfo=timezone.utc)


def rec(seconds: int, user: str, prompt: int, completion: int = 0, line: int = 0) -> LogRecord:
    return LogRecord(T0 + timedelta(seconds=seconds), user, prompt, completion, line)


def make_thread(
    prompts, pauses=None, completions=None, thread_id: str = "t", user: str = "u"
) -> Thread:
    """Annotated thread from prompt counts and the pauses before messages 2..n."""
    pauses = list(pauses) if pauses is not None else [1] * (len(prompts) - 1)
    completions = completions or [0] * len(prompts)
    t = T0
    messages = []
    for i, (p, c) in enumerate(zip(prompts, completions)):
        if i:
            t = t + timedelta(seconds=pauses[i - 1])
        messages.append(Message(thread_id, i + 1, t, p, c))
    return annotate([Thread(thread_id, user, tuple(messages))])[0]


@pytest.fixture
def thread_factory():
    return make_thread
