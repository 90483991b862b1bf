# # How a stateless chat API bills a conversation
#
# Every call re-sends the system template plus the whole history, so the
# prompt of message n carries every earlier exchange. This notebook builds a
# small conversation by hand and compares a few memory policies.

# +
from memreset import ModelLimits, accumulate, parse_policy
from memreset.memory_model import Turn

# +
# five user messages, each answered by the model; a long pause before the fourth
turns = [
    Turn(40, 220),
    Turn(25, 180, pause_before_seconds=35),
    Turn(60, 300, pause_before_seconds=90),
    Turn(30, 150, pause_before_seconds=6 * 3600),
    Turn(20, 120, pause_before_seconds=50),
]
limits = ModelLimits(template_tokens=40, token_limit=8192)

# -
# Full history: the prompt grows by the previous exchange at every step.
prompts, _ = accumulate(turns, limits, parse_policy("full"))
prompts

# +
for text in ("full", "window:k=2", "idle:threshold=1800", "summary:trigger=400,summary=80"):
    prompts, overhead = accumulate(turns, limits, parse_policy(text))
    print(f"{text:32s} prompts={prompts} total={sum(prompts) + overhead}")

# -
# Lowering the context limit clamps late prompts.
accumulate(turns, ModelLimits(40, 700), parse_policy("full"))[0]

# +
# An infinite idle threshold never fires, so it is the same as full history.
assert accumulate(turns, limits, parse_policy("idle:threshold=inf"))[0] == accumulate(turns, limits, parse_policy("full"))[0]
