# # Sweeping the idle-reset threshold
#
# Replaying reconstructed threads as if the history were dropped after a long
# pause tells us how many prompt tokens a reset would have saved.

# +
from memreset import DEFAULT_THRESHOLDS, generate, preset, reconstruct, sort_records, sweep
from memreset.simulate import apply_reset

# +
config = preset("paper-like", seed=11, n_threads=8000, n_users=300)
records, _ = generate(config)
threads = reconstruct(sort_records(records), config.title_delta).threads
len(threads)

# +
for r in sweep(threads, DEFAULT_THRESHOLDS, jobs=2):
    print(f"{r.threshold_seconds / 3600:5g} h  saved {r.tokens_saved:>10,}  ({r.reduction_pct}%)  "
          f"threads affected {r.threads_affected:,}")

# -
# One thread in detail: the default rule subtracts the previous prompt, the
# stricter rule also drops the previous completion.
thread = next(t for t in threads if any(p and p > 3600 for p in t.pauses))
thread.prompt_tokens, thread.pauses

# +
for rule in ("previous-prompt", "previous-exchange"):
    print(rule, apply_reset(thread, 3600, rule).new_prompt_tokens)
