# # Token growth and pause lengths
#
# Two tables that describe a log before any simulation: prompt size by
# position in a thread, and how long users wait between messages.

# +
import numpy as np

from memreset import generate, pause_histogram, preset, reconstruct, sort_records, token_distribution

# +
config = preset("paper-like", seed=5, n_threads=5000, n_users=200)
threads = reconstruct(sort_records(generate(config)[0]), config.title_delta).threads

# +
dist = token_distribution(threads)
print(dist.to_csv().decode().splitlines()[:8])

# -
# Pauses on a log scale, two bins per decade starting at one second.
hist = pause_histogram(threads, bins_per_decade=2)
for lo, hi, n in zip(hist.edges, hist.edges[1:], hist.counts):
    print(f"[{lo:>10.0f}, {hi:>10.0f})  {n:6d}  " + "#" * int(60 * n / max(hist.counts)))

# +
pauses = np.array([p for t in threads for p in t.pauses if p is not None])
print("share of pauses over 30 min: %.1f%%" % (100 * (pauses > 1800).mean()))
