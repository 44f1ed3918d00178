"""
RTT histograms, the cache gap and per-domain tables
===================================================
"""

# %%
import numpy as np

from dnstiming.levels import DnsLevel
from dnstiming.timing import (
    COARSE, domain_table, histogram, interval_table, rtt_probability, split_cache_resolve,
)
from dnstiming.traffic import load_profile, reference_workload, simulate_benign

txs = simulate_benign(reference_workload("local", 30_000), load_profile("local"), seed=5)
rtt = np.array([t.rtt_us for t in txs])

# %% [markdown]
# ## Cache versus resolution
# Cache answers sit near the client-resolver ping; anything that needed
# an upstream query is tens of milliseconds slower. The widest empty gap
# above the ping separates the two.

# %%
split = split_cache_resolve(rtt, ping_mean_us=2000)
truth = np.array([t.level is DnsLevel.CACHE for t in txs])
print(f"threshold {split.threshold_us / 1000:.2f} ms, gap {split.gap_width_us / 1000:.1f} ms")
print("labelled correctly:", (split.is_cache(rtt) == truth).mean())

# %% [markdown]
# ## Probability of an RTT bin
# n_t / N over 10 ms bins. The first bin holds the cache answers.

# %%
h = histogram(rtt, COARSE)
for t in range(0, 20, 2):
    p = rtt_probability(h, t)
    print(f"{t * 10:>4}-{t * 10 + 10:<4} ms {p:.4f} {'#' * int(p * 200)}")
print("bins below the noise floor:", int(h.noise_bins().sum()))

# %% [markdown]
# ## One domain
# The share of each level for a single site, overall and inside a window.

# %%
table = domain_table(txs, "wikipedia.org")
print({lvl.value: round(s, 3) for lvl, s in table.level_shares.items()}, "of", table.total)
window = interval_table(txs, "wikipedia.org", 150_000, 250_000)
print(f"P(150-250 ms) = {window.interval_probability:.3f};",
      {lvl.value: round(s, 3) for lvl, s in window.level_shares.items()})
