"""
Simulating resolver traffic
===========================

A stub resolver's answers either come straight from the recursive
resolver's cache or require a walk down the DNS hierarchy. This script
builds both kinds of traffic from a bundled level model and then adds one
spoofed answer per query.
"""

# %%
import numpy as np

from dnstiming.levels import DnsLevel
from dnstiming.traffic import (
    TtlMode, level_counts, load_profile, reference_workload, sample_level_rtt, simulate_attack, simulate_benign,
)

# %% [markdown]
# ## Level models
# A level model holds, per (level, server), an offset, a Poisson mean and a
# uniform jitter in milliseconds. Root server j sits far closer to the
# local vantage point than the other roots.

# %%
local = load_profile("local")
rng = np.random.default_rng(0)
for server in ("a.root-servers.net", "j.root-servers.net"):
    draws = np.array([sample_level_rtt(local, DnsLevel.ROOT, server, rng) for _ in range(2000)]) / 1000
    print(f"{server}: median {np.median(draws):.1f} ms, 5-95% {np.percentile(draws, 5):.1f}"
          f"-{np.percentile(draws, 95):.1f} ms")

# %% [markdown]
# ## A workload
# The default workload spreads queries over popular sites so that the
# aggregate level mix matches the published capture.

# %%
workload = reference_workload("local", total_queries=50_000)
benign = simulate_benign(workload, local, seed=1)
counts = level_counts(benign)
for level in (DnsLevel.CACHE, DnsLevel.ROOT, DnsLevel.GTLD, DnsLevel.CCTLD, DnsLevel.SLD, DnsLevel.HOST):
    print(f"{level.value:>6}: {counts.get(level, 0) / len(benign):.4f}")

# %% [markdown]
# A root-level transaction carries the resolver's upstream contacts, each
# with its start time relative to the client query.

# %%
walk = next(t for t in benign if t.level is DnsLevel.ROOT)
print(walk.domain, walk.rtt_us, "us")
for c in walk.contacts:
    print(f"  {c.level.value:>5} {c.server:<22} start {c.start_us:>7} us  rtt {c.rtt_us:>7} us")

# %% [markdown]
# ## TTL control
# A long TTL keeps everything in the cache; a zero TTL forces resolution.

# %%
for mode in TtlMode:
    txs = simulate_benign(reference_workload("local", 5000, mode), local, seed=2)
    share = level_counts(txs).get(DnsLevel.CACHE, 0) / len(txs)
    print(f"{mode.value:>5} TTL: cache share {share:.3f}")

# %% [markdown]
# ## Spoofed answers
# The attacker races the resolver with one answer per query, timed
# uniformly inside the model's attack window.

# %%
attack = simulate_attack(benign, local, seed=3)
rtt = np.array([t.rtt_us for t in attack]) / 1000
print(len(attack), "spoofed answers between", rtt.min(), "and", rtt.max(), "ms")
