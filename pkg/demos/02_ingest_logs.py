"""
From captures to tagged transactions
====================================

Two captures are needed: one between the client and the resolver, one
between the resolver and the authoritative servers. Joining them on
(query ID, domain) recovers each resolution and the highest level it
reached.
"""

# %%
import random

from dnstiming.ingest import accumulate_rtt, correlate, format_log, parse_log, tag_level, to_logs
from dnstiming.traffic import load_profile, reference_workload, simulate_benign

# %% [markdown]
# Render some simulated traffic as the two log files, then shuffle them:
# correlation is key based and must not rely on record order.

# %%
truth = simulate_benign(reference_workload("local", 2000), load_profile("local"), seed=4)
client, resolver, registry = to_logs(truth)
print(format_log(client[:4]))
random.Random(0).shuffle(client)
random.Random(1).shuffle(resolver)

# %%
client = parse_log(format_log(client))
resolver = parse_log(format_log(resolver))
corr = correlate(client, resolver, registry)
print(corr.report())

# %% [markdown]
# Tag each tree with the highest level contacted and compare with the
# simulator's ground truth.

# %%
tagged = [tag_level(tree, registry) for tree in corr.trees]
key = lambda t: (t.domain, t.query_id, t.rtt_us)  # noqa: E731
print("identical to ground truth:", sorted(tagged, key=key) == sorted(truth, key=key))

# %% [markdown]
# Accumulated RTT per level: each level's time runs from its own query to
# the final upstream answer, so lower levels and processing gaps are
# included.

# %%
tree = next(t for t in corr.trees if len(t.contacts) == 3)
for level, rtt in accumulate_rtt(tree).items():
    print(f"{level.value:>5}: {rtt / 1000:.1f} ms")

# %% [markdown]
# A resolver response that never matches a query is reported, not dropped.

# %%
corr = correlate(client, [r for r in resolver if r is not resolver[0]], registry)
print("unmatched resolver records:", len(corr.unmatched_resolver))
