"""
Shrinking the attack window with an alpha mask
==============================================

A defender keeps only the 10 ms bins holding more than a fraction alpha
of past answers and rejects anything else. A spoofed answer timed
uniformly over the range succeeds only when it lands in a kept bin.
"""

# %%
from dnstiming.detect import alpha_grid, build_alpha_mask, classify_mask, sweep
from dnstiming.timing import COARSE, histogram
from dnstiming.traffic import load_profile, reference_workload, simulate_benign

# %%
for profile in ("local", "cloud"):
    txs = simulate_benign(reference_workload(profile, 100_000), load_profile(profile), seed=6)
    h = histogram([t.rtt_us for t in txs], COARSE)
    print(profile)
    for row in sweep(h, alpha_grid(0, 0.08, 0.01)):
        print(f"  alpha {row.alpha:.2f}: success {row.success_rate:.2f} ({row.retained_bins} bins kept)")

# %% [markdown]
# The operating point alpha = 0.5% as a classifier: answers outside the
# kept bins are flagged, including anything past the histogram range.

# %%
mask = build_alpha_mask(h, 0.005)
print(classify_mask([1_000, 95_000, 450_000, 2_000_000], mask))
