import math
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import simulated
from dnstiming.levels import DnsLevel
from dnstiming.timing import (
    COARSE, FINE, Binning, UndefinedDistributionError, build_histogram, domain_table, format_histogram, histogram,
    interval_table, parse_histogram, rtt_probability, split_cache_resolve,
)
from dnstiming.traffic import Transaction, load_profile, simulate_benign, single_domain_workload

# -- histograms ---------------------------------------------------------------------------


def test_single_bin():
    h = build_histogram([5, 5, 5], 0, 10, 10)
    assert h.counts.tolist() == [3] and h.total == 3


def test_edge_goes_to_upper_bin():
    h = build_histogram([10, 9, 0, 19], 0, 20, 10)
    assert h.counts.tolist() == [2, 2]


def test_out_of_range_counts_in_total_only():
    h = build_histogram([-1, 0, 20, 25], 0, 20, 10)
    assert h.counts.sum() == 1 and h.total == 4


def test_bin_count_rounds_up():
    assert Binning(0, 25, 10).n_bins == 3
    assert COARSE.n_bins == 100 and FINE.n_bins == 40


@pytest.mark.parametrize("width", [0, -5])
def test_bad_width(width):
    with pytest.raises(ValueError, match="width"):
        build_histogram([1], 0, 10, width)


def test_uniform_bins_within_three_sigma():
    # A single run of 100 bins breaches 3 sigma somewhere about a third of the
    # time, so check the breach rate over many runs against the binomial tail
    # P(|X - 10| > 3 sigma) = P(X >= 20) + P(X = 0), about 0.0035.
    sigma = math.sqrt(1000 * 0.01 * 0.99)
    outside = 0
    for seed in range(200):
        x = np.random.default_rng(seed).integers(0, 1_000_000, 1000)
        h = build_histogram(x, 0, 1_000_000, 10_000)
        assert h.counts.sum() == 1000
        outside += int((np.abs(h.counts - 10) > 3 * sigma).sum())
    assert outside / (200 * 100) < 0.005


def test_histogram_csv_round_trip():
    h = histogram([1, 2, 30_000, 5_000_000], COARSE)
    text = format_histogram(h)
    assert text.startswith("#format=histogram/1\n#total=4\nbin_lo_us,bin_hi_us,count\n0,10000,2\n")
    back = parse_histogram(text)
    assert back.binning == COARSE and back.total == 4 and np.array_equal(back.counts, h.counts)


@given(st.lists(st.integers(-100, 1100), max_size=80), st.randoms())
def test_histogram_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    a, b = build_histogram(xs, 0, 1000, 37), build_histogram(ys, 0, 1000, 37)
    assert np.array_equal(a.counts, b.counts) and a.total == b.total
    assert a.counts.sum() <= a.total


# -- rtt_probability ----------------------------------------------------------------------


def test_probability_single_bin():
    h = build_histogram([3, 4, 5], 0, 100, 10)
    assert rtt_probability(h, 0) == 1.0
    assert rtt_probability(h, 9) == 0.0


def test_probability_needs_samples():
    with pytest.raises(UndefinedDistributionError):
        rtt_probability(build_histogram([], 0, 10, 1), 0)
    with pytest.raises(IndexError):
        rtt_probability(build_histogram([1], 0, 10, 1), 10)


def test_yahoo_profile_first_bin_majority():
    # one popular domain answered from the cache most of the time
    shares = {DnsLevel.CACHE: 0.55, DnsLevel.ROOT: 0.15, DnsLevel.GTLD: 0.15, DnsLevel.SLD: 0.15}
    txs = simulate_benign(single_domain_workload("yahoo.com", shares, 1500), load_profile("local"), 5)
    h = histogram([t.rtt_us for t in txs], COARSE)
    assert rtt_probability(h, 0) > 0.5


@given(st.lists(st.integers(-50_000, 1_200_000), min_size=1, max_size=200))
def test_probabilities_sum_to_in_range_share(xs):
    h = histogram(xs, COARSE)
    total = sum(rtt_probability(h, t) for t in range(COARSE.n_bins))
    in_range = sum(0 <= x < 1_000_000 for x in xs)
    assert total == pytest.approx(in_range / len(xs), abs=1e-12)
    assert all(0 <= rtt_probability(h, t) <= 1 for t in range(COARSE.n_bins))


def test_noise_flag_is_metadata():
    h = histogram([1] * 40 + [15_000] * 3, COARSE)
    before = h.counts.copy()
    assert h.noise_bins().tolist()[:2] == [False, True]
    assert np.array_equal(h.counts, before)


# -- split_cache_resolve ---------------------------------------------------------------------


def test_split_fixture():
    samples = np.array([1500, 1800, 2100, 60_000, 70_000])
    split = split_cache_resolve(samples, 2000, min_side_share=0.0)
    assert 2100 < split.threshold_us < 60_000
    assert split.is_cache(samples).tolist() == [True, True, True, False, False]
    assert split.threshold_us > split.ping_mean_us and not split.low_confidence


def test_split_exhaustive_gap_oracle():
    # the widest gap above the ping, found by checking every pair of neighbours
    samples = sorted([1500, 1800, 2100, 60_000, 70_000])
    gaps = [(b - a, a, b) for a, b in zip(samples, samples[1:]) if (a + b) / 2 > 2000]
    w, a, b = max(gaps)
    split = split_cache_resolve(np.array(samples), 2000, min_side_share=0.0)
    assert split.gap_width_us == w and a < split.threshold_us <= b


def test_split_fallback():
    split = split_cache_resolve(np.array([900, 1000, 1100]), 2000)
    assert split.low_confidence and split.threshold_us == 6000 and split.gap_width_us == 0


def test_local_gap_about_50ms():
    txs = simulated("local", 20_000, 3)
    split = split_cache_resolve(txs, 2000)
    assert 40_000 <= split.gap_width_us <= 70_000
    truth = np.array([t.level is DnsLevel.CACHE for t in txs])
    assert (split.is_cache([t.rtt_us for t in txs]) == truth).mean() >= 0.99


@given(st.lists(st.integers(1, 200_000), min_size=1, max_size=60), st.integers(1, 4), st.integers(500, 5000))
def test_split_duplication_invariant(xs, times, ping):
    once = split_cache_resolve(np.array(xs), ping)
    again = split_cache_resolve(np.array(xs * times), ping)
    assert once == again
    assert once.threshold_us > ping


# -- probability tables -----------------------------------------------------------------------


def _fixture(domain, counts, rtt=1000):
    return [Transaction(i % 65536, domain, rtt, level) for level, n in counts.items() for i in range(n)]


def test_quora_shares():
    counts = {DnsLevel.CACHE: 988_713, DnsLevel.GTLD: 2257, DnsLevel.SLD: 9029}
    table = domain_table(_fixture("quora.com", counts), "quora.com")
    # the published percentages sum to 99.9999, i.e. they are truncated
    pct = {lvl: math.floor(s * 1e6) / 1e4 for lvl, s in table.level_shares.items()}
    assert pct == {DnsLevel.CACHE: 98.8713, DnsLevel.GTLD: 0.2257, DnsLevel.SLD: 0.9029}


def test_domain_table_single_and_unknown():
    txs = [Transaction(1, "a.com", 5, DnsLevel.SLD)]
    assert domain_table(txs, "a.com").level_shares == {DnsLevel.SLD: 1.0}
    with pytest.raises(KeyError, match="b.com"):
        domain_table(txs, "b.com")


@given(st.lists(st.tuples(st.sampled_from(["a.com", "b.org"]), st.sampled_from(list(DnsLevel))), min_size=1))
def test_domain_table_recount_oracle(rows):
    txs = [Transaction(0, d, 1, lvl) for d, lvl in rows]
    for d in {d for d, _ in rows}:
        mine = [lvl for dd, lvl in rows if dd == d]
        table = domain_table(txs, d)
        for lvl, share in table.level_shares.items():
            assert abs(share - mine.count(lvl) / len(mine)) <= 1e-12
        assert sum(table.level_shares.values()) == pytest.approx(1.0, abs=1e-9)


def test_abc_interval_shares():
    inside = _fixture("abc.com", {DnsLevel.ROOT: 10, DnsLevel.GTLD: 40, DnsLevel.SLD: 100}, rtt=95_000)
    outside = _fixture("abc.com", {DnsLevel.CACHE: 50_000 - 150}, rtt=1000)
    table = interval_table(inside + outside, "abc.com", 90_000, 100_000)
    assert table.interval_probability == pytest.approx(0.003, abs=1e-12)
    # printed values are truncated to their shown digits
    shown = {lvl: math.floor(s * 10_000) / 10_000 for lvl, s in table.level_shares.items()}
    assert shown == {DnsLevel.ROOT: 0.0666, DnsLevel.GTLD: 0.2666, DnsLevel.SLD: 0.6666}
    assert table.level_shares[DnsLevel.SLD] == pytest.approx(0.666, abs=1e-3)


def test_interval_covering_everything_and_empty():
    txs = _fixture("x.com", {DnsLevel.CACHE: 3, DnsLevel.ROOT: 2})
    assert interval_table(txs, "x.com", 0, 10**9).interval_probability == 1.0
    empty = interval_table(txs, "x.com", 5000, 6000)
    assert empty.interval_probability == 0 and empty.level_shares == {}
    with pytest.raises(ValueError, match="empty interval"):
        interval_table(txs, "x.com", 10, 10)


@given(st.lists(st.tuples(st.integers(1, 300), st.sampled_from(list(DnsLevel))), min_size=1),
       st.integers(0, 300), st.integers(1, 300))
def test_interval_filter_oracle(rows, lo, width):
    hi = lo + width
    txs = [Transaction(0, "d.com", r, lvl) for r, lvl in rows]
    table = interval_table(txs, "d.com", lo, hi)
    sel = [lvl for r, lvl in rows if lo <= r < hi]
    assert table.interval_probability == pytest.approx(len(sel) / len(rows), abs=1e-15)
    for lvl, share in table.level_shares.items():
        assert share == pytest.approx(sel.count(lvl) / len(sel), abs=1e-12)
    if sel:
        assert sum(table.level_shares.values()) == pytest.approx(1.0, abs=1e-9)
