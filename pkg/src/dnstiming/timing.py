"""Histograms, RTT probabilities, cache/resolve separation, probability tables."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from dnstiming.levels import DnsLevel
from dnstiming.traffic import Transaction, rtt_array

HIST_FORMAT = "#format=histogram/1"
NOISE_FLOOR = 30


class UndefinedDistributionError(ValueError):
    """Probability asked of a histogram holding no samples."""


@dataclass(frozen=True)
class Binning:
    lo_us: int
    hi_us: int
    width_us: int

    def __post_init__(self):
        if self.width_us <= 0:
            raise ValueError(f"bin width must be positive, got {self.width_us}")
        if self.hi_us <= self.lo_us:
            raise ValueError(f"empty range [{self.lo_us}, {self.hi_us})")

    @property
    def n_bins(self) -> int:
        return math.ceil((self.hi_us - self.lo_us) / self.width_us)

    def edges(self) -> np.ndarray:
        e = self.lo_us + self.width_us * np.arange(self.n_bins + 1, dtype=np.int64)
        e[-1] = min(e[-1], self.hi_us)
        return e

    def index(self, rtt_us) -> np.ndarray:
        """Bin index per sample, -1 when out of range."""
        x = np.asarray(rtt_us)
        idx = np.floor_divide(x - self.lo_us, self.width_us).astype(np.int64)
        return np.where((x >= self.lo_us) & (x < self.hi_us), idx, -1)


COARSE = Binning(0, 1_000_000, 10_000)  # 10 ms over 0-1000 ms
FINE = Binning(0, 20_000, 500)  # 0.5 ms over 0-20 ms


@dataclass(frozen=True)
class Histogram:
    binning: Binning
    counts: np.ndarray
    total: int

    @property
    def range_lo_us(self) -> int:
        return self.binning.lo_us

    @property
    def range_hi_us(self) -> int:
        return self.binning.hi_us

    @property
    def bin_width_us(self) -> int:
        return self.binning.width_us

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise UndefinedDistributionError("histogram has no samples")
        return self.counts / self.total

    def noise_bins(self, floor: int = NOISE_FLOOR) -> np.ndarray:
        """Non-empty bins below the noise floor. Never alters counts."""
        return (self.counts > 0) & (self.counts < floor)


def build_histogram(samples, lo_us: int, hi_us: int, bin_width_us: int) -> Histogram:
    binning = Binning(lo_us, hi_us, bin_width_us)
    return histogram(samples, binning)


def histogram(samples, binning: Binning) -> Histogram:
    x = np.asarray(samples, dtype=np.int64).ravel()
    idx = binning.index(x)
    counts = np.bincount(idx[idx >= 0], minlength=binning.n_bins)
    return Histogram(binning, counts.astype(np.int64), int(x.size))


def rtt_probability(hist: Histogram, t: int) -> float:
    """Share of all samples (in range or not) falling in bin ``t``."""
    if not 0 <= t < hist.binning.n_bins:
        raise IndexError(f"bin {t} outside 0..{hist.binning.n_bins - 1}")
    if hist.total == 0:
        raise UndefinedDistributionError("histogram has no samples")
    return int(hist.counts[t]) / hist.total


def format_histogram(hist: Histogram) -> str:
    buf = io.StringIO()
    buf.write(f"{HIST_FORMAT}\n#total={hist.total}\nbin_lo_us,bin_hi_us,count\n")
    edges = hist.binning.edges()
    for lo, hi, c in zip(edges[:-1].tolist(), edges[1:].tolist(), hist.counts.tolist()):
        buf.write(f"{lo},{hi},{c}\n")
    return buf.getvalue()


def parse_histogram(text: str) -> Histogram:
    lines = text.splitlines()
    if len(lines) < 3 or lines[0] != HIST_FORMAT or not lines[1].startswith("#total="):
        raise ValueError("not a histogram/1 file")
    total = int(lines[1].split("=", 1)[1])
    rows = [tuple(int(v) for v in ln.split(",")) for ln in lines[3:] if ln]
    if not rows:
        raise ValueError("histogram/1 file has no bins")
    lo, width = rows[0][0], rows[0][1] - rows[0][0]
    binning = Binning(lo, rows[-1][1], width)
    return Histogram(binning, np.array([r[2] for r in rows], dtype=np.int64), total)


def write_histogram(path: str | Path, hist: Histogram) -> None:
    Path(path).write_bytes(format_histogram(hist).encode("utf-8"))


@dataclass(frozen=True)
class CacheSplit:
    threshold_us: int
    ping_mean_us: int
    gap_width_us: int
    low_confidence: bool = False

    def is_cache(self, rtt_us) -> np.ndarray:
        return np.asarray(rtt_us) < self.threshold_us


def split_cache_resolve(samples: Sequence[Transaction] | np.ndarray, ping_mean_us: int,
                        min_gap_us: int = FINE.width_us, min_side_share: float = 0.01) -> CacheSplit:
    """Place the cache/resolve threshold in the widest empty RTT gap.

    Gaps are the spaces between consecutive distinct RTTs (an exact
    histogram). Candidates must be at least ``min_gap_us`` wide, have their
    midpoint above the ping, and hold at least ``min_side_share`` of the
    samples on each side, which keeps sparse tail outliers from defining
    the split. Without a candidate the threshold falls back to three
    pings and ``low_confidence`` is set.
    """
    x = _rtts(samples)
    if x.size == 0:
        raise ValueError("no samples to split")
    if ping_mean_us <= 0:
        raise ValueError("ping mean must be positive")
    values = np.unique(x)
    below = np.searchsorted(np.sort(x), values, side="right")  # samples <= each value
    lo, hi = values[:-1], values[1:]
    width = hi - lo
    side = np.minimum(below[:-1], x.size - below[:-1]) / x.size
    ok = (width >= min_gap_us) & ((lo + hi) / 2 > ping_mean_us) & (side >= min_side_share)
    if not ok.any():
        return CacheSplit(3 * ping_mean_us, ping_mean_us, 0, low_confidence=True)
    best = np.flatnonzero(ok)[np.argmax(width[ok])]
    mid = -(-int(lo[best] + hi[best]) // 2)  # ceil keeps the threshold above the ping
    return CacheSplit(mid, ping_mean_us, int(width[best]))


def _rtts(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples.astype(np.int64)
    samples = list(samples)
    if samples and isinstance(samples[0], Transaction):
        return rtt_array(samples)
    return np.asarray(samples, dtype=np.int64)


@dataclass(frozen=True)
class DomainTable:
    domain: str
    level_shares: dict[DnsLevel, float]
    total: int


@dataclass(frozen=True)
class IntervalTable:
    domain: str
    interval: tuple[int, int]
    interval_probability: float
    level_shares: dict[DnsLevel, float]
    count: int
    total: int


def _level_shares(levels: Iterable[DnsLevel]) -> dict[DnsLevel, float]:
    counts: dict[DnsLevel, int] = {}
    for lvl in levels:
        counts[lvl] = counts.get(lvl, 0) + 1
    n = sum(counts.values())
    return {lvl: counts[lvl] / n for lvl in DnsLevel if lvl in counts}


def domain_table(transactions: Iterable[Transaction], domain: str) -> DomainTable:
    levels = [t.level for t in transactions if t.domain == domain]
    if not levels:
        raise KeyError(f"no transactions for domain {domain!r}")
    return DomainTable(domain, _level_shares(levels), len(levels))


def interval_table(transactions: Iterable[Transaction], domain: str, lo_us: int, hi_us: int) -> IntervalTable:
    """Probability of an answer in ``[lo_us, hi_us)`` and its level mix."""
    if hi_us <= lo_us:
        raise ValueError(f"empty interval [{lo_us}, {hi_us})")
    mine = [t for t in transactions if t.domain == domain]
    if not mine:
        raise KeyError(f"no transactions for domain {domain!r}")
    inside = [t.level for t in mine if lo_us <= t.rtt_us < hi_us]
    return IntervalTable(domain, (lo_us, hi_us), len(inside) / len(mine), _level_shares(inside),
                         len(inside), len(mine))


def domains(transactions: Iterable[Transaction]) -> list[str]:
    return sorted({t.domain for t in transactions})
