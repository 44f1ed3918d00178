"""Alpha-threshold bin masks and the attack success rate they leave."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dnstiming.levels import Label
from dnstiming.timing import COARSE, Binning, Histogram, UndefinedDistributionError, histogram


@dataclass(frozen=True)
class AlphaMask:
    """Retained bins (1) of a binning. ``alpha`` is None for masks not built by threshold."""

    alpha: float | None
    bits: np.ndarray
    binning: Binning = COARSE

    def __post_init__(self):
        if self.bits.shape != (self.binning.n_bins,):
            raise ValueError(f"mask has {self.bits.size} bits for {self.binning.n_bins} bins")


def build_alpha_mask(hist: Histogram, alpha: float) -> AlphaMask:
    """Keep the bins whose share of all samples strictly exceeds ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if hist.total == 0:
        raise UndefinedDistributionError("histogram has no samples")
    bits = (hist.counts / hist.total > alpha).astype(np.uint8)
    return AlphaMask(alpha, bits, hist.binning)


def attack_success_rate(mask: AlphaMask) -> float:
    """Chance that a uniformly timed spoofed answer lands in a retained bin."""
    return int(mask.bits.sum()) / mask.bits.size


def classify_mask(rtt_us, mask: AlphaMask, binning: Binning | None = None) -> np.ndarray:
    """``"benign"`` inside a retained bin, ``"attack"`` elsewhere (out of range included)."""
    binning = binning or mask.binning
    if binning.n_bins != mask.bits.size:
        raise ValueError("binning does not match the mask")
    idx = binning.index(np.asarray(rtt_us))
    keep = np.zeros(idx.shape, dtype=bool)
    inside = idx >= 0
    keep[inside] = mask.bits[idx[inside]] == 1
    return np.where(keep, Label.BENIGN.value, Label.ATTACK.value)


def majority_mask(benign_rtts, attack_rtts, binning: Binning) -> AlphaMask:
    """Naive cache threshold: keep bins where benign answers outnumber attacks."""
    b = histogram(benign_rtts, binning).counts
    a = histogram(attack_rtts, binning).counts
    return AlphaMask(None, (b > a).astype(np.uint8), binning)


def alpha_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start, start+step, ..., stop`` without float drift."""
    if step <= 0 or stop < start:
        raise ValueError("need step > 0 and stop >= start")
    n = int(round((stop - start) / step))
    return [round(start + i * step, 12) for i in range(n + 1)]


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    success_rate: float
    retained_bins: int


def sweep(hist: Histogram, alphas) -> list[SweepRow]:
    rows = []
    for a in alphas:
        mask = build_alpha_mask(hist, a)
        rows.append(SweepRow(a, attack_success_rate(mask), int(mask.bits.sum())))
    return rows
