"""Repeated 80/20 train/test evaluation of RTT classifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from dnstiming.detect.forest import rf_fit
from dnstiming.detect.knn import knn_fit
from dnstiming.detect.mask import classify_mask, majority_mask
from dnstiming.levels import DnsLevel, Label
from dnstiming.timing import COARSE, FINE, Binning, histogram
from dnstiming.traffic import Transaction

SIMILARITY_TOLERANCE = 0.05


class EvaluationError(ValueError):
    pass


# -- tasks: (rtt, label) arrays built from transactions ----------------------

def attack_task(transactions: Iterable[Transaction], cache_only: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Benign vs attack. Only cache answers count as benign by default."""
    rows = [(t.rtt_us, t.label.value) for t in transactions
            if t.label is Label.ATTACK or not cache_only or t.level is DnsLevel.CACHE]
    return _arrays(rows)


def cache_task(transactions: Iterable[Transaction]) -> tuple[np.ndarray, np.ndarray]:
    rows = [(t.rtt_us, "cache" if t.level is DnsLevel.CACHE else "resolve")
            for t in transactions if t.label is Label.BENIGN]
    return _arrays(rows)


def level_task(transactions: Iterable[Transaction], include_cache: bool = False) -> tuple[np.ndarray, np.ndarray]:
    rows = [(t.rtt_us, t.level.value) for t in transactions
            if t.label is Label.BENIGN and (include_cache or t.level is not DnsLevel.CACHE)]
    return _arrays(rows)


def _arrays(rows) -> tuple[np.ndarray, np.ndarray]:
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype="<U7")
    x, y = zip(*rows)
    return np.asarray(x, dtype=np.int64), np.asarray(y)


# -- classifiers --------------------------------------------------------------

@dataclass(frozen=True)
class Knn:
    k: int = 5
    name: str = "KNN"

    def fit(self, x, y, seed: int = 0):
        return knn_fit(x, y, self.k)


@dataclass(frozen=True)
class Forest:
    tree_count: int = 50
    max_depth: int = 8
    features_per_split: int = 1
    name: str = "RF"

    def fit(self, x, y, seed: int = 0):
        return rf_fit(x, y, self.tree_count, self.max_depth, self.features_per_split, seed=seed)


@dataclass(frozen=True)
class _MaskPredictor:
    mask: object

    def predict(self, x):
        return classify_mask(x, self.mask)


@dataclass(frozen=True)
class NaiveMask:
    """Per-bin majority threshold (benign vs attack only)."""

    binning: Binning = FINE
    name: str = "Naive"

    def fit(self, x, y, seed: int = 0):
        x, y = np.asarray(x), np.asarray(y)
        return _MaskPredictor(majority_mask(x[y == Label.BENIGN.value], x[y == Label.ATTACK.value], self.binning))


# -- metrics --------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityReport:
    max_diff: float
    flagged: tuple[tuple[int, int, float], ...]  # (bin_lo_us, bin_hi_us, share difference)

    @property
    def similar(self) -> bool:
        return not self.flagged


def distribution_check(train_rtts, test_rtts, binning: Binning = COARSE,
                       tolerance: float = SIMILARITY_TOLERANCE) -> SimilarityReport:
    """Flag intervals whose share differs by ``tolerance`` or more between sets."""
    a, b = histogram(train_rtts, binning), histogram(test_rtts, binning)
    if a.total == 0 or b.total == 0:
        raise EvaluationError("cannot compare an empty sample")
    diff = a.counts / a.total - b.counts / b.total
    edges = binning.edges()
    flagged = tuple((int(edges[i]), int(edges[i + 1]), float(diff[i]))
                    for i in np.flatnonzero(np.abs(diff) >= tolerance - 1e-12))
    return SimilarityReport(float(np.abs(diff).max()), flagged)


@dataclass(frozen=True)
class Confusion:
    correct: int
    total: int
    false_pos: int = 0  # negatives labelled positive
    false_neg: int = 0  # positives labelled negative
    negatives: int = 0
    positives: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    @property
    def fp_rate(self) -> float:
        return self.false_pos / self.negatives if self.negatives else math.nan

    @property
    def fn_rate(self) -> float:
        return self.false_neg / self.positives if self.positives else math.nan


def confusion(truth: np.ndarray, pred: np.ndarray, positive: str | None) -> Confusion:
    truth, pred = np.asarray(truth), np.asarray(pred)
    correct = int((truth == pred).sum())
    if positive is None:
        return Confusion(correct, truth.size)
    pos = truth == positive
    return Confusion(correct, truth.size, int((~pos & (pred == positive)).sum()), int((pos & (pred != positive)).sum()),
                     int((~pos).sum()), int(pos.sum()))


@dataclass(frozen=True)
class Metrics:
    """Means over trials; deviation/variance are of the accuracy (population).

    FP/FN rates are NaN for tasks without a positive class.
    """

    accuracy: float
    fp_rate: float
    fn_rate: float
    deviation: float
    variance: float
    trials: int = 1

    @classmethod
    def from_confusions(cls, confusions: Sequence[Confusion]) -> "Metrics":
        acc = np.array([c.accuracy for c in confusions])
        fp = [c.fp_rate for c in confusions]
        fn = [c.fn_rate for c in confusions]
        dev = float(acc.std())
        return cls(float(acc.mean()), float(np.mean(fp)), float(np.mean(fn)), dev, dev * dev, len(confusions))

    def rows(self) -> list[tuple[str, float]]:
        return [("accuracy", self.accuracy), ("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate),
                ("deviation", self.deviation), ("variance", self.variance), ("trials", self.trials)]


@dataclass
class Evaluation:
    metrics: Metrics
    confusions: list[Confusion]
    similarity: list[SimilarityReport]
    splits: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list, repr=False)

    @property
    def similar(self) -> bool:
        return all(s.similar for s in self.similarity)


def trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def split_indices(n: int, split_ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(split_ratio * n))
    if not 0 < cut < n:
        raise EvaluationError(f"a {split_ratio} split of {n} samples leaves one side empty")
    return perm[:cut], perm[cut:]


def evaluate(x, y, classifier, split_ratio: float = 0.8, trials: int = 1, seed: int = 0,
             positive: str | None = Label.ATTACK.value, binning: Binning = COARSE,
             keep_splits: bool = False) -> Evaluation:
    """Shuffle, split, fit and test ``trials`` times with seeds derived from ``seed``."""
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape or x.size == 0:
        raise EvaluationError("need matching, non-empty rtt and label arrays")
    if np.unique(y).size < 2:
        raise EvaluationError("need at least two classes")
    if trials < 1:
        raise EvaluationError("trials must be >= 1")
    if positive is not None and (positive not in y or np.unique(y).size != 2):
        positive = None
    confusions, similarity, splits = [], [], []
    for s in trial_seeds(seed, trials):
        train, test = split_indices(x.size, split_ratio, s)
        model = classifier.fit(x[train], y[train], seed=s)
        confusions.append(confusion(y[test], model.predict(x[test]), positive))
        similarity.append(distribution_check(x[train], x[test], binning))
        if keep_splits:
            splits.append((train, test))
    return Evaluation(Metrics.from_confusions(confusions), confusions, similarity, splits)
