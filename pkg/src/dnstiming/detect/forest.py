"""Random forest of Gini decision trees over a single RTT feature."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dnstiming.detect.knn import ModelError

FAIL_SAFE = "attack"


@dataclass
class DecisionTree:
    """Flat tree: node ``i`` is a leaf when ``left[i] == -1``.

    Internal nodes send ``rtt <= threshold`` left.
    """

    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class code at leaves, -1 at internal nodes

    @property
    def depth(self) -> int:
        def walk(i):
            return 0 if self.left[i] < 0 else 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape, dtype=np.int64)
        while True:
            inner = self.left[node] >= 0
            if not inner.any():
                return self.value[node]
            n = node[inner]
            node[inner] = np.where(x[inner] <= self.threshold[n], self.left[n], self.right[n])


@dataclass
class ForestModel:
    tree_count: int
    max_depth: int
    seed: int
    classes: np.ndarray
    trees: list[DecisionTree] = field(default_factory=list)
    features_per_split: int = 1
    bootstrap: bool = True
    fail_safe: str = FAIL_SAFE

    def predict(self, rtt) -> np.ndarray:
        return rf_predict(self, rtt)


def best_split(x: np.ndarray, y: np.ndarray, n_classes: int):
    """Gini-optimal threshold for codes ``y`` over values ``x``.

    Candidates are midpoints between consecutive distinct values. Returns
    ``None`` when no candidate lowers the node impurity; among equally good
    candidates the smallest threshold wins. Scores are compared exactly in
    integers: minimising weighted Gini is maximising
    ``sum(L_c^2)/n_L + sum(R_c^2)/n_R``.
    """
    u, inv = np.unique(x, return_inverse=True)
    if u.size < 2:
        return None
    counts = np.bincount(inv * n_classes + y, minlength=u.size * n_classes).reshape(u.size, n_classes)
    left = np.cumsum(counts, axis=0)[:-1]
    total = counts.sum(axis=0)
    right = total - left
    n_l = left.sum(axis=1)
    n_r = right.sum(axis=1)
    sq_l = (left * left).sum(axis=1)
    sq_r = (right * right).sum(axis=1)
    score = sq_l / n_l + sq_r / n_r
    top = score.max()
    n = int(total.sum())
    parent_num, parent_den = int((total * total).sum()), n
    best = None
    for j in np.flatnonzero(score >= top * (1 - 1e-12)).tolist():
        num = int(sq_l[j]) * int(n_r[j]) + int(sq_r[j]) * int(n_l[j])
        den = int(n_l[j]) * int(n_r[j])
        if best is None or num * best[2] > best[1] * den:
            best = (j, num, den)
    j, num, den = best
    if num * parent_den <= parent_num * den:
        return None
    return (u[j] + u[j + 1]) / 2


def _leaf_value(y: np.ndarray, n_classes: int, fail_code: int) -> int:
    counts = np.bincount(y, minlength=n_classes)
    return _vote(counts, fail_code)


def _vote(counts: np.ndarray, fail_code: int) -> int:
    top = np.flatnonzero(counts == counts.max())
    if top.size > 1 and fail_code in top:
        return fail_code
    return int(top[0])


def fit_tree(x: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int, fail_code: int = -1) -> DecisionTree:
    threshold, left, right, value = [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(threshold)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(-1)
        ys = y[idx]
        split = None
        if depth < max_depth and np.unique(ys).size > 1:
            split = best_split(x[idx], ys, n_classes)
        if split is None:
            value[node] = _leaf_value(ys, n_classes, fail_code)
            return node
        threshold[node] = split
        go_left = x[idx] <= split
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(x.size), 0)
    return DecisionTree(np.array(threshold, dtype=float), np.array(left, dtype=np.int64),
                        np.array(right, dtype=np.int64), np.array(value, dtype=np.int64))


def rf_fit(rtt, labels, tree_count: int = 50, max_depth: int = 8, features_per_split: int = 1,
           seed: int = 0, bootstrap: bool = True, fail_safe: str = FAIL_SAFE) -> ForestModel:
    """Fit ``tree_count`` trees, each on a seeded bootstrap resample.

    There is one feature, so ``features_per_split`` can only be 1. Vote
    ties go to ``fail_safe`` when it is among the tied labels.
    """
    x = np.asarray(rtt)
    labels = np.asarray(labels)
    if x.size == 0:
        raise ModelError("cannot fit a forest on an empty training set")
    if tree_count < 1 or max_depth < 1:
        raise ModelError("tree_count and max_depth must be positive")
    if features_per_split != 1:
        raise ModelError("only one feature (RTT) is available; features_per_split must be 1")
    classes, y = np.unique(labels, return_inverse=True)
    fail_code = _code(classes, fail_safe)
    model = ForestModel(tree_count, max_depth, seed, classes, [], features_per_split, bootstrap, fail_safe)
    rng = np.random.default_rng(seed)
    for _ in range(tree_count):
        pick = rng.integers(0, x.size, x.size) if bootstrap else np.arange(x.size)
        model.trees.append(fit_tree(x[pick], y[pick], classes.size, max_depth, fail_code))
    return model


def _code(classes: np.ndarray, label: str) -> int:
    hit = np.flatnonzero(classes == label)
    return int(hit[0]) if hit.size else -1


def rf_predict(model: ForestModel, rtt) -> np.ndarray:
    q = np.asarray(rtt)
    x = q.ravel()
    n_cls = model.classes.size
    votes = np.zeros((x.size, n_cls), dtype=np.int64)
    for tree in model.trees:
        votes[np.arange(x.size), tree.apply(x)] += 1
    top = votes.max(axis=1, keepdims=True)
    codes = np.argmax(votes == top, axis=1)
    fail = _code(model.classes, model.fail_safe)
    if fail >= 0:
        codes = np.where(votes[:, fail] == top[:, 0], fail, codes)
    out = model.classes[codes]
    return out[0] if q.ndim == 0 else out.reshape(q.shape)
