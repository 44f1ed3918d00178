"""K nearest neighbours over a single RTT feature.

Neighbours are ranked by ``(|rtt - query|, training index)``, so distance
ties go to the earlier training point. The predicted label is the majority
among the k neighbours; a tie between labels goes to the label of the
nearest neighbour among the tied labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_CHUNK_CELLS = 4_000_000


class ModelError(ValueError):
    pass


@dataclass
class KnnModel:
    k: int
    rtt: np.ndarray
    labels: np.ndarray
    # lookup structures, derived from rtt/labels
    classes: np.ndarray = field(init=False, repr=False)
    _y: np.ndarray = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _u: np.ndarray = field(init=False, repr=False)
    _start: np.ndarray = field(init=False, repr=False)
    _count: np.ndarray = field(init=False, repr=False)
    _ucounts: np.ndarray = field(init=False, repr=False)
    _first_idx: np.ndarray = field(init=False, repr=False)
    _first_lab: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.rtt = np.asarray(self.rtt)
        self.labels = np.asarray(self.labels)
        n = self.rtt.size
        if n == 0:
            raise ModelError("cannot fit KNN on an empty training set")
        if self.labels.shape != self.rtt.shape:
            raise ModelError("rtt and labels differ in length")
        if not 1 <= self.k <= n:
            raise ModelError(f"k={self.k} must lie in 1..{n}")
        self.classes, self._y = np.unique(self.labels, return_inverse=True)
        self._order = np.lexsort((np.arange(n), self.rtt))
        xs = self.rtt[self._order]
        self._u, self._start, self._count = np.unique(xs, return_index=True, return_counts=True)
        n_cls, n_u = self.classes.size, self._u.size
        inv = np.repeat(np.arange(n_u), self._count)
        self._ucounts = np.bincount(inv * n_cls + self._y[self._order], minlength=n_u * n_cls).reshape(n_u, n_cls)
        slot = np.arange(self.k)
        pos = np.minimum(self._start[:, None] + slot, n - 1)
        filled = slot < self._count[:, None]
        self._first_idx = np.where(filled, self._order[pos], n)
        self._first_lab = np.where(filled, self._y[self._order[pos]], -1)

    def predict(self, rtt) -> np.ndarray:
        return knn_predict(self, rtt)


def knn_fit(rtt, labels, k: int = 5) -> KnnModel:
    return KnnModel(k, np.asarray(rtt), np.asarray(labels))


def knn_predict(model: KnnModel, rtt) -> np.ndarray:
    """Labels for one query or an array of queries."""
    q = np.asarray(rtt)
    scalar = q.ndim == 0
    uq, inv = np.unique(q.ravel(), return_inverse=True)
    codes = np.empty(uq.size, dtype=np.int64)
    rows = max(1, _CHUNK_CELLS // (2 * model.k * model.k))
    for s in range(0, uq.size, rows):
        codes[s:s + rows] = _predict_codes(model, uq[s:s + rows])
    out = model.classes[codes][inv]
    return out[0] if scalar else out.reshape(q.shape)


def _window(model: KnnModel, q: np.ndarray):
    """Candidate unique values around each query, sorted by distance.

    The k nearest training points always sit within k distinct values on
    either side of the query's insertion point.
    """
    k, u = model.k, model._u
    pos = np.searchsorted(u, q)
    cand = pos[:, None] + np.arange(-k, k)
    valid = (cand >= 0) & (cand < u.size)
    c = np.clip(cand, 0, u.size - 1)
    d = np.abs(u[c].astype(float) - q[:, None].astype(float))
    d[~valid] = np.inf
    srt = np.argsort(d, axis=1, kind="stable")
    d = np.take_along_axis(d, srt, 1)
    c = np.take_along_axis(c, srt, 1)
    cnt = np.where(np.isfinite(d), model._count[c], 0)
    reach = np.argmax(np.cumsum(cnt, axis=1) >= k, axis=1)
    dk = d[np.arange(q.size), reach]
    return d, c, cnt, dk


def _predict_codes(model: KnnModel, q: np.ndarray) -> np.ndarray:
    k, n_cls = model.k, model.classes.size
    d, c, cnt, dk = _window(model, q)
    strict = d < dk[:, None]
    votes = (model._ucounts[c] * strict[..., None]).sum(axis=1)
    need = k - (cnt * strict).sum(axis=1)

    tied = d == dk[:, None]
    idx = np.where(tied[..., None], model._first_idx[c], np.iinfo(np.int64).max).reshape(q.size, -1)
    lab = model._first_lab[c].reshape(q.size, -1)
    srt = np.argsort(idx, axis=1, kind="stable")
    lab = np.take_along_axis(lab, srt, 1)
    take = np.arange(idx.shape[1]) < need[:, None]
    for cls in range(n_cls):
        votes[:, cls] += ((lab == cls) & take).sum(axis=1)

    best = votes.max(axis=1)
    codes = votes.argmax(axis=1)
    for row in np.flatnonzero((votes == best[:, None]).sum(axis=1) > 1):
        codes[row] = _resolve_vote_tie(model, q[row], votes[row])
    return codes


def neighbours(model: KnnModel, query) -> np.ndarray:
    """Training indices of the k nearest points, nearest first."""
    d, c, cnt, dk = _window(model, np.asarray([query]))
    d, c, dk = d[0], c[0], dk[0]
    found = []
    for dist, j in zip(d.tolist(), c.tolist()):
        if dist < dk:
            members = model._order[model._start[j]:model._start[j] + model._count[j]]
            found.extend((dist, int(i)) for i in members)
    need = model.k - len(found)
    tied = sorted(int(i) for j in c[d == dk].tolist() for i in model._first_idx[j] if i < model.rtt.size)
    found.extend((dk, i) for i in tied[:need])
    found.sort()
    return np.array([i for _, i in found], dtype=np.int64)


def _resolve_vote_tie(model: KnnModel, query, votes: np.ndarray) -> int:
    top = set(np.flatnonzero(votes == votes.max()).tolist())
    for i in neighbours(model, query):
        if model._y[i] in top:
            return int(model._y[i])
    raise AssertionError("unreachable: a tied label has a neighbour")
