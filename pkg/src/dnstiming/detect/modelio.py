"""Flat, versioned text files for fitted KNN and forest models.

KNN (``#model=knn/1``)::

    #model=knn/1
    #k=5
    rtt_us,label
    1830,benign
    ...

Forest (``#model=forest/1``)::

    #model=forest/1
    #tree_count=50
    #max_depth=8
    #seed=0
    #bootstrap=1
    #fail_safe=attack
    #classes=attack;benign
    tree,node,threshold,left,right,value
    0,0,9874.5,1,2,-1
    0,1,,-1,-1,1
    ...

Leaves have an empty threshold and ``left == right == -1``; ``value`` is an
index into ``classes``. Thresholds are written with ``repr`` so they
round-trip exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from dnstiming.detect.forest import DecisionTree, ForestModel
from dnstiming.detect.knn import KnnModel, ModelError

KNN_FORMAT = "knn/1"
FOREST_FORMAT = "forest/1"
_FORBIDDEN = set(",;\n\r#")


def _check_label(label: str) -> str:
    if not label or _FORBIDDEN & set(label):
        raise ModelError(f"label {label!r} cannot be stored (empty or contains , ; # or a newline)")
    return label


def dumps_knn(model: KnnModel) -> str:
    lines = [f"#model={KNN_FORMAT}", f"#k={model.k}", "rtt_us,label"]
    lines += [f"{int(r)},{_check_label(str(lab))}" for r, lab in zip(model.rtt.tolist(), model.labels.tolist())]
    return "\n".join(lines) + "\n"


def dumps_forest(model: ForestModel) -> str:
    classes = [_check_label(str(c)) for c in model.classes.tolist()]
    lines = [
        f"#model={FOREST_FORMAT}",
        f"#tree_count={model.tree_count}",
        f"#max_depth={model.max_depth}",
        f"#seed={model.seed}",
        f"#bootstrap={int(model.bootstrap)}",
        f"#fail_safe={model.fail_safe}",
        f"#classes={';'.join(classes)}",
        "tree,node,threshold,left,right,value",
    ]
    for t, tree in enumerate(model.trees):
        for i in range(tree.left.size):
            leaf = tree.left[i] < 0
            thr = "" if leaf else repr(float(tree.threshold[i]))
            lines.append(f"{t},{i},{thr},{tree.left[i]},{tree.right[i]},{tree.value[i]}")
    return "\n".join(lines) + "\n"


def dumps_model(model: KnnModel | ForestModel) -> str:
    if isinstance(model, KnnModel):
        return dumps_knn(model)
    if isinstance(model, ForestModel):
        return dumps_forest(model)
    raise TypeError(f"cannot serialise {type(model).__name__}")


def _split_header(text: str) -> tuple[dict[str, str], list[str]]:
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if not sep:
                raise ModelError(f"bad header line {line!r}")
            meta[key] = value
        elif line:
            body.append(line)
    return meta, body


def _int(meta: dict[str, str], key: str) -> int:
    try:
        return int(meta[key])
    except KeyError:
        raise ModelError(f"model file lacks #{key}") from None
    except ValueError:
        raise ModelError(f"#{key} is not an integer: {meta[key]!r}") from None


def loads_model(text: str) -> KnnModel | ForestModel:
    meta, body = _split_header(text)
    fmt = meta.get("model")
    if fmt == KNN_FORMAT:
        return _load_knn(meta, body)
    if fmt == FOREST_FORMAT:
        return _load_forest(meta, body)
    raise ModelError(f"unknown model format {fmt!r}")


def _load_knn(meta, body) -> KnnModel:
    if not body or body[0] != "rtt_us,label":
        raise ModelError("knn model lacks the rtt_us,label header")
    rtt, labels = [], []
    for n, line in enumerate(body[1:], start=2):
        r, sep, lab = line.partition(",")
        try:
            rtt.append(int(r))
        except ValueError:
            raise ModelError(f"knn row {n}: rtt_us {r!r} is not an integer") from None
        labels.append(lab)
    return KnnModel(_int(meta, "k"), np.array(rtt, dtype=np.int64), np.array(labels))


def _load_forest(meta, body) -> ForestModel:
    if not body or body[0] != "tree,node,threshold,left,right,value":
        raise ModelError("forest model lacks its node header")
    classes = np.array(meta.get("classes", "").split(";"))
    count = _int(meta, "tree_count")
    nodes: list[list[tuple]] = [[] for _ in range(count)]
    for n, line in enumerate(body[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6:
            raise ModelError(f"forest row {n}: expected 6 fields, got {len(parts)}")
        try:
            t, i, left, right, value = (int(parts[j]) for j in (0, 1, 3, 4, 5))
            thr = float(parts[2]) if parts[2] else np.nan
        except ValueError:
            raise ModelError(f"forest row {n}: non-numeric field") from None
        if not 0 <= t < count or i != len(nodes[t]):
            raise ModelError(f"forest row {n}: nodes out of order")
        if left < 0 and not 0 <= value < classes.size:
            raise ModelError(f"forest row {n}: leaf value {value} outside the class list")
        nodes[t].append((thr, left, right, value))
    trees = []
    for t, rows in enumerate(nodes):
        if not rows:
            raise ModelError(f"tree {t} has no nodes")
        thr, left, right, value = zip(*rows)
        trees.append(DecisionTree(np.array(thr, dtype=float), np.array(left, dtype=np.int64),
                                  np.array(right, dtype=np.int64), np.array(value, dtype=np.int64)))
    return ForestModel(count, _int(meta, "max_depth"), _int(meta, "seed"), classes, trees,
                       bootstrap=bool(_int(meta, "bootstrap")), fail_safe=meta.get("fail_safe", "attack"))


def save_model(path: str | Path, model: KnnModel | ForestModel) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8", newline="\n")


def load_model(path: str | Path) -> KnnModel | ForestModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
