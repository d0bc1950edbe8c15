"""Random forest classifier with out-of-bag scoring and permutation importance.

Trees are grown unpruned on (optionally class-stratified) bootstrap samples.
At each node a fresh subset of ``mtry`` features is drawn and the split with
the lowest weighted Gini impurity wins; ties go to the lowest feature index,
then the lowest threshold. Every tree owns a random stream spawned from the
master seed, so results do not depend on how many threads train the trees.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

FORMAT = "speechemo-forest"
FORMAT_VERSION = 1
DEFAULT_TREES = 500
_TIE_RTOL = 1e-12


class ForestError(ValueError):
    pass


@dataclass
class DecisionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (nodes, classes) training class counts per node
    bootstrap: np.ndarray  # (n_train,) draws of each training row

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def oob_mask(self) -> np.ndarray:
        return self.bootstrap == 0

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        # argmax picks the lowest class index on ties
        return np.argmax(self.counts[self.apply(X)], axis=1)


def _best_split(Xn, yn, n_classes):
    """Best split of ``Xn`` as ``(column, lo, hi)``: the adjacent sorted values it
    falls between. None when no split lowers the Gini impurity."""
    n, m = Xn.shape
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    onehot = ys[:, :, None] == np.arange(n_classes)
    cum = np.cumsum(onehot, axis=0, dtype=np.int64)[:-1]  # left counts, split after row k
    total = cum[-1] + onehot[-1] if n > 1 else onehot[0]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    right = total[None, :, :] - cum
    score = (cum.astype(np.float64) ** 2).sum(axis=2) / n_left + (right.astype(np.float64) ** 2).sum(axis=2) / n_right
    valid = xs[1:] > xs[:-1]
    score = np.where(valid, score, -np.inf)
    parent = float((total[0].astype(np.float64) ** 2).sum()) / n
    best = score.max()
    if not np.isfinite(best) or best <= parent * (1 + _TIE_RTOL):
        return None
    # column-major scan: lowest feature first, then lowest threshold
    flat = np.flatnonzero((score >= best - _TIE_RTOL * abs(best)).T.ravel())[0]
    col, k = divmod(int(flat), n - 1)
    return col, float(xs[k, col]), float(xs[k + 1, col])


def _cut_point(column, lo):
    # Midpoint between lo and the next value of this column among all training
    # rows, so out-of-bag rows are routed by rank alone and any increasing
    # transform of the column leaves every training row on the same side.
    above = column[column > lo]
    hi = above.min()
    thr = lo + (hi - lo) / 2.0
    return float(thr) if lo <= thr < hi else float(lo)


def train_tree(X, y, mtry: int, rng: np.random.Generator, n_classes: int | None = None,
               sample=None) -> DecisionTree:
    """Grow one unpruned tree.

    ``y`` holds class indices. ``sample`` lists the (possibly repeated) row
    indices to train on; by default every row once.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    N, M = X.shape
    if N == 0:
        raise ForestError("cannot train on zero rows")
    if not 1 <= mtry <= M:
        raise ForestError(f"mtry must be in [1, {M}], got {mtry}")
    n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    sample = np.arange(N) if sample is None else np.asarray(sample, dtype=np.intp)
    bootstrap = np.bincount(sample, minlength=N)

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    root = new_node(sample)
    stack = [(root, sample)]
    while stack:
        node, idx = stack.pop()
        c = counts[node]
        if len(idx) < 2 or np.count_nonzero(c) <= 1:
            continue
        feats = np.sort(rng.choice(M, size=mtry, replace=False))
        found = _best_split(X[np.ix_(idx, feats)], y[idx], n_classes)
        if found is None:
            continue
        col, lo, _ = found
        f = int(feats[col])
        thr = _cut_point(X[:, f], lo)
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))

    return DecisionTree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        counts=np.array(counts, dtype=np.int64).reshape(len(feature), n_classes),
        bootstrap=bootstrap,
    )


@dataclass
class ForestModel:
    trees: list
    classes: list
    n_features: int
    mtry: int
    seed: int
    n_train: int
    class_sizes: dict | None = None

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ForestError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def votes(self, X) -> np.ndarray:
        X = self._check(X)
        v = np.zeros((len(X), len(self.classes)), dtype=np.int64)
        rows = np.arange(len(X))
        for t in self.trees:
            np.add.at(v, (rows, t.predict(X)), 1)
        return v

    def predict(self, X):
        """Majority-vote labels and the per-class vote shares."""
        v = self.votes(X)
        pred = np.argmax(v, axis=1)
        return [self.classes[i] for i in pred], v / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "classes": list(self.classes),
            "n_features": self.n_features,
            "mtry": self.mtry,
            "seed": self.seed,
            "n_train": self.n_train,
            "class_sizes": self.class_sizes,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "counts": t.counts.tolist(),
                    "bootstrap_rle": rle_encode(t.bootstrap),
                }
                for t in self.trees
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ForestError("unrecognized forest model format")
        n_classes = len(d["classes"])
        trees = [
            DecisionTree(
                feature=np.array(t["feature"], dtype=np.intp),
                threshold=np.array(t["threshold"], dtype=np.float64),
                left=np.array(t["left"], dtype=np.intp),
                right=np.array(t["right"], dtype=np.intp),
                counts=np.array(t["counts"], dtype=np.int64).reshape(-1, n_classes),
                bootstrap=rle_decode(t["bootstrap_rle"]),
            )
            for t in d["trees"]
        ]
        return cls(trees, list(d["classes"]), d["n_features"], d["mtry"], d["seed"],
                   d["n_train"], d.get("class_sizes"))

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        return cls.from_dict(json.loads(text))


def rle_encode(values) -> list:
    """``[[value, run_length], ...]`` for an integer sequence."""
    out = []
    for v in np.asarray(values).tolist():
        if out and out[-1][0] == v:
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return out


def rle_decode(runs) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=np.int64)
    return np.repeat([r[0] for r in runs], [r[1] for r in runs]).astype(np.int64)


def default_mtry(n_features: int) -> int:
    return max(1, math.isqrt(n_features))


def _encode_labels(labels, classes):
    if classes is None:
        classes = sorted(set(labels), key=str)
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        y = np.array([lookup[l] for l in labels], dtype=np.intp)
    except KeyError as exc:
        raise ForestError(f"label {exc.args[0]!r} not among classes {list(classes)}") from None
    return list(classes), y


def draw_bootstrap(y, n_classes, class_sizes, rng) -> np.ndarray:
    """Row indices for one tree: plain bootstrap of N, or per-class draws."""
    N = len(y)
    if class_sizes is None:
        return rng.integers(0, N, size=N)
    parts = []
    for c in range(n_classes):
        rows = np.flatnonzero(y == c)
        size = class_sizes[c]
        parts.append(rows[rng.integers(0, len(rows), size=size)])
    return np.concatenate(parts)


def train_forest(X, labels, n_trees: int = DEFAULT_TREES, mtry: int | None = None,
                 class_sizes: dict | None = None, seed: int = 0, classes=None,
                 threads: int = 1) -> ForestModel:
    """Fit ``n_trees`` trees, each on its own bootstrap sample.

    ``class_sizes`` maps every class label to the number of rows drawn (with
    replacement) from that class for each tree; without it each tree gets an
    ordinary bootstrap of N rows.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) != len(labels):
        raise ForestError("X must be 2-D with one row per label")
    if n_trees < 1:
        raise ForestError("need at least one tree")
    classes, y = _encode_labels(list(labels), classes)
    M = X.shape[1]
    mtry = default_mtry(M) if mtry is None else int(mtry)
    if not 1 <= mtry <= M:
        raise ForestError(f"mtry must be in [1, {M}], got {mtry}")
    sizes = None
    if class_sizes is not None:
        present = np.bincount(y, minlength=len(classes))
        sizes = []
        for i, c in enumerate(classes):
            if c not in class_sizes:
                if present[i]:
                    raise ForestError(f"class {c!r} has rows but no bootstrap size")
                sizes.append(0)
                continue
            s = int(class_sizes[c])
            if s <= 0 or present[i] == 0:
                raise ForestError(f"class {c!r}: bootstrap size {s} with {present[i]} rows available")
            sizes.append(s)
        unknown = set(class_sizes) - set(classes)
        if unknown:
            raise ForestError(f"bootstrap sizes given for unknown classes {sorted(unknown)}")

    streams = np.random.SeedSequence(seed).spawn(n_trees)

    def grow(ss):
        rng = np.random.default_rng(ss)
        sample = draw_bootstrap(y, len(classes), sizes, rng)
        return train_tree(X, y, mtry, rng, len(classes), sample)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(grow, streams))
    else:
        trees = [grow(ss) for ss in streams]
    return ForestModel(
        trees=trees, classes=classes, n_features=M, mtry=mtry, seed=seed, n_train=len(y),
        class_sizes=None if class_sizes is None else {c: int(class_sizes[c]) for c in classes if c in class_sizes},
    )


def predict(model: ForestModel, row):
    """Class of a single row and its vote distribution ``{class: share}``."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or row.shape[0] != model.n_features:
        raise ForestError(f"expected a row of {model.n_features} features, got shape {row.shape}")
    labels, shares = model.predict(row[None, :])
    return labels[0], dict(zip(model.classes, shares[0].tolist()))


@dataclass
class ConfusionMatrix:
    classes: list
    counts: np.ndarray  # rows = true class, columns = predicted class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rate(self) -> float:
        t = self.total
        return float(np.trace(self.counts) / t) if t else float("nan")

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def conditional(self) -> np.ndarray:
        """Rows divided by their sums; rows without observations stay zero."""
        s = self.row_sums().astype(float)
        out = np.zeros(self.counts.shape, dtype=float)
        nz = s > 0
        out[nz] = self.counts[nz] / s[nz, None]
        return out


def confusion(true_idx, pred_idx, classes) -> ConfusionMatrix:
    k = len(classes)
    c = np.zeros((k, k), dtype=np.int64)
    np.add.at(c, (np.asarray(true_idx), np.asarray(pred_idx)), 1)
    return ConfusionMatrix(list(classes), c)


@dataclass
class OOBResult:
    rate: float
    confusion: ConfusionMatrix
    scored: int
    unscored: int
    predictions: np.ndarray  # class index, -1 where never out of bag


def oob_votes(model: ForestModel, X) -> np.ndarray:
    X = model._check(X)
    v = np.zeros((len(X), len(model.classes)), dtype=np.int64)
    for t in model.trees:
        rows = np.flatnonzero(t.oob_mask)
        if rows.size:
            np.add.at(v, (rows, t.predict(X[rows])), 1)
    return v


def oob_estimate(model: ForestModel, X, labels) -> OOBResult:
    """Majority vote of each row over the trees that did not draw it."""
    _, y = _encode_labels(list(labels), model.classes)
    v = oob_votes(model, X)
    scored = v.sum(axis=1) > 0
    pred = np.where(scored, np.argmax(v, axis=1), -1)
    cm = confusion(y[scored], pred[scored], model.classes)
    return OOBResult(cm.rate(), cm, int(scored.sum()), int((~scored).sum()), pred)


@dataclass
class Importance:
    scores: np.ndarray
    se: np.ndarray
    ranking: np.ndarray  # feature indices, most important first


def importance(model: ForestModel, X, labels, seed: int = 0) -> Importance:
    """Permutation importance from each tree's out-of-bag rows.

    A feature's score is the mean over trees of the accuracy drop on that
    tree's OOB rows after shuffling the feature among those rows. Trees that
    never split on a feature contribute a drop of exactly 0.
    """
    X = model._check(X)
    _, y = _encode_labels(list(labels), model.classes)
    K, M = len(model.trees), model.n_features
    drops = np.zeros((K, M))
    streams = np.random.SeedSequence(seed).spawn(K)
    for k, (t, ss) in enumerate(zip(model.trees, streams)):
        rows = np.flatnonzero(t.oob_mask)
        if rows.size == 0:
            continue
        rng = np.random.default_rng(ss)
        Xo = X[rows]
        base = np.mean(t.predict(Xo) == y[rows])
        for f in t.used_features():
            saved = Xo[:, f].copy()
            Xo[:, f] = saved[rng.permutation(rows.size)]
            drops[k, f] = base - np.mean(t.predict(Xo) == y[rows])
            Xo[:, f] = saved
    scores = drops.mean(axis=0)
    se = drops.std(axis=0, ddof=1) / np.sqrt(K) if K > 1 else np.zeros(M)
    ranking = np.lexsort((np.arange(M), -scores))
    return Importance(scores, se, ranking)
