"""Logistic regression, CART decision tree and random forest, from scratch.

All three expose ``predict_score`` (probability-like score of class 1) and
``predict`` (score >= 0.5, so an exact 0.5 goes to class 1), and serialize to
a versioned JSON-compatible dict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DimensionError, EmptyNodeError, SingleClassError

MODEL_FORMAT_VERSION = 1
THRESHOLD = 0.5


def _check_X(X, n_features):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise DimensionError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError("X must be 2-D with one row per label")
    if X.shape[0] < 1:
        raise EmptyNodeError("no training samples")
    return X, y


# -- logistic regression ----------------------------------------------------


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss(w, b, X, y, l2=0.0):
    """Mean negative log-likelihood plus ``l2/2 * ||w||^2``."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_grad(w, b, X, y, l2=0.0):
    """Gradient of :func:`logistic_loss` as ``(dw, db)``."""
    r = sigmoid(X @ w + b) - y
    return X.T @ r / len(y) + l2 * w, float(r.mean())


@dataclass
class LogisticConfig:
    lr: float = 0.1
    decay: float = 0.999
    tol: float = 1e-8
    max_iter: int = 10000
    l2: float = 0.0


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float = 0.0
    iterations: int = 0
    grad_norm: float = float("nan")
    converged: bool = False
    loss_history: list = field(default_factory=list, repr=False)

    kind = "logistic"

    @classmethod
    def zeros(cls, n_features):
        return cls(np.zeros(n_features))

    @property
    def n_features(self):
        return len(self.weights)

    def predict_score(self, X):
        X = _check_X(X, self.n_features)
        return sigmoid(X @ self.weights + self.bias)

    def predict(self, X):
        return (self.predict_score(X) >= THRESHOLD).astype(np.int64)

    def to_dict(self):
        return {
            "version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "iterations": self.iterations,
            "grad_norm": float(self.grad_norm),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["weights"], dtype=float), float(d["bias"]),
                   d["iterations"], d["grad_norm"], d["converged"])


@njit(cache=True)
def _log1pexp(z):
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@njit(cache=True)
def _sigmoid1(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _gd(X, y, lr0, decay, tol, max_iter, l2):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    z = np.zeros(n)
    z_new = np.empty(n)
    gw = np.empty(d)
    history = np.empty(max_iter + 1)

    def loss_of(z, w):
        s = 0.0
        for i in range(n):
            s += _log1pexp(z[i]) - y[i] * z[i]
        return s / n + 0.5 * l2 * np.dot(w, w)

    loss = loss_of(z, w)
    history[0] = loss
    it = 0
    gmax = np.inf
    while True:
        gw[:] = 0.0
        gb = 0.0
        for i in range(n):
            r = _sigmoid1(z[i]) - y[i]
            gb += r
            for j in range(d):
                gw[j] += r * X[i, j]
        gb /= n
        gmax = abs(gb)
        for j in range(d):
            gw[j] = gw[j] / n + l2 * w[j]
            gmax = max(gmax, abs(gw[j]))
        if gmax < tol or it >= max_iter:
            break
        dz = X @ gw + gb
        lr = lr0 * decay ** it
        accepted = False
        for _ in range(50):
            w_new = w - lr * gw
            for i in range(n):
                z_new[i] = z[i] - lr * dz[i]
            new_loss = loss_of(z_new, w_new)
            if new_loss <= loss:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        w = w_new
        b -= lr * gb
        z[:] = z_new
        loss = new_loss
        it += 1
        history[it] = loss
    return w, b, it, gmax, history[: it + 1]


def train_logistic(X, y, cfg=None):
    """Batch gradient descent on the mean NLL with a decaying step size.

    A step that would raise the loss is retried at half the step size, so the
    recorded loss sequence never increases.
    """
    cfg = cfg or LogisticConfig()
    X, y = _check_xy(X, y)
    if len(np.unique(y)) < 2:
        raise SingleClassError("logistic regression needs both classes")
    w, b, it, gmax, history = _gd(
        np.ascontiguousarray(X), y.astype(float), float(cfg.lr), float(cfg.decay),
        float(cfg.tol), int(cfg.max_iter), float(cfg.l2),
    )
    return LogisticModel(w, float(b), int(it), float(gmax), bool(gmax < cfg.tol), list(history))


# -- decision tree -------------------------------------------------------------


def gini(counts):
    """Gini impurity ``1 - sum(p_i^2)`` of a class-count vector."""
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("class counts must be non-negative")
    n = counts.sum()
    if n <= 0:
        raise EmptyNodeError("Gini of an empty node")
    return float(1.0 - ((counts / n) ** 2).sum())


@njit(cache=True)
def _best_split(X, y, rows, features):
    """Best (feature, threshold, gain) over midpoints of sorted distinct values.

    Returns feature -1 when no feature has two distinct values in ``rows``.
    Ties keep the first candidate in (feature order, ascending threshold).
    """
    n = rows.shape[0]
    n1 = 0
    for i in range(n):
        n1 += y[rows[i]]
    p1 = n1 / n
    parent = 1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)
    best_f = -1
    best_t = 0.0
    best_gain = -1.0
    vals = np.empty(n)
    for f in features:
        for i in range(n):
            vals[i] = X[rows[i], f]
        order = np.argsort(vals, kind="mergesort")
        left_n = 0
        left_1 = 0
        for i in range(n - 1):
            left_n += 1
            left_1 += y[rows[order[i]]]
            v = vals[order[i]]
            vn = vals[order[i + 1]]
            if vn <= v:
                continue
            right_n = n - left_n
            right_1 = n1 - left_1
            pl = left_1 / left_n
            pr = right_1 / right_n
            gl = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
            gr = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
            gain = parent - (left_n * gl + right_n * gr) / n
            if gain > best_gain + 1e-12:
                best_gain = gain
                best_f = f
                best_t = 0.5 * (v + vn)
                # adjacent floats: the midpoint can round up onto vn
                if best_t >= vn:
                    best_t = v
    return best_f, best_t, best_gain


@njit(cache=True)
def _build(X, y, rows, max_depth, min_split, m, keys):
    """Grow one tree depth-first; returns flat node arrays.

    ``keys`` holds one row of uniform draws per split attempt; the ``m``
    smallest keys pick that node's candidate features. Unused when m >= d.
    """
    n = rows.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    c0 = np.zeros(cap, dtype=np.int64)
    c1 = np.zeros(cap, dtype=np.int64)
    buf = rows.copy()
    tmp = np.empty(n, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    all_feats = np.arange(d)
    sp = 0
    st_start[0], st_end[0], st_depth[0], st_node[0] = 0, n, 0, 0
    sp = 1
    n_nodes = 1
    attempt = 0
    while sp > 0:
        sp -= 1
        s, e, depth, node = st_start[sp], st_end[sp], st_depth[sp], st_node[sp]
        cnt = e - s
        n1 = 0
        for i in range(s, e):
            n1 += y[buf[i]]
        c0[node] = cnt - n1
        c1[node] = n1
        if n1 == 0 or n1 == cnt or cnt < min_split:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if m >= d:
            feats = all_feats
        else:
            feats = np.sort(np.argsort(keys[attempt])[:m])
            attempt += 1
        f, t, gain = _best_split(X, y, buf[s:e], feats)
        if f < 0:
            continue
        nl = 0
        nr = 0
        for i in range(s, e):
            r = buf[i]
            if X[r, f] <= t:
                buf[s + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            buf[s + nl + i] = tmp[i]
        feature[node] = f
        threshold[node] = t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        st_start[sp], st_end[sp], st_depth[sp], st_node[sp] = s + nl, e, depth + 1, right[node]
        sp += 1
        st_start[sp], st_end[sp], st_depth[sp], st_node[sp] = s, s + nl, depth + 1, left[node]
        sp += 1
    k = n_nodes
    return feature[:k], threshold[:k], left[:k], right[:k], c0[:k], c1[:k]


@njit(cache=True)
def _route(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass
class Leaf:
    counts: tuple

    @property
    def label(self):
        # ties go to class 0
        return int(self.counts[1] > self.counts[0])

    @property
    def n_samples(self):
        return self.counts[0] + self.counts[1]

    @property
    def score(self):
        return self.counts[1] / self.n_samples


@dataclass
class Split:
    feature: int
    threshold: float
    left: object
    right: object
    n_samples: int


@dataclass
class TreeConfig:
    max_depth: int | None = None
    min_samples_split: int = 2


class DecisionTree:
    """A fitted CART tree stored as flat node arrays.

    Node 0 is the root; ``feature == -1`` marks a leaf. ``root`` rebuilds the
    nested Leaf/Split view.
    """

    kind = "tree"

    def __init__(self, feature, threshold, left, right, c0, c1, n_features):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.c0 = np.asarray(c0, dtype=np.int64)
        self.c1 = np.asarray(c1, dtype=np.int64)
        self.n_features = n_features
        self.value = self.c1 / (self.c0 + self.c1)

    def __len__(self):
        return len(self.feature)

    @property
    def root(self):
        return self._node(0)

    def _node(self, i):
        if self.feature[i] < 0:
            return Leaf((int(self.c0[i]), int(self.c1[i])))
        return Split(int(self.feature[i]), float(self.threshold[i]),
                     self._node(self.left[i]), self._node(self.right[i]),
                     int(self.c0[i] + self.c1[i]))

    def predict_score(self, X):
        X = _check_X(X, self.n_features)
        return _route(X, self.feature, self.threshold, self.left, self.right, self.value)

    def predict(self, X):
        return (self.predict_score(X) >= THRESHOLD).astype(np.int64)

    def n_leaves(self):
        return int((self.feature < 0).sum())

    def depth(self):
        depth = np.zeros(len(self), dtype=np.int64)
        for i in range(len(self)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self):
        return {
            "version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": [[int(a), int(b)] for a, b in zip(self.c0, self.c1)],
        }

    @classmethod
    def from_dict(cls, d):
        counts = np.array(d["counts"], dtype=np.int64).reshape(-1, 2)
        return cls(d["feature"], d["threshold"], d["left"], d["right"],
                   counts[:, 0], counts[:, 1], d["n_features"])


def _fit_tree(X, y, rows, cfg, m, keys):
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
    arrays = _build(X, y, rows, max_depth, int(cfg.min_samples_split), int(m), keys)
    return DecisionTree(*arrays, X.shape[1])


def train_tree(X, y, cfg=None):
    """Greedy CART with Gini impurity.

    Impure nodes are split even when the best decrease is zero (XOR-like
    layouts need that), stopping on purity, ``min_samples_split`` or
    ``max_depth``.
    """
    cfg = cfg or TreeConfig()
    X, y = _check_xy(X, y)
    X = np.ascontiguousarray(X)
    d = X.shape[1]
    return _fit_tree(X, y, np.arange(len(y), dtype=np.int64), cfg, d, np.zeros((0, d)))


# -- random forest ---------------------------------------------------------------


@dataclass
class ForestConfig:
    n_trees: int = 100
    m: int = 3
    seed: int = 0
    bootstrap: bool = True
    max_depth: int | None = None
    min_samples_split: int = 2


class RandomForest:
    kind = "forest"

    def __init__(self, trees, seeds, m, n_features):
        self.trees = trees
        self.seeds = seeds
        self.m = m
        self.n_features = n_features

    def predict_score(self, X):
        X = _check_X(X, self.n_features)
        return np.mean([t.predict_score(X) for t in self.trees], axis=0)

    def predict(self, X):
        return (self.predict_score(X) >= THRESHOLD).astype(np.int64)

    def to_dict(self):
        return {
            "version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "m": self.m,
            "n_features": self.n_features,
            "seeds": list(self.seeds),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], d["seeds"], d["m"],
                   d["n_features"])


def train_forest(X, y, cfg=None):
    """Bagged CART trees with a fresh random feature subset at every split.

    Tree ``i`` draws its bootstrap sample and feature subsets from a generator
    seeded with ``cfg.seed + i``, so trees are independent of training order.
    """
    cfg = cfg or ForestConfig()
    X, y = _check_xy(X, y)
    X = np.ascontiguousarray(X)
    n, d = X.shape
    m = min(cfg.m, d)
    tree_cfg = TreeConfig(cfg.max_depth, cfg.min_samples_split)
    trees, seeds = [], []
    for i in range(cfg.n_trees):
        seed = cfg.seed + i
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        keys = rng.random((2 * n + 1, d)) if m < d else np.zeros((0, d))
        trees.append(_fit_tree(X, y, rows.astype(np.int64), tree_cfg, m, keys))
        seeds.append(seed)
    return RandomForest(trees, seeds, m, d)


def default_forest_m(n_features):
    return max(1, int(math.floor(math.sqrt(n_features))))


# -- dispatch ----------------------------------------------------------------------


def predict_score(model, X):
    return model.predict_score(X)


def predict(model, X):
    return model.predict(X)


MODEL_KINDS = {
    "logistic": LogisticModel,
    "tree": DecisionTree,
    "forest": RandomForest,
}


def model_from_dict(d):
    if d.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')!r}")
    if d.get("kind") not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {d.get('kind')!r}")
    return MODEL_KINDS[d["kind"]].from_dict(d)
