"""CART-style Gini decision tree and a bagged random forest built from it."""

from __future__ import annotations

import math

import numpy as np

from ..seeding import derive_seed
from .base import FITTERS, FittedModel, ModelSpec, TrainingSummary, check_xy, register

# Weighted Gini values closer than this are treated as equal.  For n <= 200
# distinct exact values differ by more than 1/(n * (n/2)^4) ~ 5e-11.
TIE_TOL = 1e-12


def gini_impurity(counts) -> float:
    neg, pos = counts
    if neg < 0 or pos < 0:
        raise ValueError("counts must be non-negative")
    total = neg + pos
    if total == 0:
        raise ValueError("gini impurity of an empty node is undefined")
    p0, p1 = neg / total, pos / total
    return 1.0 - p0 * p0 - p1 * p1


def resolve_max_features(setting, n_features: int) -> int:
    if setting is None:
        return n_features
    if setting == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    k = int(setting)
    if not 1 <= k:
        raise ValueError("max_features must be >= 1")
    return min(k, n_features)


def _feature_candidates(x, y, n_pos, min_leaf):
    """Weighted Gini and threshold for every admissible cut on one feature.

    Cuts sit midway between consecutive distinct sorted values, and both
    children must keep ``min_leaf`` samples.  Arrays come back in ascending
    threshold order.
    """
    n = len(y)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    pos_left = np.cumsum(y[order])[:-1]
    n_left = np.arange(1, n)
    ok = xs[1:] != xs[:-1]
    if min_leaf > 1:
        ok &= (n_left >= min_leaf) & (n_left <= n - min_leaf)
    if not ok.any():
        return None
    nl = n_left[ok].astype(np.float64)
    pl = pos_left[ok].astype(np.float64)
    nr = n - nl
    pr = n_pos - pl
    ql, qr = nl - pl, nr - pr
    purity = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
    impurity = 1.0 - purity / n
    thresholds = (xs[1:][ok] + xs[:-1][ok]) / 2.0
    return impurity, thresholds


def _pick(found):
    if not found:
        return None
    found = sorted(found, key=lambda c: c[0])
    best = min(float(imp.min()) for _, imp, _ in found)
    for f, imp, thr in found:
        hit = np.flatnonzero(imp <= best + TIE_TOL)
        if len(hit):
            k = hit[0]
            return float(imp[k]), f, float(thr[k])
    return None  # unreachable


def best_split(X, y, features, min_leaf):
    """Return ``(impurity, feature, threshold)`` or None.

    Lowest weighted Gini wins; ties go to the lower feature index, then to
    the lower threshold.
    """
    n_pos = int(y.sum())
    found = []
    for f in features:
        c = _feature_candidates(X[:, f], y, n_pos, min_leaf)
        if c is not None:
            found.append((int(f), *c))
    return _pick(found)


def _grow(X, y, rng, max_features, min_split, min_leaf, max_depth):
    d = X.shape[1]
    feature, threshold, left, right, n_neg, n_pos = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        p = int(y[idx].sum())
        n_neg.append(len(idx) - p)
        n_pos.append(p)
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = len(idx)
        if n < min_split or n_neg[node] == 0 or n_pos[node] == 0:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        Xn, yn = X[idx], y[idx]
        split = None
        if max_features >= d:
            split = best_split(Xn, yn, range(d), min_leaf)
        else:
            # visit features in random order until max_features of them admit a cut
            found = []
            for f in rng.permutation(d):
                c = _feature_candidates(Xn[:, f], yn, n_pos[node], min_leaf)
                if c is not None:
                    found.append((int(f), *c))
                    if len(found) == max_features:
                        break
            split = _pick(found)
        if split is None:
            continue
        _, f, thr = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        ln, rn = new_node(li), new_node(ri)
        feature[node], threshold[node], left[node], right[node] = f, thr, ln, rn
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))

    return {
        "feature": np.array(feature, np.int64),
        "threshold": np.array(threshold, np.float64),
        "left": np.array(left, np.int64),
        "right": np.array(right, np.int64),
        "n_neg": np.array(n_neg, np.int64),
        "n_pos": np.array(n_pos, np.int64),
    }


def _tree_arrays(state):
    return {k: np.asarray(v) for k, v in state.items()}


def tree_leaf_fraction(tree, X) -> np.ndarray:
    feature, threshold = tree["feature"], tree["threshold"]
    left, right = tree["left"], tree["right"]
    node = np.zeros(len(X), np.int64)
    active = np.arange(len(X))
    while len(active):
        f = feature[node[active]]
        internal = f >= 0
        active = active[internal]
        if not len(active):
            break
        cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
    npos = tree["n_pos"][node].astype(np.float64)
    return npos / (npos + tree["n_neg"][node])


@register
class DecisionTree(FittedModel):
    kind = "dtree"
    threshold = 0.5
    defaults = {
        "min_samples_split": 10,
        "min_samples_leaf": 5,
        "max_features": "sqrt",
        "max_depth": None,
    }

    def __init__(self, spec, n_features, summary, tree):
        super().__init__(spec, n_features, summary)
        self.tree = tree

    @property
    def n_nodes(self):
        return len(self.tree["feature"])

    def root_split(self):
        if self.tree["feature"][0] < 0:
            return None
        return int(self.tree["feature"][0]), float(self.tree["threshold"][0])

    def _score(self, X):
        return tree_leaf_fraction(self.tree, X)

    def state(self):
        return self.tree

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(spec, n_features, summary, _tree_arrays(state))


def _check_tree_hp(hp):
    if hp["min_samples_split"] < 1 or hp["min_samples_leaf"] < 1:
        raise ValueError("tree minimums must be >= 1")


def fit_dtree(spec: ModelSpec, X, y) -> DecisionTree:
    X, y = check_xy(X, y)
    hp = {**DecisionTree.defaults, **spec.hyperparams}
    _check_tree_hp(hp)
    rng = np.random.default_rng(derive_seed(spec.seed, "tree:0"))
    tree = _grow(
        X, y, rng,
        resolve_max_features(hp["max_features"], X.shape[1]),
        hp["min_samples_split"], hp["min_samples_leaf"], hp["max_depth"],
    )
    summary = TrainingSummary(iterations=len(tree["feature"]), converged=True)
    return DecisionTree(spec, X.shape[1], summary, tree)


@register
class RandomForest(FittedModel):
    kind = "rforest"
    threshold = 0.5
    defaults = {
        "n_trees": 100,
        "bootstrap": True,
        "min_samples_split": 10,
        "min_samples_leaf": 5,
        "max_features": "sqrt",
        "max_depth": None,
    }

    def __init__(self, spec, n_features, summary, trees):
        super().__init__(spec, n_features, summary)
        self.trees = trees

    def _score(self, X):
        total = np.zeros(len(X))
        for t in self.trees:
            total += tree_leaf_fraction(t, X)
        return total / len(self.trees)

    def state(self):
        return {"trees": self.trees}

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(spec, n_features, summary, [_tree_arrays(t) for t in state["trees"]])


def fit_rforest(spec: ModelSpec, X, y) -> RandomForest:
    X, y = check_xy(X, y)
    hp = {**RandomForest.defaults, **spec.hyperparams}
    _check_tree_hp(hp)
    if hp["n_trees"] < 1:
        raise ValueError("n_trees must be >= 1")
    mf = resolve_max_features(hp["max_features"], X.shape[1])
    trees = []
    for t in range(hp["n_trees"]):
        rng = np.random.default_rng(derive_seed(spec.seed, f"tree:{t}"))
        if hp["bootstrap"]:
            idx = rng.integers(0, len(y), size=len(y))
            Xt, yt = X[idx], y[idx]
        else:
            Xt, yt = X, y
        trees.append(
            _grow(Xt, yt, rng, mf, hp["min_samples_split"], hp["min_samples_leaf"], hp["max_depth"])
        )
    summary = TrainingSummary(iterations=len(trees), converged=True)
    return RandomForest(spec, X.shape[1], summary, trees)


FITTERS["dtree"] = fit_dtree
FITTERS["rforest"] = fit_rforest
