import numpy as np

from .base import FITTERS, FittedModel, TrainingSummary, check_xy, register


def nearest_indices(train: np.ndarray, X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest training rows (Euclidean) for every row of X.

    Equal distances are resolved by lower training index.  Rows come back
    ordered by (distance, index).
    """
    out = np.empty((len(X), k), np.int64)
    chunk = max(1, 2_000_000 // max(1, train.size))
    for start in range(0, len(X), chunk):
        q = X[start:start + chunk]
        d2 = ((q[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
        below = d2 < kth
        at = d2 == kth
        room = k - below.sum(axis=1, keepdims=True)
        chosen = below | (at & (np.cumsum(at, axis=1) <= room))
        rows, cols = np.nonzero(chosen)  # row-major, so cols ascend within a row
        cols = cols.reshape(len(q), k)
        order = np.argsort(np.take_along_axis(d2, cols, axis=1), axis=1, kind="stable")
        out[start:start + len(q)] = np.take_along_axis(cols, order, axis=1)
    return out


@register
class KNearestNeighbors(FittedModel):
    kind = "knn"
    threshold = 0.5
    defaults = {"k": 3}

    def __init__(self, spec, n_features, summary, X, y):
        super().__init__(spec, n_features, summary)
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int8)

    def neighbors(self, X):
        return nearest_indices(self.X, self._check(X), self.hp["k"])

    def _score(self, X):
        idx = nearest_indices(self.X, X, self.hp["k"])
        return self.y[idx].mean(axis=1)

    def state(self):
        return {"X": self.X, "y": self.y}

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(spec, n_features, summary, state["X"], state["y"])


def fit_knn(spec, X, y):
    X, y = check_xy(X, y)
    k = {**KNearestNeighbors.defaults, **spec.hyperparams}["k"]
    if not 1 <= k <= len(X):
        raise ValueError(f"k must lie in [1, {len(X)}]")
    return KNearestNeighbors(spec, X.shape[1], TrainingSummary(), X, y)


FITTERS["knn"] = fit_knn
