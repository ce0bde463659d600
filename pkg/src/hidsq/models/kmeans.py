"""Two-cluster k-means (k-means++ seeding, Lloyd iterations) used as a detector.

Clusters are mapped to the majority training label of their members.
"""

import numpy as np

from .base import FITTERS, FittedModel, TrainingSummary, check_xy, register


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0:
            i = rng.integers(len(X))
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, len(X) - 1)
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def lloyd(X, centers, max_iter, tol):
    """Run Lloyd iterations; returns (centers, labels, inertia, n_iter, converged, history).

    ``history`` is the objective after each assignment step; it never increases.
    """
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, centers)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(X)), labels].sum()))
        new = centers.copy()
        for j in range(len(centers)):
            members = X[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift <= tol:
            converged = True
            break
    d2 = _sq_dists(X, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    history.append(inertia)
    return centers, labels, inertia, it, converged, history


@register
class KMeansDetector(FittedModel):
    kind = "kmeans"
    threshold = 0.0
    defaults = {"k": 2, "n_init": 10, "max_iter": 300, "tol": 1e-4}

    def __init__(self, spec, n_features, summary, centers, cluster_label, scale):
        super().__init__(spec, n_features, summary)
        self.centers = np.asarray(centers, dtype=np.float64)
        self.cluster_label = np.asarray(cluster_label, dtype=np.int8)
        self.scale = float(scale)

    def assign(self, X):
        return _sq_dists(self._check(X), self.centers).argmin(axis=1)

    def _score(self, X):
        lab = self.cluster_label
        if lab.min() == lab.max():
            # both clusters carry the same label: no ranking information
            return np.full(len(X), 1.0 if lab[0] == 1 else -1.0)
        d = np.sqrt(_sq_dists(X, self.centers))
        d_normal = d[:, lab == 0].min(axis=1)
        d_intr = d[:, lab == 1].min(axis=1)
        return (d_normal - d_intr) / self.scale

    def predict(self, X):
        lab = self.cluster_label
        if lab.min() == lab.max() or len(self.centers) != 2:
            return lab[self.assign(X)].astype(np.int8)
        return super().predict(X)

    def state(self):
        return {"centers": self.centers, "cluster_label": self.cluster_label, "scale": self.scale}

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(spec, n_features, summary, state["centers"], state["cluster_label"], state["scale"])


def fit_kmeans(spec, X, y):
    X, y = check_xy(X, y, need_both=False)
    hp = {**KMeansDetector.defaults, **spec.hyperparams}
    k = hp["k"]
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(X, axis=0)) < k:
        raise ValueError(f"kmeans needs at least {k} distinct points")
    rng = np.random.default_rng(spec.seed)
    # tolerance is relative to the data scale
    tol = hp["tol"] * float(X.var(axis=0).mean())
    best = None
    for _ in range(hp["n_init"]):
        run = lloyd(X, kmeans_pp(X, k, rng), hp["max_iter"], tol)
        if best is None or run[2] < best[2]:
            best = run
    centers, labels, inertia, n_iter, converged, history = best
    cluster_label = np.zeros(k, np.int8)
    for j in range(k):
        members = y[labels == j]
        # majority label, ties (and empty clusters) to 0
        cluster_label[j] = 1 if members.sum() * 2 > len(members) else 0
    if k == 2:
        scale = float(np.sqrt(((centers[0] - centers[1]) ** 2).sum()))
    else:
        scale = float(np.mean([
            np.sqrt(((centers[i] - centers[j]) ** 2).sum())
            for i in range(k) for j in range(i + 1, k)
        ])) if k > 1 else 1.0
    scale = scale if scale > 0 else 1.0
    summary = TrainingSummary(n_iter, converged, inertia, history)
    return KMeansDetector(spec, X.shape[1], summary, centers, cluster_label, scale)


FITTERS["kmeans"] = fit_kmeans
