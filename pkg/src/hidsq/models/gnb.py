import numpy as np

from .base import FITTERS, FittedModel, TrainingSummary, check_xy, register


@register
class GaussianNB(FittedModel):
    kind = "gnb"
    threshold = 0.5
    defaults = {"var_smoothing": 1e-9}

    def __init__(self, spec, n_features, summary, prior, mean, var):
        super().__init__(spec, n_features, summary)
        self.prior = np.asarray(prior, dtype=np.float64)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = np.asarray(var, dtype=np.float64)

    def joint_log_likelihood(self, X):
        ll = -0.5 * (
            np.log(2 * np.pi * self.var).sum(axis=1)[None, :]
            + (((X[:, None, :] - self.mean[None]) ** 2) / self.var[None]).sum(axis=2)
        )
        return ll + np.log(self.prior)[None, :]

    def posterior(self, X):
        jll = self.joint_log_likelihood(self._check(X))
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def _score(self, X):
        jll = self.joint_log_likelihood(X)
        # P(1|x) = 1 / (1 + exp(l0 - l1)), written to avoid overflow
        return 0.5 * (1.0 + np.tanh(0.5 * (jll[:, 1] - jll[:, 0])))

    def state(self):
        return {"prior": self.prior, "mean": self.mean, "var": self.var}

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(spec, n_features, summary, state["prior"], state["mean"], state["var"])


def fit_gnb(spec, X, y):
    X, y = check_xy(X, y)
    hp = {**GaussianNB.defaults, **spec.hyperparams}
    eps = hp["var_smoothing"] * float(X.var(axis=0).max())
    if eps == 0.0:
        eps = hp["var_smoothing"]  # every feature constant: still keep variances positive
    prior, mean, var = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        prior.append(len(Xc) / len(X))
        mean.append(Xc.mean(axis=0))
        var.append(Xc.var(axis=0) + eps)
    return GaussianNB(spec, X.shape[1], TrainingSummary(), prior, mean, var)


FITTERS["gnb"] = fit_gnb
