"""Single-hidden-layer ReLU network with a two-way softmax output."""

import numpy as np

from .base import FITTERS, FittedModel, Standardizer, TrainingSummary, check_xy, register


def init_params(n_in, n_hidden, n_out, rng):
    u = lambda *shape: rng.uniform(-0.5, 0.5, size=shape)  # noqa: E731
    return {"W1": u(n_in, n_hidden), "b1": u(n_hidden), "W2": u(n_hidden, n_out), "b2": u(n_out)}


def forward(params, X):
    pre = X @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params["W2"] + params["b2"]
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return pre, hidden, e / e.sum(axis=1, keepdims=True)


def loss_and_grads(params, X, y):
    """Mean cross-entropy over the batch and its gradients w.r.t. every parameter."""
    pre, hidden, probs = forward(params, X)
    m = len(X)
    loss = -np.log(np.maximum(probs[np.arange(m), y], 1e-300)).mean()
    d_logits = probs.copy()
    d_logits[np.arange(m), y] -= 1.0
    d_logits /= m
    grads = {"W2": hidden.T @ d_logits, "b2": d_logits.sum(axis=0)}
    d_hidden = (d_logits @ params["W2"].T) * (pre > 0)
    grads["W1"] = X.T @ d_hidden
    grads["b1"] = d_hidden.sum(axis=0)
    return float(loss), grads


@register
class MLP(FittedModel):
    kind = "mlp"
    threshold = 0.5
    defaults = {
        "hidden": 6,
        "learning_rate": 0.01,
        "batch_size": 32,
        "epochs": 50,
        "init_scale": 0.5,
        "standardize": True,
    }

    def __init__(self, spec, n_features, summary, scaler, params):
        super().__init__(spec, n_features, summary)
        self.scaler = scaler
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def posterior(self, X):
        return forward(self.params, self.scaler(self._check(X)))[2]

    def _score(self, X):
        return forward(self.params, self.scaler(X))[2][:, 1]

    def state(self):
        return {"scaler": self.scaler.state(), "params": self.params}

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(spec, n_features, summary, Standardizer(**state["scaler"]), state["params"])


def fit_mlp(spec, X, y):
    X, y = check_xy(X, y)
    hp = {**MLP.defaults, **spec.hyperparams}
    rng = np.random.default_rng(spec.seed)
    scaler = Standardizer.fit(X) if hp["standardize"] else Standardizer.identity(X.shape[1])
    Z = scaler(X)
    params = init_params(Z.shape[1], hp["hidden"], 2, rng)
    s = hp["init_scale"] / 0.5
    params = {k: v * s for k, v in params.items()}
    y = y.astype(np.int64)
    lr, bs = hp["learning_rate"], hp["batch_size"]
    history = []
    for _ in range(hp["epochs"]):
        order = rng.permutation(len(Z))
        for start in range(0, len(Z), bs):
            idx = order[start:start + bs]
            _, grads = loss_and_grads(params, Z[idx], y[idx])
            for k in params:
                params[k] -= lr * grads[k]
        history.append(loss_and_grads(params, Z, y)[0])
    summary = TrainingSummary(hp["epochs"], True, history[-1] if history else None, history)
    return MLP(spec, Z.shape[1], summary, scaler, params)


FITTERS["mlp"] = fit_mlp
