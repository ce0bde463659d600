import numpy as np

from .base import FITTERS, FittedModel, Standardizer, TrainingSummary, check_xy, register


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _objective(w, b, X, y, l2):
    z = X @ w + b
    # log(1 + e^z) - y z, stable for large |z|
    nll = np.logaddexp(0.0, z) - y * z
    return float(nll.sum() + 0.5 * l2 * (w @ w))


@register
class LogisticRegression(FittedModel):
    kind = "logreg"
    threshold = 0.5
    defaults = {"l2": 1.0, "tol": 1e-6, "max_iter": 1000, "standardize": True}

    def __init__(self, spec, n_features, summary, scaler, coef, intercept):
        super().__init__(spec, n_features, summary)
        self.scaler = scaler
        self.coef = np.asarray(coef, dtype=np.float64)
        self.intercept = float(intercept)

    def _score(self, X):
        return sigmoid(self.scaler(X) @ self.coef + self.intercept)

    def posterior(self, X):
        p1 = self.score(X)
        return np.column_stack([1.0 - p1, p1])

    def state(self):
        return {"scaler": self.scaler.state(), "coef": self.coef, "intercept": self.intercept}

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        sc = Standardizer(**state["scaler"])
        return cls(spec, n_features, summary, sc, state["coef"], state["intercept"])


def fit_logreg(spec, X, y):
    """Maximum-likelihood fit with an L2 penalty on the weights (bias unpenalised).

    Damped Newton steps until the gradient norm drops below ``tol``.
    """
    X, y = check_xy(X, y)
    hp = {**LogisticRegression.defaults, **spec.hyperparams}
    scaler = Standardizer.fit(X) if hp["standardize"] else Standardizer.identity(X.shape[1])
    Z = scaler(X)
    n, d = Z.shape
    A = np.column_stack([Z, np.ones(n)])
    reg = np.full(d + 1, hp["l2"])
    reg[-1] = 0.0
    theta = np.zeros(d + 1)
    yf = y.astype(np.float64)
    obj = _objective(theta[:-1], theta[-1], Z, yf, hp["l2"])
    history = [obj]
    converged = False
    it = 0
    for it in range(1, hp["max_iter"] + 1):
        p = sigmoid(A @ theta)
        grad = A.T @ (p - yf) + reg * theta
        if np.linalg.norm(grad) < hp["tol"]:
            converged = True
            it -= 1
            break
        H = (A * (p * (1 - p))[:, None]).T @ A + np.diag(reg) + 1e-10 * np.eye(d + 1)
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = theta - t * step
            c_obj = _objective(cand[:-1], cand[-1], Z, yf, hp["l2"])
            if c_obj <= obj + 1e-4 * t * -(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        theta, obj = cand, c_obj
        history.append(obj)
    summary = TrainingSummary(it, converged, obj, history)
    return LogisticRegression(spec, d, summary, scaler, theta[:-1], theta[-1])


FITTERS["logreg"] = fit_logreg
