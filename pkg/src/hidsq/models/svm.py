"""Soft-margin SVM with a polynomial kernel, trained by SMO.

Working pairs are chosen with second-order information (maximal violating
``i``, then the ``j`` giving the largest guaranteed decrease), following
Fan, Chen and Lin (JMLR 2005).  Training stops once the largest KKT
violation ``m(a) - M(a)`` falls below ``tol``.
"""

from collections import OrderedDict

import numpy as np

from .base import FITTERS, FittedModel, Standardizer, TrainingSummary, check_xy, register

TAU = 1e-12


def kernel_poly(x, y, gamma=1.0, coef0=0.0, degree=3) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("kernel arguments differ in length")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return float((gamma * (x @ y) + coef0) ** degree)


def poly_matrix(A, B, gamma, coef0, degree):
    return (gamma * (A @ B.T) + coef0) ** degree


class _KernelRows:
    """Rows of Q = (y y^T) * K, from a full matrix when small, else an LRU cache."""

    def __init__(self, Z, ys, gamma, coef0, degree, full_limit=4000, cache_rows=1500):
        self.Z, self.ys = Z, ys
        self.kp = (gamma, coef0, degree)
        self.full = None
        if len(Z) <= full_limit:
            self.full = poly_matrix(Z, Z, *self.kp) * np.outer(ys, ys)
        self.cache = OrderedDict()
        self.cache_rows = cache_rows
        self.diag = (gamma * (Z * Z).sum(axis=1) + coef0) ** degree

    def row(self, i):
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            r = poly_matrix(self.Z[i:i + 1], self.Z, *self.kp)[0] * (self.ys[i] * self.ys)
            self.cache[i] = r
            if len(self.cache) > self.cache_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return r


def smo(rows: _KernelRows, ys, C, tol, max_iter, record=False):
    """Solve min 1/2 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0.

    Returns (alpha, rho, iterations, converged, history) where the decision
    value is sum_i a_i y_i K(x_i, x) - rho.  ``history`` holds the dual
    objective e'a - 1/2 a'Qa after each update when ``record`` is set.
    """
    n = len(ys)
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = rows.diag
    history = [0.0] if record else []
    converged = False
    it = 0
    while it < max_iter:
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
        viol = -ys * G
        if not up.any() or not low.any():
            converged = True
            break
        cand = np.where(up, viol, -np.inf)
        i = int(cand.argmax())
        m_val = cand[i]
        M_val = np.where(low, viol, np.inf).min()
        if m_val - M_val < tol:
            converged = True
            break
        Qi = rows.row(i)
        b = m_val - viol  # > 0 for useful j
        ok = low & (b > 0)
        a = QD[i] + QD - 2.0 * ys[i] * ys * Qi
        a = np.where(a > 0, a, TAU)
        gain = np.where(ok, -(b * b) / a, np.inf)
        j = int(gain.argmin())
        Qj = rows.row(j)

        ai_old, aj_old = alpha[i], alpha[j]
        if ys[i] != ys[j]:
            quad = max(QD[i] + QD[j] + 2.0 * Qi[j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2.0 * Qi[j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Qi * (ai - ai_old) + Qj * (aj - aj_old)
        it += 1
        if record:
            history.append(float(-0.5 * alpha @ (G - 1.0)))

    # offset from free vectors, or the midpoint of the feasible interval
    yG = ys * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = ((ys > 0) & (alpha >= C)) | ((ys < 0) & (alpha <= 0))
        lb_mask = ((ys > 0) & (alpha <= 0)) | ((ys < 0) & (alpha >= C))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else 0.0
    return alpha, rho, it, converged, history


def kkt_violation(Q, ys, alpha, C):
    """Largest m(a) - M(a) gap computed from a full Q; zero means optimal."""
    G = Q @ alpha - 1.0
    up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
    low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
    viol = -ys * G
    if not up.any() or not low.any():
        return 0.0
    return float(max(viol[up].max() - viol[low].min(), 0.0))


@register
class PolySVM(FittedModel):
    kind = "svm_poly"
    threshold = 0.0
    defaults = {
        "C": 1.0,
        "degree": 3,
        "gamma": "scale",
        "coef0": 0.0,
        "tol": 1e-3,
        "max_passes": 10_000,
        "standardize": True,
        "record_objective": False,
    }

    def __init__(self, spec, n_features, summary, scaler, sv, coef, intercept, gamma):
        super().__init__(spec, n_features, summary)
        self.scaler = scaler
        self.sv = np.asarray(sv, dtype=np.float64).reshape(-1, n_features)
        self.coef = np.asarray(coef, dtype=np.float64)  # alpha_i * y_i
        self.intercept = float(intercept)
        self.gamma = float(gamma)

    def _score(self, X):
        hp = self.hp
        K = poly_matrix(self.scaler(X), self.sv, self.gamma, hp["coef0"], hp["degree"])
        return K @ self.coef + self.intercept

    def state(self):
        return {
            "scaler": self.scaler.state(), "sv": self.sv, "coef": self.coef,
            "intercept": self.intercept, "gamma": self.gamma,
        }

    @classmethod
    def from_state(cls, spec, n_features, summary, state):
        return cls(
            spec, n_features, summary, Standardizer(**state["scaler"]), state["sv"],
            state["coef"], state["intercept"], state["gamma"],
        )


def fit_svm(spec, X, y):
    X, y = check_xy(X, y)
    hp = {**PolySVM.defaults, **spec.hyperparams}
    if hp["C"] <= 0 or hp["degree"] < 1:
        raise ValueError("svm_poly needs C > 0 and degree >= 1")
    if len(np.unique(X, axis=0)) < 2:
        raise ValueError("svm_poly: all training vectors are identical")
    scaler = Standardizer.fit(X) if hp["standardize"] else Standardizer.identity(X.shape[1])
    Z = scaler(X)
    if hp["gamma"] == "scale":
        var = float(Z.var())
        if var == 0:
            raise ValueError("svm_poly: zero feature variance")
        gamma = 1.0 / (Z.shape[1] * var)
    else:
        gamma = float(hp["gamma"])
        if gamma <= 0:
            raise ValueError("gamma must be positive")
    ys = np.where(y == 1, 1.0, -1.0)
    rows = _KernelRows(Z, ys, gamma, hp["coef0"], hp["degree"])
    max_iter = int(hp["max_passes"]) * len(Z)
    alpha, rho, it, converged, history = smo(
        rows, ys, hp["C"], hp["tol"], max_iter, record=hp["record_objective"]
    )
    sv = alpha > 0
    summary = TrainingSummary(it, converged, history[-1] if history else None, history)
    model = PolySVM(
        spec, Z.shape[1], summary, scaler, Z[sv], alpha[sv] * ys[sv], -rho, gamma
    )
    model.alpha = alpha
    return model


FITTERS["svm_poly"] = fit_svm
