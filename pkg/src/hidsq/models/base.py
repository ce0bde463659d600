from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, ClassVar

import numpy as np

MODEL_FILE_FORMAT = "hidsq-model"
MODEL_FILE_VERSION = 1


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def id(self) -> str:
        return self.kind


@dataclass
class TrainingSummary:
    iterations: int = 0
    converged: bool = True
    objective: float | None = None
    history: list[float] = field(default_factory=list, repr=False)


class FittedModel:
    """A trained binary classifier.

    ``score`` is larger for more intrusion-like inputs; ``predict`` returns 1
    exactly when the score is strictly above ``threshold`` (ties go to 0).
    """

    kind: ClassVar[str] = ""
    threshold: ClassVar[float] = 0.5
    defaults: ClassVar[dict] = {}

    def __init__(self, spec: ModelSpec, n_features: int, summary: TrainingSummary):
        self.spec = spec
        self.n_features = n_features
        self.summary = summary

    # subclasses provide these
    def _score(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_state(cls, spec, n_features, summary, state) -> "FittedModel":
        raise NotImplementedError

    @property
    def hp(self) -> dict:
        return {**self.defaults, **self.spec.hyperparams}

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"{self.kind}: expected {self.n_features} features, got shape {X.shape}"
            )
        return X

    def score(self, X) -> np.ndarray:
        X = self._check(X)
        if len(X) == 0:
            return np.zeros(0)
        return self._score(X)

    def predict(self, X) -> np.ndarray:
        return (self.score(X) > self.threshold).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FILE_FORMAT,
            "version": MODEL_FILE_VERSION,
            "kind": self.kind,
            "hyperparams": self.hp,
            "seed": self.spec.seed,
            "n_features": self.n_features,
            "summary": {k: v for k, v in asdict(self.summary).items() if k != "history"},
            "state": _jsonable(self.state()),
        }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


REGISTRY: dict[str, type[FittedModel]] = {}
FITTERS: dict[str, Any] = {}


def register(cls):
    REGISTRY[cls.kind] = cls
    return cls


def resolve_hyperparams(kind: str, given: dict) -> dict:
    cls = REGISTRY[kind]
    unknown = set(given) - set(cls.defaults)
    if unknown:
        raise ValueError(f"{kind}: unknown hyperparameters {sorted(unknown)}")
    return {**cls.defaults, **given}


def check_xy(X, y, need_both=True):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8).reshape(-1)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if len(X) != len(y):
        raise ValueError("X and y differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if need_both and len(np.unique(y)) < 2:
        raise ValueError("training data must contain both labels")
    return X, y


def fit(spec: ModelSpec, X, y) -> FittedModel:
    if spec.kind not in FITTERS:
        raise ValueError(f"unknown model kind {spec.kind!r}; choose from {sorted(FITTERS)}")
    resolve_hyperparams(spec.kind, spec.hyperparams)
    model = FITTERS[spec.kind](spec, X, y)
    if not model.summary.converged:
        warnings.warn(
            f"{spec.kind} did not converge after {model.summary.iterations} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    return model


def predict(model: FittedModel, X) -> np.ndarray:
    return model.predict(X)


def score(model: FittedModel, X) -> np.ndarray:
    return model.score(X)


def save_model(model: FittedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FILE_FORMAT:
        raise ValueError(f"{path}: not a model file")
    if doc.get("version") != MODEL_FILE_VERSION:
        raise ValueError(f"{path}: unsupported model file version {doc.get('version')}")
    cls = REGISTRY[doc["kind"]]
    spec = ModelSpec(doc["kind"], doc["hyperparams"], doc["seed"])
    summary = TrainingSummary(**doc["summary"])
    return cls.from_state(spec, doc["n_features"], summary, doc["state"])


class Standardizer:
    """Train-set z-scoring with the std floored at 1e-12."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, X):
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), 1e-12))

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    def __call__(self, X):
        return (X - self.mean) / self.std

    def state(self):
        return {"mean": self.mean, "std": self.std}
