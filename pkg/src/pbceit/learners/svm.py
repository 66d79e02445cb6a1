"""One-vs-rest linear SVM trained by full-batch sub-gradient descent."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

DEFAULT_C = 1.0
DEFAULT_EPOCHS = 1000


@dataclass
class LinearSvm:
    classes: np.ndarray
    weights: np.ndarray  # (n_classes, n_features + 1), last column is the bias
    mean: np.ndarray
    scale: np.ndarray
    C: float
    epochs: int
    seed: int | None = None
    objective: np.ndarray = field(default=None)  # (n_classes, epochs), averaged iterate

    def _augment(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.mean.size:
            raise ValidationError(f"expected {self.mean.size} columns, got {X.shape[1]}")
        Z = (X - self.mean) / self.scale
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    def decision_function(self, X) -> np.ndarray:
        return self._augment(X) @ self.weights.T

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.decision_function(X), axis=1)]

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSvm":
        n = d["shape"]
        return cls(classes=np.asarray(d["classes"]),
                   weights=np.asarray(d["weights"], float).reshape(n["classes"], n["features"] + 1),
                   mean=np.asarray(d["mean"], float), scale=np.asarray(d["scale"], float),
                   C=float(d["C"]), epochs=int(d["epochs"]), seed=d.get("seed"))

    def to_dict(self) -> dict:
        return ({
            "classes": self.classes.tolist(), "C": self.C, "epochs": self.epochs,
            "seed": self.seed,
            "shape": {"classes": int(self.weights.shape[0]), "features": int(self.mean.size)},
            "weights": self.weights.tolist(), "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        })


def _objective(w, Z, y, lam) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (Z @ w))
    return 0.5 * lam * float(w @ w) + float(hinge.mean())


def _train_binary(Z, y, lam, epochs):
    """Sub-gradient descent with step 1/(lam t) and Polyak averaging.

    The bias rides along as a constant feature and is regularised with the
    weights, which keeps the 1/(lam t) step stable for it too. Iterates are
    projected onto the ball of radius 1/sqrt(lam) that contains the optimum.
    """
    n, d = Z.shape
    w = np.zeros(d)
    avg = np.zeros(d)
    radius = 1.0 / np.sqrt(lam)
    obj = np.empty(epochs)
    for t in range(1, epochs + 1):
        active = y * (Z @ w) < 1.0
        grad = lam * w - (y[active] @ Z[active]) / n
        w = w - grad / (lam * t)
        norm = np.sqrt(w @ w)
        if norm > radius:
            w *= radius / norm
        avg += (w - avg) / t
        obj[t - 1] = _objective(avg, Z, y, lam)
    return avg, obj


def train_linear_svm(X, labels, C: float = DEFAULT_C, epochs: int = DEFAULT_EPOCHS,
                     seed: int | None = 0, standardize: bool = True) -> LinearSvm:
    """Fit one head per class (that class against the rest).

    Inputs are standardised with training statistics unless ``standardize``
    is off. Full-batch updates make the fit deterministic; ``seed`` is only
    recorded for provenance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ValidationError("X and labels differ in length")
    if not C > 0 or int(epochs) < 1:
        raise ValidationError("C must be positive and epochs >= 1")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValidationError("linear SVM needs at least two classes")
    mean = X.mean(axis=0) if standardize else np.zeros(X.shape[1])
    scale = X.std(axis=0) if standardize else np.ones(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    model = LinearSvm(classes=classes, weights=np.zeros((classes.size, X.shape[1] + 1)),
                      mean=mean, scale=scale, C=float(C), epochs=int(epochs), seed=seed)
    Z = model._augment(X)
    lam = 1.0 / (C * X.shape[0])
    heads = [_train_binary(Z, np.where(labels == c, 1.0, -1.0), lam, int(epochs))
             for c in classes]
    model.weights = np.array([h[0] for h in heads])
    model.objective = np.array([h[1] for h in heads])
    if classes.size == 2:
        # both heads see the same split; keep them exactly antisymmetric
        model.weights[0] = -model.weights[1]
    return model
