"""Exact Gaussian process regression with a squared-exponential kernel."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .. import _accel
from ..errors import NumericalError, ValidationError

NOISE_FRACTION = 1e-2
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GprModel:
    X: np.ndarray
    y_mean: np.ndarray  # (m,) constant prior mean per output
    length_scale: float
    signal_var: np.ndarray  # (m,)
    noise_var: np.ndarray  # (m,)
    chol: tuple  # per-output lower Cholesky factors of K + noise I (+ jitter)
    alpha: np.ndarray  # (n, m)
    jitter: np.ndarray  # (m,) extra diagonal actually used

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GprModel":
        """Rebuild from stored data and hyperparameters; factors are recomputed."""
        n = d["shape"]
        X = np.asarray(d["X"], dtype=float).reshape(n["n"], n["inputs"])
        R = se_kernel(X, X, d["length_scale"])
        chols = []
        for j in range(n["outputs"]):
            K = d["signal_var"][j] * R + (d["noise_var"][j] + d["jitter"][j]) * np.eye(n["n"])
            chols.append(np.linalg.cholesky(K))
        return cls(X=X, y_mean=np.asarray(d["y_mean"], float),
                   length_scale=float(d["length_scale"]),
                   signal_var=np.asarray(d["signal_var"], float),
                   noise_var=np.asarray(d["noise_var"], float), chol=tuple(chols),
                   alpha=np.asarray(d["alpha"], float).reshape(n["n"], n["outputs"]),
                   jitter=np.asarray(d["jitter"], float))

    def to_dict(self) -> dict:
        return ({
            "shape": {"n": int(self.X.shape[0]), "inputs": int(self.X.shape[1]),
                      "outputs": int(self.alpha.shape[1])},
            "length_scale": self.length_scale, "signal_var": self.signal_var.tolist(),
            "noise_var": self.noise_var.tolist(), "y_mean": self.y_mean.tolist(),
            "jitter": self.jitter.tolist(), "X": self.X.tolist(), "alpha": self.alpha.tolist(),
        })


def se_kernel(A, B, length_scale: float, signal_var: float = 1.0) -> np.ndarray:
    d2 = _accel.sq_distances(np.atleast_2d(A), np.atleast_2d(B))
    return signal_var * np.exp(-0.5 * d2 / length_scale ** 2)


def median_length_scale(X) -> float:
    d2 = _accel.sq_distances(X, X)
    iu = np.triu_indices(X.shape[0], 1)
    d = np.sqrt(d2[iu])
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def _factor(K, signal_var):
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(K.shape[0])), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START * signal_var if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * signal_var * (1 + 1e-12):
                raise NumericalError(
                    "GPR kernel matrix not positive definite even with jitter "
                    f"{JITTER_MAX:g} x signal variance") from None


def train_gpr(X, y, length_scale: float | None = None, signal_var=None,
              noise_var=None) -> GprModel:
    """Fit targets ``y`` (n,) or (n, m); each output column gets its own GP.

    Unset hyperparameters follow the median heuristic: length scale = median
    pairwise training distance, signal variance = target variance, noise
    variance = 1e-2 x target variance. Targets are centred first, which acts
    as a constant prior mean.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0] or X.shape[0] == 0:
        raise ValidationError("X and y must have the same, non-zero number of rows")
    m = Y.shape[1]
    ell = median_length_scale(X) if length_scale is None else float(length_scale)
    var = Y.var(axis=0)
    # constant targets carry no variance; any positive scale gives a constant mean
    var = np.where(var > 0, var, 1.0)
    s2 = np.broadcast_to(var if signal_var is None else np.asarray(signal_var, float), (m,)).copy()
    n2 = np.broadcast_to(NOISE_FRACTION * var if noise_var is None
                         else np.asarray(noise_var, float), (m,)).copy()
    if not (ell > 0 and np.all(s2 > 0) and np.all(n2 > 0)):
        raise ValidationError("GPR hyperparameters must be positive")
    y_mean = Y.mean(axis=0)
    R = se_kernel(X, X, ell)
    chols, alphas, jitters = [], [], []
    for j in range(m):
        L, jit = _factor(s2[j] * R + n2[j] * np.eye(X.shape[0]), s2[j])
        chols.append(L)
        jitters.append(jit)
        alphas.append(sla.cho_solve((L, True), Y[:, j] - y_mean[j]))
    return GprModel(X=X, y_mean=y_mean, length_scale=ell, signal_var=s2, noise_var=n2,
                    chol=tuple(chols), alpha=np.array(alphas).T, jitter=np.array(jitters))


def predict_gpr(model: GprModel, query) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and latent variance, each (q, m)."""
    Q = np.atleast_2d(np.asarray(query, dtype=float))
    if Q.shape[1] != model.X.shape[1]:
        raise ValidationError(f"query has {Q.shape[1]} columns, model expects {model.X.shape[1]}")
    R = se_kernel(Q, model.X, model.length_scale)
    mean = np.empty((Q.shape[0], model.alpha.shape[1]))
    var = np.empty_like(mean)
    for j, L in enumerate(model.chol):
        ks = model.signal_var[j] * R
        mean[:, j] = model.y_mean[j] + ks @ model.alpha[:, j]
        v = sla.solve_triangular(L, ks.T, lower=True)
        var[:, j] = np.maximum(model.signal_var[j] - np.sum(v * v, axis=0), 0.0)
    return mean, var
