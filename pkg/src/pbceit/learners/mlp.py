"""Two-layer (one hidden tanh layer) network trained by Levenberg-Marquardt."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .. import seeding
from ..errors import NumericalError, ValidationError

MU_INIT = 1e-3
MU_DEC = 0.1
MU_INC = 10.0
MU_MAX = 1e10
MAX_ITER = 200
GRAD_TOL = 1e-7
MAX_VAL_FAIL = 6


@dataclass
class MlpModel:
    W1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray
    W2: np.ndarray  # (outputs, hidden)
    b2: np.ndarray
    task: str = "regression"
    classes: np.ndarray | None = None
    # inputs are mapped to [-1, 1] per column before the first layer
    x_min: np.ndarray | None = None
    x_max: np.ndarray | None = None
    seed: int | None = None

    @property
    def hidden_size(self) -> int:
        return self.W1.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.W2.shape[0]

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_params(self, p) -> None:
        h, d, o = self.hidden_size, self.n_inputs, self.n_outputs
        p = np.asarray(p, dtype=float)
        i = 0
        self.W1 = p[i:i + h * d].reshape(h, d).copy(); i += h * d
        self.b1 = p[i:i + h].copy(); i += h
        self.W2 = p[i:i + o * h].reshape(o, h).copy(); i += o * h
        self.b2 = p[i:i + o].copy()

    def normalize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_inputs:
            raise ValidationError(f"network expects {self.n_inputs} inputs, got {X.shape[1]}")
        if self.x_min is None:
            return X
        span = self.x_max - self.x_min
        span = np.where(span > 0, span, 1.0)
        return 2.0 * (X - self.x_min) / span - 1.0

    def forward(self, X) -> np.ndarray:
        H = np.tanh(self.normalize(X) @ self.W1.T + self.b1)
        return H @ self.W2.T + self.b2

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "shape": {"inputs": self.n_inputs, "hidden": self.hidden_size,
                      "outputs": self.n_outputs},
            "seed": self.seed,
            "W1": self.W1.tolist(), "b1": self.b1.tolist(),
            "W2": self.W2.tolist(), "b2": self.b2.tolist(),
            "classes": None if self.classes is None else self.classes.tolist(),
            "x_min": None if self.x_min is None else self.x_min.tolist(),
            "x_max": None if self.x_max is None else self.x_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        s = d["shape"]
        arr = lambda k: None if d.get(k) is None else np.asarray(d[k], dtype=float)
        classes = d.get("classes")
        return cls(W1=np.asarray(d["W1"], dtype=float).reshape(s["hidden"], s["inputs"]),
                   b1=np.asarray(d["b1"], dtype=float),
                   W2=np.asarray(d["W2"], dtype=float).reshape(s["outputs"], s["hidden"]),
                   b2=np.asarray(d["b2"], dtype=float), task=d["task"],
                   classes=None if classes is None else np.asarray(classes),
                   x_min=arr("x_min"), x_max=arr("x_max"), seed=d.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)  # MSE after every accepted step
    val_loss: list = field(default_factory=list)
    stop_reason: str = "max_iter"
    iterations: int = 0
    best_iteration: int = 0

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "val_loss": self.val_loss,
                "stop_reason": self.stop_reason, "iterations": self.iterations,
                "best_iteration": self.best_iteration}


def residual_jacobian(model: MlpModel, X, T) -> tuple[np.ndarray, np.ndarray]:
    """Residuals ``e = forward(X) - T`` (flattened row-major) and de/dparams."""
    Xn = model.normalize(X)
    H = np.tanh(Xn @ model.W1.T + model.b1)  # (n, h)
    Y = H @ model.W2.T + model.b2
    e = (Y - T).ravel()
    n, h = H.shape
    o = model.n_outputs
    d = Xn.shape[1]
    dH = 1.0 - H * H
    # (n, o, h): d e_ij / d z_ih
    dz = model.W2[None, :, :] * dH[:, None, :]
    jW1 = dz[:, :, :, None] * Xn[:, None, None, :]  # (n, o, h, d)
    jW2 = np.zeros((n, o, o, h))
    idx = np.arange(o)
    jW2[:, idx, idx, :] = H[:, None, :]
    jb2 = np.broadcast_to(np.eye(o), (n, o, o))
    J = np.concatenate([jW1.reshape(n, o, h * d), dz, jW2.reshape(n, o, o * h), jb2], axis=2)
    return e, J.reshape(n * o, -1)


def _init_model(n_in, hidden, n_out, seed, init, task, classes, X, stream=()):
    if init == "zeros":
        W1, b1 = np.zeros((hidden, n_in)), np.zeros(hidden)
        W2, b2 = np.zeros((n_out, hidden)), np.zeros(n_out)
    elif init == "uniform":
        rng = seeding.rng_for(seed, "init", *stream, hidden, n_in, n_out)
        W1 = rng.uniform(-0.5, 0.5, (hidden, n_in)) / np.sqrt(n_in)
        b1 = rng.uniform(-0.5, 0.5, hidden) / np.sqrt(n_in)
        W2 = rng.uniform(-0.5, 0.5, (n_out, hidden)) / np.sqrt(hidden)
        b2 = rng.uniform(-0.5, 0.5, n_out) / np.sqrt(hidden)
    else:
        raise ValidationError(f"unknown init {init!r}")
    return MlpModel(W1=W1, b1=b1, W2=W2, b2=b2, task=task, classes=classes,
                    x_min=X.min(axis=0), x_max=X.max(axis=0), seed=seed)


def one_hot(labels, classes) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[:, None] == np.asarray(classes)[None, :]).astype(float)


def train_mlp(X, Y, hidden_size: int = 5, seed: int = 0, task: str = "regression",
              X_val=None, Y_val=None, max_iter: int = MAX_ITER, init: str = "uniform",
              grad_tol: float = GRAD_TOL, max_val_fail: int = MAX_VAL_FAIL,
              stream: tuple = ()) -> tuple[MlpModel, TrainReport]:
    """Fit by Levenberg-Marquardt on the sum of squared residuals.

    For ``task="classification"`` ``Y`` holds labels; the network is fitted
    to one-hot targets and predicts the argmax. ``X_val``/``Y_val`` enable
    early stopping after ``max_val_fail`` validation checks without
    improvement, restoring the best-validation parameters. ``stream`` names
    the initialisation stream so that same-shaped networks in one run start
    from different weights.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if task not in ("regression", "classification"):
        raise ValidationError(f"unknown task {task!r}")
    classes = None
    if task == "classification":
        classes = np.unique(np.asarray(Y))
        T = one_hot(Y, classes)
    else:
        T = np.asarray(Y, dtype=float)
        if T.ndim == 1:
            T = T[:, None]
    if T.shape[0] != X.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but Y has {T.shape[0]}")
    if X.shape[0] < hidden_size + 1:
        raise ValidationError(f"need at least hidden_size + 1 = {hidden_size + 1} rows")

    model = _init_model(X.shape[1], hidden_size, T.shape[1], seed, init, task, classes, X,
                        stream)
    report = TrainReport()
    T_val = None
    if X_val is not None and len(X_val):
        X_val = np.atleast_2d(np.asarray(X_val, dtype=float))
        T_val = one_hot(Y_val, classes) if task == "classification" else np.asarray(Y_val, float)
        if T_val.ndim == 1:
            T_val = T_val[:, None]

    scale = 1.0 / T.size
    p = model.get_params()
    e, J = residual_jacobian(model, X, T)
    loss = float(e @ e) * scale
    _check_finite(loss)
    report.train_loss.append(loss)
    best_val, best_p, fails = np.inf, p.copy(), 0
    if T_val is not None:
        best_val = _mse(model, X_val, T_val)
        report.val_loss.append(best_val)

    mu = MU_INIT
    eye = np.eye(p.size)
    while report.iterations < max_iter:
        g = J.T @ e
        if np.max(np.abs(2.0 * scale * g)) < grad_tol:
            report.stop_reason = "grad_tol"
            break
        JtJ = J.T @ J
        accepted = False
        while mu <= MU_MAX:
            try:
                step = np.linalg.solve(JtJ + mu * eye, -g)
            except np.linalg.LinAlgError:
                mu *= MU_INC
                continue
            model.set_params(p + step)
            e_new, J_new = residual_jacobian(model, X, T)
            new_loss = float(e_new @ e_new) * scale
            if np.isfinite(new_loss) and new_loss < loss:
                p, e, J, loss = p + step, e_new, J_new, new_loss
                mu *= MU_DEC
                accepted = True
                break
            mu *= MU_INC
        if not accepted:
            model.set_params(p)
            report.stop_reason = "mu_overflow"
            break
        report.iterations += 1
        report.train_loss.append(loss)
        if T_val is not None:
            v = _mse(model, X_val, T_val)
            report.val_loss.append(v)
            if v < best_val:
                best_val, best_p, fails = v, p.copy(), 0
                report.best_iteration = report.iterations
            else:
                fails += 1
                if fails >= max_val_fail:
                    report.stop_reason = "early_stop"
                    break
    if T_val is not None:
        p = best_p
    else:
        report.best_iteration = report.iterations
    model.set_params(p)
    return model, report


def _mse(model, X, T) -> float:
    r = model.forward(X) - T
    val = float(np.mean(r * r))
    _check_finite(val)
    return val


def _check_finite(loss) -> None:
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite training loss ({loss}); check input scaling")


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    """Argmax class labels for classifiers, raw outputs for regressors."""
    out = model.forward(X)
    if model.task == "classification":
        return model.classes[np.argmax(out, axis=1)]
    return out
