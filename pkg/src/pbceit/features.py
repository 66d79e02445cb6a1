"""PCA pretreatment of voltage frames."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


class DegenerateDataError(ValidationError):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, n_features), orthonormal rows
    explained_variance: np.ndarray  # (k,)
    explained_ratio: np.ndarray  # (k,)
    all_ratios: np.ndarray  # ratios of every component, for cumulative reporting
    scale: np.ndarray | None = None  # per-channel sd when standardised

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def cumulative_ratio(self, k: int) -> float:
        return float(np.sum(self.all_ratios[:k]))

    def to_json(self) -> str:
        return json.dumps({
            "k": self.k,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
            "all_ratios": self.all_ratios.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        d = json.loads(text)
        scale = d.get("scale")
        return cls(mean=np.array(d["mean"]), components=np.array(d["components"]).reshape(d["k"], -1),
                   explained_variance=np.array(d["explained_variance"]),
                   explained_ratio=np.array(d["explained_ratio"]),
                   all_ratios=np.array(d["all_ratios"]),
                   scale=None if scale is None else np.array(scale))


DEFAULT_K = 4


def fit_pca(X_train, k: int | None = None, threshold: float | None = None,
            standardize: bool = False) -> PcaModel:
    """Fit PCA on training rows only.

    At most one of ``k`` (fixed count, default 4) and ``threshold`` (smallest
    k whose cumulative explained ratio reaches it) selects the component count.
    Components come from the eigendecomposition of the n-1 sample covariance;
    each is flipped so its largest-magnitude entry is positive.
    """
    X = np.asarray(X_train, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("fit_pca needs a 2-D array with at least 2 rows")
    if k is not None and threshold is not None:
        raise ValidationError("give at most one of k or threshold")
    if k is None and threshold is None:
        k = DEFAULT_K
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = None
    if standardize:
        scale = Xc.std(axis=0, ddof=1)
        scale = np.where(scale > 0, scale, 1.0)
        Xc = Xc / scale
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    pivot = np.argmax(np.abs(evecs), axis=1)
    signs = np.sign(evecs[np.arange(evecs.shape[0]), pivot])
    evecs = evecs * np.where(signs == 0, 1.0, signs)[:, None]
    total = evals.sum()
    if total > 0:
        ratios = evals / total
    else:
        if threshold is not None:
            raise DegenerateDataError("all training rows are identical; variance threshold undefined")
        ratios = np.zeros_like(evals)
    if threshold is not None:
        if not (0 < threshold <= 1):
            raise ValidationError("threshold must lie in (0, 1]")
        cum = np.cumsum(ratios)
        k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
        k = min(k, evals.size)
    if not (1 <= k <= evals.size):
        raise ValidationError(f"k must lie in [1, {evals.size}], got {k}")
    return PcaModel(mean=mean, components=evecs[:k].copy(), explained_variance=evals[:k].copy(),
                    explained_ratio=ratios[:k].copy(), all_ratios=ratios, scale=scale)


def project(model: PcaModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.mean.size:
        raise ValidationError(f"expected {model.mean.size} columns, got {X.shape[1]}")
    Xc = X - model.mean
    if model.scale is not None:
        Xc = Xc / model.scale
    return Xc @ model.components.T


def back_project(model: PcaModel, scores) -> np.ndarray:
    Xc = np.asarray(scores, dtype=float) @ model.components
    if model.scale is not None:
        Xc = Xc * model.scale
    return Xc + model.mean
