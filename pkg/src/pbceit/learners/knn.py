"""k-nearest-neighbour majority vote."""
from __future__ import annotations

import numpy as np

from .. import _accel
from ..errors import ValidationError

DEFAULT_K = 5


def knn(train_X, train_labels, k: int, query) -> np.ndarray:
    """Predict a label per query row by Euclidean majority vote.

    A vote tie is settled by the tied class whose closest member is nearest
    to the query; if that distance is tied too, the lowest class wins.
    Equal distances are ordered by training-row index.
    """
    train_X = np.atleast_2d(np.asarray(train_X, dtype=float))
    labels = np.asarray(train_labels)
    if train_X.shape[0] == 0:
        raise ValidationError("knn needs a non-empty training set")
    if labels.shape[0] != train_X.shape[0]:
        raise ValidationError("train_X and train_labels differ in length")
    if int(k) < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    query = np.atleast_2d(np.asarray(query, dtype=float))
    if query.shape[1] != train_X.shape[1]:
        raise ValidationError(f"query has {query.shape[1]} columns, training data {train_X.shape[1]}")
    k = min(int(k), train_X.shape[0])
    classes, codes = np.unique(labels, return_inverse=True)
    d2 = _accel.sq_distances(query, train_X)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    out = np.empty(query.shape[0], dtype=np.int64)
    for q in range(query.shape[0]):
        nb = codes[order[q]]
        votes = np.bincount(nb, minlength=classes.size)
        tied = np.flatnonzero(votes == votes.max())
        if tied.size == 1:
            out[q] = tied[0]
            continue
        # neighbours are sorted by distance, so the first tied class seen is nearest
        nearest = {}
        for j, c in zip(order[q], nb):
            if c in tied and c not in nearest:
                nearest[c] = d2[q, j]
        best = min(nearest.values())
        out[q] = min(c for c, dist in nearest.items() if dist == best)
    return classes[out]
