"""Per-purpose random streams derived from a single root seed.

Every stream is ``numpy.random.default_rng(SeedSequence(root, spawn_key=key))``
where ``key`` starts with a fixed purpose code followed by integer identifiers
(specimen id, frame index, fold, ...). Streams therefore do not depend on the
order in which they are requested, which keeps parallel runs and partial
reruns consistent with serial ones.
"""
from __future__ import annotations

import zlib

import numpy as np

PURPOSES = {
    "jitter": 1,
    "noise": 2,
    "split": 3,
    "init": 4,
    "folds": 5,
    "svm": 6,
}


def _code(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token)
    return zlib.crc32(str(token).encode())


def rng_for(root_seed: int, purpose: str, *keys) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose {purpose!r}")
    key = (PURPOSES[purpose],) + tuple(_code(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=key))
