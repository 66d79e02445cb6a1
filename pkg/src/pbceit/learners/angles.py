"""Angles as (sin, cos) pairs so that 0 and 359 degrees are neighbours."""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError

UNDEFINED_NORM = 1e-12


class UndefinedAngleError(ValidationError):
    pass


def encode(deg) -> np.ndarray:
    """Degrees to ``(sin, cos)`` columns; shape (..., 2)."""
    rad = np.deg2rad(np.asarray(deg, dtype=float))
    return np.stack([np.sin(rad), np.cos(rad)], axis=-1)


def decode(sc) -> np.ndarray:
    """``(sin, cos)`` pairs back to degrees in [0, 360)."""
    sc = np.asarray(sc, dtype=float)
    s, c = sc[..., 0], sc[..., 1]
    if np.any(np.hypot(s, c) < UNDEFINED_NORM):
        raise UndefinedAngleError("cannot decode an angle from (0, 0)")
    deg = np.rad2deg(np.arctan2(s, c)) % 360.0
    # arctan2 can return -0.0 or a value rounding up to 360
    return np.where(deg >= 360.0, 0.0, deg) + 0.0


def circular_error(a, b) -> np.ndarray:
    """Absolute wrap-around difference in degrees, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


def circular_rmse(pred, truth) -> float:
    e = circular_error(pred, truth)
    return float(np.sqrt(np.mean(e * e)))
