"""Weighted circular statistics on angles in radians."""

import numpy as np

from .field import wrap_angle


def _resultant(angles, weights=None):
    angles = np.asarray(angles, dtype=float)
    w = np.ones_like(angles) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ValueError("circular statistics need positive total weight")
    c = np.sum(w * np.cos(angles)) / total
    s = np.sum(w * np.sin(angles)) / total
    return c, s


def circular_mean(angles, weights=None) -> float:
    c, s = _resultant(angles, weights)
    return float(wrap_angle(np.arctan2(s, c)))


def resultant_length(angles, weights=None) -> float:
    c, s = _resultant(angles, weights)
    return float(min(1.0, np.hypot(c, s)))


def circular_variance(angles, weights=None) -> float:
    """1 - mean resultant length; 0 for identical angles, 1 for balanced ones."""
    return max(0.0, 1.0 - resultant_length(angles, weights))
