"""Smooth compactly supported profiles shared by phantoms and conformal metrics."""

import numpy as np


def bump_profile(t: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - t^2)) for |t| < 1, zero otherwise; equals 1 at t = 0."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    safe = np.where(inside, t, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    positive = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
    s = 1.0 - t
    complement = np.where(s > 0.0, np.exp(-1.0 / np.where(s > 0.0, s, 1.0)), 0.0)
    return positive / (positive + complement)


def radial_bump(u: np.ndarray, center: np.ndarray, width: float) -> np.ndarray:
    """bump_profile(|u - center| / width)."""
    radius = np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(center, dtype=float), axis=-1)
    return bump_profile(radius / width)
