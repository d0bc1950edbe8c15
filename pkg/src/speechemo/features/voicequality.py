"""Frame-to-frame jitter and shimmer."""

from __future__ import annotations

import numpy as np


def peak_amplitude(frame) -> float:
    frame = np.asarray(frame, dtype=float)
    return float(np.max(np.abs(frame))) if frame.size else 0.0


def jitter(f0s):
    """Per-pair jitter ``|P_n - P_{n-1}| / mean(P)`` and its mean.

    Only consecutive frames that are both voiced (F0 > 0) form a pair, and
    the mean F0 is taken over voiced frames. With fewer than two voiced
    frames, or no voiced pair, the mean is 0.
    """
    p = np.asarray(f0s, dtype=float)
    voiced = p > 0
    if voiced.sum() < 2:
        return np.zeros(0), 0.0
    pair = voiced[1:] & voiced[:-1]
    if not pair.any():
        return np.zeros(0), 0.0
    values = np.abs(np.diff(p))[pair] / p[voiced].mean()
    return values, float(values.mean())


def shimmer(amplitudes):
    """Per-pair shimmer ``|A_n - A_{n-1}| / mean(A)`` for n = 2..N and its mean."""
    a = np.asarray(amplitudes, dtype=float)
    if a.size < 2:
        return np.zeros(0), 0.0
    mean = a.mean()
    if mean <= 0:
        return np.zeros(a.size - 1), 0.0
    values = np.abs(np.diff(a)) / mean
    return values, float(values.mean())
