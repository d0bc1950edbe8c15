"""Autocorrelation LPC and formant picking from predictor roots."""

from __future__ import annotations

import numpy as np

from ..audio import ANALYSIS_RATE

LPC_ORDER = 2 + ANALYSIS_RATE // 1000  # 18
PRE_EMPHASIS = 0.97
MAX_BANDWIDTH_HZ = 400.0
MIN_FORMANT_HZ = 90.0


def autocorr(x: np.ndarray, maxlag: int) -> np.ndarray:
    n = len(x)
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[:maxlag + 1]
    return r


def levinson(r: np.ndarray, order: int):
    """Levinson-Durbin recursion.

    Returns ``(a, err, k)`` with ``a[0] == 1`` such that the prediction error
    filter is ``A(z) = sum(a[i] z^-i)``; ``k`` are the reflection coefficients.
    """
    r = np.asarray(r, dtype=float)
    a = np.zeros(order + 1)
    a[0] = 1.0
    k = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        if err <= 0:
            break
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        ki = -acc / err
        k[i - 1] = ki
        a[1:i] = a[1:i] + ki * a[i - 1:0:-1]
        a[i] = ki
        err *= 1.0 - ki * ki
    return a, err, k


def lpc(frame: np.ndarray, order: int = LPC_ORDER, pre_emphasis: float = PRE_EMPHASIS):
    x = np.asarray(frame, dtype=float)
    x = np.append(x[0], x[1:] - pre_emphasis * x[:-1])
    x = x * np.hamming(len(x))
    r = autocorr(x, order)
    if r[0] <= 0:
        return None
    return levinson(r, order)[0]


def lpc_formants(frame: np.ndarray, fs: int = ANALYSIS_RATE, order: int = LPC_ORDER,
                 max_bw: float = MAX_BANDWIDTH_HZ, min_freq: float = MIN_FORMANT_HZ):
    """First three formant frequencies in Hz; missing ones come back as 0."""
    a = lpc(frame, order)
    if a is None or not np.all(np.isfinite(a)):
        return (0.0, 0.0, 0.0)
    roots = np.roots(a)
    roots = roots[np.imag(roots) > 0]
    freqs = np.angle(roots) * fs / (2 * np.pi)
    with np.errstate(divide="ignore"):
        bws = -np.log(np.abs(roots)) * fs / np.pi
    keep = (bws < max_bw) & (freqs > min_freq) & (freqs < fs / 2)
    found = np.sort(freqs[keep])[:3]
    out = np.zeros(3)
    out[:len(found)] = found
    return tuple(float(f) for f in out)
