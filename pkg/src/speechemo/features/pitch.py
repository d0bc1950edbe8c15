"""Frame periodicity and subharmonic-to-harmonic ratio (SHR) pitch estimation."""

from __future__ import annotations

import functools

import numpy as np

from ..audio import ANALYSIS_RATE

MIN_LAG = 40
MAX_LAG = 242
F0_MIN_HZ = ANALYSIS_RATE / MAX_LAG  # ~66 Hz
F0_MAX_HZ = ANALYSIS_RATE / MIN_LAG  # 400 Hz

VOICING_THRESHOLD = 0.4
SHR_THRESHOLD = 0.4
CEILING_HZ = 1250.0
NFFT = 8192
GRID_STEPS_PER_OCTAVE = 384
OCTAVE_SEARCH = 2 ** (1 / 12)


def periodicity(frame: np.ndarray, min_lag: int = MIN_LAG, max_lag: int = MAX_LAG) -> float:
    """Peak normalized autocorrelation over the pitch lag range.

    Each lag is normalized by the energy of the two overlapping segments, so
    a stationary periodic frame scores 1 whatever its length and the value
    always lies in [-1, 1]. Silent frames score 0.
    """
    x = np.asarray(frame, dtype=float)
    n = len(x)
    if not np.any(x):
        return 0.0
    max_lag = min(max_lag, n - 1)
    lags = np.arange(min_lag, max_lag + 1)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[lags]
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    head = c[n - lags]  # energy of x[0:n-lag]
    tail = c[n] - c[lags]  # energy of x[lag:n]
    denom = np.sqrt(head * tail)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(denom > 0, r / denom, 0.0)
    return float(np.clip(R.max(), -1.0, 1.0))


@functools.lru_cache(maxsize=8)
def _grid(fmin, fmax, steps, ceiling):
    octaves = np.log2(fmax / fmin)
    cand = fmin * 2 ** (np.arange(int(np.ceil(octaves * steps)) + 1) / steps)
    cand = cand[cand <= fmax * (1 + 1e-9)]
    nh = int(np.ceil(ceiling / fmin)) + 1
    n = np.arange(1, nh + 1)
    harm = cand[:, None] * n[None, :]
    sub = cand[:, None] * (n[None, :] - 0.5)
    return cand, harm, sub


def _amplitude_spectrum(frame, fs, nfft):
    x = np.asarray(frame, dtype=float)
    x = (x - x.mean()) * np.hanning(len(x))
    spec = np.abs(np.fft.rfft(x, nfft))
    freqs = np.arange(len(spec)) * fs / nfft
    return freqs, spec


def _sum_at(freqs, spec, points, ceiling):
    vals = np.interp(points, freqs, spec)
    return np.where(points <= ceiling, vals, 0.0).sum(axis=-1)


def shr_curves(frame, fs=ANALYSIS_RATE, fmin=F0_MIN_HZ, fmax=F0_MAX_HZ,
               ceiling=CEILING_HZ, nfft=NFFT, steps=GRID_STEPS_PER_OCTAVE):
    """Harmonic and subharmonic amplitude sums on a log-spaced F0 grid.

    For candidate F: ``H(F) = sum A(nF)`` and ``S(F) = sum A((n - 1/2)F)``
    over multiples below ``ceiling``.
    """
    freqs, spec = _amplitude_spectrum(frame, fs, nfft)
    cand, harm, sub = _grid(float(fmin), float(fmax), steps, float(ceiling))
    H = _sum_at(freqs, spec, harm, ceiling)
    S = _sum_at(freqs, spec, sub, ceiling)
    return cand, H, S, (freqs, spec)


def _refine(cand, da, i):
    if 0 < i < len(da) - 1:
        y0, y1, y2 = da[i - 1], da[i], da[i + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            step = np.log2(cand[i + 1] / cand[i])
            return float(cand[i] * 2 ** (off * step))
    return float(cand[i])


def estimate_f0_shr(frame: np.ndarray, fs: int = ANALYSIS_RATE,
                    voicing_threshold: float = VOICING_THRESHOLD,
                    shr_threshold: float = SHR_THRESHOLD,
                    fmin: float = F0_MIN_HZ, fmax: float = F0_MAX_HZ) -> float:
    """F0 in Hz by the subharmonic-to-harmonic ratio method, 0 when unvoiced.

    The candidate maximizing ``H - S`` is taken first. Because every integer
    fraction of the true F0 scores about as well, the estimate then climbs
    to the peak near twice (or three times) the candidate whenever that
    higher candidate has a subharmonic-to-harmonic ratio below
    ``shr_threshold``, i.e. when little energy sits between its harmonics.
    """
    x = np.asarray(frame, dtype=float)
    if not np.any(x):
        return 0.0
    if periodicity(x) < voicing_threshold:
        return 0.0
    cand, H, S, spectrum = shr_curves(x, fs, fmin, fmax)
    da = H - S
    i = int(np.argmax(da))
    if da[i] <= 0:
        return 0.0
    while True:
        moved = False
        for mult in (2, 3):
            target = cand[i] * mult
            if target > fmax * OCTAVE_SEARCH:
                continue
            lo = np.searchsorted(cand, target / OCTAVE_SEARCH)
            hi = np.searchsorted(cand, target * OCTAVE_SEARCH, side="right")
            if lo >= hi:
                continue
            j = lo + int(np.argmax(da[lo:hi]))
            if da[j] <= 0 or H[j] <= 0:
                continue
            if _between_ratio(spectrum, cand[j], mult) < shr_threshold:
                i, moved = j, True
                break
        if not moved:
            break
    return _refine(cand, da, i)


def _between_ratio(spectrum, f, mult, ceiling=CEILING_HZ):
    # amplitude at the fractions (n - k/mult)F relative to the harmonics nF
    freqs, spec = spectrum
    n = np.arange(1, int(np.ceil(ceiling / f)) + 2)
    h = _sum_at(freqs, spec, f * n, ceiling)
    s = np.mean([_sum_at(freqs, spec, f * (n - k / mult), ceiling) for k in range(1, mult)])
    return float(s / h) if h > 0 else np.inf


def subharmonic_to_harmonic_ratio(frame, f0, fs=ANALYSIS_RATE):
    """SHR of a frame at a given F0: sum A((n-1/2)F0) / sum A(nF0)."""
    spectrum = _amplitude_spectrum(frame, fs, NFFT)
    return _between_ratio(spectrum, float(f0), 2)
