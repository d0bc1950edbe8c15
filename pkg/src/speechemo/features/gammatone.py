"""Fourth-order gammatone filter bank and log frequency power coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ..audio import ANALYSIS_RATE, FRAME_LEN, HOP_LEN

# Glasberg & Moore (1990)
EAR_Q = 9.26449
MIN_BW = 24.7
ORDER = 4

N_BANDS = 16
LOW_HZ = 50.0
HIGH_HZ = 8000.0
LFPC_EPS = 1e-12
IR_SECONDS = 0.128


def erb(cf):
    """Equivalent rectangular bandwidth in Hz at centre frequency ``cf``."""
    return np.asarray(cf, dtype=float) / EAR_Q + MIN_BW


def erb_rate(f):
    """ERB-number (Cams) of a frequency; uniform steps on this scale are ERB steps."""
    return EAR_Q * np.log1p(np.asarray(f, dtype=float) / (EAR_Q * MIN_BW))


def erb_space(low=LOW_HZ, high=HIGH_HZ, n=N_BANDS):
    """Centre frequencies spaced uniformly in ERB-rate, ascending.

    Same placement as the Auditory Toolbox ``ERBSpace``: the lowest channel
    sits on ``low`` and the highest one ERB step below ``high``.
    """
    c = EAR_Q * MIN_BW
    k = np.arange(n, 0, -1)
    return -c + np.exp(k * (np.log(low + c) - np.log(high + c)) / n) * (high + c)


@dataclass(frozen=True)
class GammatoneBank:
    center_freqs_hz: np.ndarray
    bandwidths_hz: np.ndarray
    impulse_responses: np.ndarray  # (bands, taps), unit gain at the centre
    sample_rate: int = ANALYSIS_RATE

    def __len__(self):
        return len(self.center_freqs_hz)

    def filter(self, x: np.ndarray) -> np.ndarray:
        """Causal filtering of ``x`` by every band, output shape (bands, len(x))."""
        x = np.asarray(x, dtype=float)
        y = fftconvolve(x[None, :], self.impulse_responses, axes=1)
        return y[:, :len(x)]


def gammatone_ir(cf, fs=ANALYSIS_RATE, seconds=IR_SECONDS, order=ORDER):
    t = np.arange(int(round(seconds * fs))) / fs
    b = 1.019 * erb(cf)
    g = t ** (order - 1) * np.exp(-2 * np.pi * b * t) * np.cos(2 * np.pi * cf * t)
    gain = np.abs(np.sum(g * np.exp(-2j * np.pi * cf * t)))
    return g / gain


def build_gammatone_bank(sample_rate: int = ANALYSIS_RATE) -> GammatoneBank:
    if sample_rate != ANALYSIS_RATE:
        raise ValueError(f"gammatone bank is defined for {ANALYSIS_RATE} Hz")
    cfs = erb_space(LOW_HZ, min(HIGH_HZ, sample_rate / 2), N_BANDS)
    irs = np.stack([gammatone_ir(cf, sample_rate) for cf in cfs])
    for arr in (cfs, irs):
        arr.setflags(write=False)
    bw = erb(cfs)
    bw.setflags(write=False)
    return GammatoneBank(cfs, bw, irs, sample_rate)


def lfpc_frames(window: np.ndarray, bank: GammatoneBank, eps: float = LFPC_EPS) -> np.ndarray:
    """LFPC for every frame of a token window, shape (frames, bands).

    The filters run once over the whole window so frame energies come from
    a continuous output rather than from per-frame restarts.
    """
    y = bank.filter(window)
    nfr = (len(window) - FRAME_LEN) // HOP_LEN + 1
    frames = np.lib.stride_tricks.sliding_window_view(y ** 2, FRAME_LEN, axis=1)[:, ::HOP_LEN][:, :nfr]
    energy = frames.mean(axis=2).T  # (frames, bands)
    return 10.0 * np.log10(energy / bank.bandwidths_hz + eps)


def lfpc(frame: np.ndarray, bank: GammatoneBank, eps: float = LFPC_EPS) -> np.ndarray:
    """LFPC of a single 640-sample frame filtered from rest."""
    frame = np.asarray(frame, dtype=float)
    energy = (bank.filter(frame) ** 2).mean(axis=1)
    return 10.0 * np.log10(energy / bank.bandwidths_hz + eps)
