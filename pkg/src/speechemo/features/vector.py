"""Per-token frame matrices and the fixed-order feature vector.

Layout for ``n`` frames (12 by default):

* FB block, ``16 * n`` values: index ``(frame - 1) * 16 + band``
* F block, ``4 * n`` values: index ``(frame - 1) * 4 + k`` for F0, F1, F2, F3
* VQ block, 3 values: mean periodicity, mean jitter, mean shimmer

``ALL`` is FB, F and VQ concatenated (243 values for 12 frames). Variable
names are ``v001``... numbered by position in ``ALL``, so a variable keeps its
name whichever group it appears in.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..audio import FRAME_LEN, HOP_LEN, TokenWindow
from . import gammatone, lpc, pitch, voicequality

ORDERING_VERSION = "1"
N_BANDS = gammatone.N_BANDS
FREQ_NAMES = ("F0", "F1", "F2", "F3")
VQ_NAMES = ("mean_periodicity", "mean_jitter", "mean_shimmer")
DEFAULT_FRAMES = 12


class Group(str, enum.Enum):
    FB = "FB"
    F = "F"
    VQ = "VQ"
    ALL = "ALL"


GROUP_NAMES = tuple(g.value for g in Group)


@dataclass(frozen=True)
class FrameFeatures:
    lfpc: np.ndarray
    f0_hz: float
    f1_hz: float
    f2_hz: float
    f3_hz: float
    periodicity: float
    peak_amp: float


@dataclass(frozen=True)
class FrameMatrix:
    token_id: str
    frames: tuple[FrameFeatures, ...]
    mean_periodicity: float
    mean_jitter: float
    mean_shimmer: float

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def compute_frame_matrix(window: TokenWindow, bank: gammatone.GammatoneBank | None = None,
                         voicing_threshold: float = pitch.VOICING_THRESHOLD) -> FrameMatrix:
    """Run every per-frame extractor over a token window."""
    bank = bank or _default_bank()
    x = np.asarray(window.samples, dtype=float)
    bands = gammatone.lfpc_frames(x, bank)
    nfr = bands.shape[0]
    frames = []
    for n in range(nfr):
        seg = x[n * HOP_LEN:n * HOP_LEN + FRAME_LEN]
        f1, f2, f3 = lpc.lpc_formants(seg)
        frames.append(FrameFeatures(
            lfpc=bands[n],
            f0_hz=pitch.estimate_f0_shr(seg, voicing_threshold=voicing_threshold),
            f1_hz=f1, f2_hz=f2, f3_hz=f3,
            periodicity=pitch.periodicity(seg),
            peak_amp=voicequality.peak_amplitude(seg),
        ))
    _, mj = voicequality.jitter([f.f0_hz for f in frames])
    _, ms = voicequality.shimmer([f.peak_amp for f in frames])
    return FrameMatrix(
        token_id=window.token_id,
        frames=tuple(frames),
        mean_periodicity=float(np.mean([f.periodicity for f in frames])),
        mean_jitter=mj,
        mean_shimmer=ms,
    )


_BANK = None


def _default_bank():
    global _BANK
    if _BANK is None:
        _BANK = gammatone.build_gammatone_bank()
    return _BANK


def block_slices(n_frames: int = DEFAULT_FRAMES) -> dict[str, slice]:
    fb = N_BANDS * n_frames
    f = len(FREQ_NAMES) * n_frames
    return {
        "FB": slice(0, fb),
        "F": slice(fb, fb + f),
        "VQ": slice(fb + f, fb + f + len(VQ_NAMES)),
        "ALL": slice(0, fb + f + len(VQ_NAMES)),
    }


def group_size(group, n_frames: int = DEFAULT_FRAMES) -> int:
    s = block_slices(n_frames)[Group(group).value]
    return s.stop - s.start


def variable_names(group=Group.ALL, n_frames: int = DEFAULT_FRAMES) -> list[str]:
    s = block_slices(n_frames)[Group(group).value]
    return [f"v{i + 1:03d}" for i in range(s.start, s.stop)]


def describe_variable(index: int, n_frames: int = DEFAULT_FRAMES) -> tuple[str, int | None, str]:
    """Map a 0-based ``ALL`` index to ``(block, frame, feature)``; frame is 1-based."""
    sl = block_slices(n_frames)
    if not 0 <= index < sl["ALL"].stop:
        raise IndexError(index)
    if index < sl["FB"].stop:
        frame, band = divmod(index, N_BANDS)
        return "FB", frame + 1, f"band{band + 1:02d}"
    if index < sl["F"].stop:
        frame, k = divmod(index - sl["F"].start, len(FREQ_NAMES))
        return "F", frame + 1, FREQ_NAMES[k]
    return "VQ", None, VQ_NAMES[index - sl["VQ"].start]


def variable_index(block: str, frame: int | None, feature: str, n_frames: int = DEFAULT_FRAMES) -> int:
    """Inverse of :func:`describe_variable`."""
    sl = block_slices(n_frames)
    if block == "FB":
        band = int(feature.removeprefix("band")) - 1
        if not (1 <= frame <= n_frames and 0 <= band < N_BANDS):
            raise IndexError((block, frame, feature))
        return (frame - 1) * N_BANDS + band
    if block == "F":
        if not 1 <= frame <= n_frames:
            raise IndexError((block, frame, feature))
        return sl["F"].start + (frame - 1) * len(FREQ_NAMES) + FREQ_NAMES.index(feature)
    if block == "VQ":
        return sl["VQ"].start + VQ_NAMES.index(feature)
    raise KeyError(block)


def assemble_vector(fm: FrameMatrix, group=Group.ALL) -> np.ndarray:
    fb = np.concatenate([np.asarray(f.lfpc, dtype=float) for f in fm.frames])
    freq = np.array([[f.f0_hz, f.f1_hz, f.f2_hz, f.f3_hz] for f in fm.frames], dtype=float).ravel()
    vq = np.array([fm.mean_periodicity, fm.mean_jitter, fm.mean_shimmer], dtype=float)
    full = np.concatenate([fb, freq, vq])
    return full[block_slices(fm.n_frames)[Group(group).value]]
