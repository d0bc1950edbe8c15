"""WAV decoding, 16 kHz resampling and per-token analysis windows."""

from __future__ import annotations

import functools
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

ANALYSIS_RATE = 16000
SUPPORTED_INPUT_RATES = (44100, 16000)

FRAME_MS = 40
HOP_MS = 20
FRAME_LEN = FRAME_MS * ANALYSIS_RATE // 1000  # 640
HOP_LEN = HOP_MS * ANALYSIS_RATE // 1000  # 320

DEFAULT_WINDOW_MS = 240
DEFAULT_PAD_THRESHOLD = 0.5


class AudioFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int
    bit_depth: int | None = None
    channel: int | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class TokenWindow:
    token_id: str
    samples: np.ndarray
    padded_samples: int = 0

    @property
    def padded_fraction(self) -> float:
        return self.padded_samples / len(self.samples)


@dataclass(frozen=True)
class Frame:
    index: int  # 1-based
    samples: np.ndarray = field(repr=False)

    @property
    def start_ms(self) -> float:
        return HOP_MS * (self.index - 1)


def decode_wav(path, channel: int | None = None) -> Waveform:
    """Read 16- or 24-bit PCM WAV into floats in [-1, 1).

    Multi-channel files need an explicit ``channel``; picking one silently
    would hide which microphone was analysed.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            nch = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: unsupported WAV ({exc})") from None
    except EOFError:
        raise AudioFormatError(f"{path}: truncated WAV header") from None

    if width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        data = v.astype(np.float64) / float(1 << 23)
    else:
        raise AudioFormatError(f"{path}: {8 * width}-bit PCM is not supported (need 16 or 24)")

    data = data.reshape(-1, nch)
    if nch > 1:
        if channel is None:
            raise AudioFormatError(f"{path}: {nch} channels; pass a channel index")
        if not 0 <= channel < nch:
            raise AudioFormatError(f"{path}: channel {channel} out of range 0..{nch - 1}")
        data = data[:, channel]
    else:
        if channel not in (None, 0):
            raise AudioFormatError(f"{path}: mono file has no channel {channel}")
        data = data[:, 0]
    return Waveform(data, rate, bit_depth=8 * width, channel=channel)


def write_wav(path, samples, sample_rate_hz: int = ANALYSIS_RATE) -> None:
    """Write mono 16-bit PCM, clipping to the representable range."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767 / 32768)
    pcm = np.round(x * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate_hz))
        wf.writeframes(pcm.tobytes())


@functools.lru_cache(maxsize=None)
def _resampling_filter(up: int, down: int, rate_in: int) -> np.ndarray:
    # passband edge 7 kHz, stopband from 8 kHz, 70 dB Kaiser design
    fs_up = rate_in * up
    numtaps, beta = signal.kaiserord(70.0, 1000.0 / (fs_up / 2))
    numtaps |= 1
    h = signal.firwin(numtaps, 7500.0, window=("kaiser", beta), fs=fs_up)
    h.setflags(write=False)
    return h


def resample_16k(w: Waveform) -> Waveform:
    """Convert to 16 kHz with a polyphase windowed-sinc filter."""
    if w.sample_rate_hz == ANALYSIS_RATE:
        return w
    if w.sample_rate_hz not in SUPPORTED_INPUT_RATES:
        raise AudioFormatError(
            f"unsupported sample rate {w.sample_rate_hz} Hz; expected one of {SUPPORTED_INPUT_RATES}"
        )
    g = np.gcd(ANALYSIS_RATE, w.sample_rate_hz)
    up, down = ANALYSIS_RATE // g, w.sample_rate_hz // g
    h = _resampling_filter(up, down, w.sample_rate_hz)
    y = signal.resample_poly(w.samples, up, down, window=np.array(h))
    return Waveform(y, ANALYSIS_RATE, bit_depth=w.bit_depth, channel=w.channel)


def read_length(window_ms: int = DEFAULT_WINDOW_MS) -> int:
    """Samples read per token: the nominal window plus one extra hop."""
    if window_ms <= 0 or window_ms % HOP_MS:
        raise ValueError(f"window_ms must be a positive multiple of {HOP_MS}")
    return (window_ms + HOP_MS) * ANALYSIS_RATE // 1000


def n_frames(window_ms: int = DEFAULT_WINDOW_MS) -> int:
    return window_ms // HOP_MS


def extract_window(
    w: Waveform, onset_ms: float, token_id: str = "", window_ms: int = DEFAULT_WINDOW_MS
) -> TokenWindow:
    """Cut the read window starting at the onset sample, zero-padding the tail."""
    if w.sample_rate_hz != ANALYSIS_RATE:
        raise AudioFormatError("extract_window expects 16 kHz audio; resample first")
    length = read_length(window_ms)
    start = int(round(onset_ms * ANALYSIS_RATE / 1000))
    total = len(w.samples)
    if onset_ms < 0 or start >= total:
        raise ValueError(
            f"onset {onset_ms} ms is outside the recording ({w.duration_ms:.1f} ms)"
        )
    chunk = w.samples[start:start + length]
    pad = length - len(chunk)
    if pad:
        chunk = np.concatenate([chunk, np.zeros(pad)])
    else:
        chunk = chunk.copy()
    chunk.setflags(write=False)
    return TokenWindow(token_id, chunk, pad)


def frame_signal(tw: TokenWindow) -> list[Frame]:
    """Split a token window into 40 ms frames with a 20 ms hop."""
    x = tw.samples
    count = (len(x) - FRAME_LEN) // HOP_LEN + 1
    return [
        Frame(n + 1, x[n * HOP_LEN:n * HOP_LEN + FRAME_LEN]) for n in range(count)
    ]


def frame_array(samples: np.ndarray) -> np.ndarray:
    """Frames as a (n_frames, 640) read-only view."""
    view = np.lib.stride_tricks.sliding_window_view(samples, FRAME_LEN)[::HOP_LEN]
    return view
