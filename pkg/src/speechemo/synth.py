"""Synthetic voiced signals and labeled corpora with known ground truth.

Voices are band-limited impulse trains at jittered pitch periods with
per-pulse amplitude shimmer, passed through a cascade of two-pole formant
resonators, plus optional white noise at a given SNR.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import ANALYSIS_RATE, Waveform, write_wav
from .corpus import CODES_HEADER, TRANSCRIPT_HEADER, Emotion, Intensity

PULSE_HALF_WIDTH = 16


@dataclass
class VoiceSpec:
    f0_hz: float = 120.0
    f0_jitter_frac: float = 0.0
    amp: float = 0.3
    amp_shimmer_frac: float = 0.0
    formants: list = field(default_factory=lambda: [(700.0, 80.0), (1200.0, 90.0), (2600.0, 120.0)])
    noise_snr_db: float | None = None
    duration_ms: float = 300.0
    seed: int = 0

    def validate(self):
        if not 66.0 <= self.f0_hz <= 400.0:
            raise ValueError(f"f0_hz {self.f0_hz} outside [66, 400]")
        for name in ("f0_jitter_frac", "amp_shimmer_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.2:
                raise ValueError(f"{name} {v} outside [0, 0.2]")
        if len(self.formants) > 3:
            raise ValueError("at most three formants")
        if self.duration_ms <= 0 or self.amp < 0:
            raise ValueError("duration and amplitude must be positive")


def _klatt_resonator(x, freq, bw, fs):
    c = -np.exp(-2 * np.pi * bw / fs)
    b = 2 * np.exp(-np.pi * bw / fs) * np.cos(2 * np.pi * freq / fs)
    a = 1.0 - b - c
    return signal.lfilter([a], [1.0, -b, -c], x)


def _pulse_train(times, amps, n):
    """Band-limited unit pulses at fractional sample positions."""
    x = np.zeros(n)
    k = np.arange(-PULSE_HALF_WIDTH, PULSE_HALF_WIDTH + 1)
    for t, a in zip(times, amps):
        base = int(np.floor(t))
        idx = base + k
        d = idx - t
        kern = np.sinc(d) * (0.5 + 0.5 * np.cos(np.pi * d / (PULSE_HALF_WIDTH + 1)))
        ok = (idx >= 0) & (idx < n)
        x[idx[ok]] += a * kern[ok]
    return x


def gen_voiced(spec: VoiceSpec, fs: int = ANALYSIS_RATE) -> Waveform:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_ms * fs / 1000))
    lead = int(0.03 * fs)  # let the resonators settle before the kept part
    total = n + lead
    period = fs / spec.f0_hz
    times, amps = [], []
    t = float(rng.uniform(0, period))
    while t < total + PULSE_HALF_WIDTH:
        times.append(t)
        amps.append(max(0.0, 1.0 + spec.amp_shimmer_frac * float(np.clip(rng.standard_normal(), -3, 3))))
        t += period * (1.0 + spec.f0_jitter_frac * float(np.clip(rng.standard_normal(), -3, 3)))
    x = _pulse_train(times, amps, total)
    for freq, bw in spec.formants:
        x = _klatt_resonator(x, float(freq), float(bw), fs)
    x = x[lead:]
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x * (spec.amp / peak)
    if spec.noise_snr_db is not None:
        rms = np.sqrt(np.mean(x ** 2))
        x = x + rng.standard_normal(n) * rms / 10 ** (spec.noise_snr_db / 20)
    return Waveform(x, fs)


# --- corpora -----------------------------------------------------------------

def _draw(value, rng):
    """A number, or uniform on [lo, hi] when given a two-element list."""
    if isinstance(value, (list, tuple)):
        lo, hi = value
        return float(rng.uniform(lo, hi))
    return float(value)


@dataclass
class ClassSpec:
    label: str
    count: int
    voice: dict  # VoiceSpec fields; scalars or [lo, hi] ranges, formants as [[freq, bw], ...]


@dataclass
class SessionSpec:
    session_id: str
    gain_db: float = 0.0
    gain_std_mult: float = 1.0


@dataclass
class CorpusSpec:
    classes: list
    sessions: list
    speaker_id: str = "F"
    seed: int = 0
    token_ms: float = 300.0
    gain_std_db: float = 1.0
    sample_rate: int = ANALYSIS_RATE
    lead_ms: float = 100.0
    tail_ms: float = 400.0

    def validate(self):
        if not self.classes:
            raise ValueError("corpus needs at least one class")
        for c in self.classes:
            if c.count < 1:
                raise ValueError(f"class {c.label}: count must be >= 1")
            Emotion.parse(c.label)
        if not self.sessions:
            raise ValueError("corpus needs at least one session")
        for s in self.sessions:
            if not (np.isfinite(s.gain_db) and np.isfinite(s.gain_std_mult)):
                raise ValueError(f"session {s.session_id}: non-finite perturbation")
        if self.sample_rate not in (16000, 44100):
            raise ValueError("sample_rate must be 16000 or 44100")

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        d = dict(d)
        classes = [ClassSpec(c["label"], int(c["count"]), dict(c.get("voice", {}))) for c in d.pop("classes")]
        if "sessions" in d:
            sessions = [SessionSpec(str(s["id"]), float(s.get("gain_db", 0.0)), float(s.get("gain_std_mult", 1.0)))
                        for s in d.pop("sessions")]
        else:
            k = int(d.pop("n_sessions", 1))
            offs = d.pop("session_offsets_db", [0.0] * k)
            mults = d.pop("session_gain_std_mult", [1.0] * k)
            sessions = [SessionSpec(f"s{i + 1}", float(offs[i]), float(mults[i])) for i in range(k)]
        return cls(classes=classes, sessions=sessions, **d)

    @classmethod
    def from_json(cls, path) -> "CorpusSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _voice_for(cls_spec: ClassSpec, rng, seed) -> VoiceSpec:
    v = cls_spec.voice
    formants = [(_draw(f, rng), _draw(bw, rng)) for f, bw in v.get("formants", [(700, 80), (1200, 90), (2600, 120)])]
    snr = v.get("noise_snr_db")
    return VoiceSpec(
        f0_hz=_draw(v.get("f0_hz", 120.0), rng),
        f0_jitter_frac=_draw(v.get("f0_jitter_frac", 0.0), rng),
        amp=_draw(v.get("amp", 0.3), rng),
        amp_shimmer_frac=_draw(v.get("amp_shimmer_frac", 0.0), rng),
        formants=formants,
        noise_snr_db=None if snr is None else _draw(snr, rng),
        seed=seed,
    )


@dataclass
class CorpusFiles:
    audio: list
    transcript: Path
    codes: Path


def gen_corpus(cs: CorpusSpec, out_dir) -> CorpusFiles:
    """Write one WAV per session plus matching transcript and emotion codes.

    Words start every ``token_ms``. Runs of consecutive tokens with the same
    non-Neutral label become one coded interval; Neutral tokens are left
    uncoded so they exercise the Neutral default.
    """
    cs.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cs.seed)
    labels = np.concatenate([[c.label] * c.count for c in cs.classes])
    spec_of = {c.label: c for c in cs.classes}
    order = rng.permutation(len(labels))
    labels = labels[order]
    session_of = np.arange(len(labels)) % len(cs.sessions)
    rng.shuffle(session_of)

    fs = ANALYSIS_RATE
    slot = int(round(cs.token_ms * fs / 1000))
    lead = int(round(cs.lead_ms * fs / 1000))
    tail = int(round(cs.tail_ms * fs / 1000))
    words, codes, wavs = [], [], []
    token_seed = np.random.SeedSequence(cs.seed).spawn(len(labels))
    for si, sess in enumerate(cs.sessions):
        idx = np.flatnonzero(session_of == si)
        audio = np.zeros(lead + slot * len(idx) + tail)
        run = None
        for k, ti in enumerate(idx):
            label = str(labels[ti])
            trng = np.random.default_rng(token_seed[ti])
            voice = _voice_for(spec_of[label], trng, int(trng.integers(2 ** 31)))
            voice.duration_ms = cs.token_ms
            x = gen_voiced(voice, fs).samples
            gain_db = sess.gain_db + trng.normal(0.0, cs.gain_std_db * sess.gain_std_mult)
            start = lead + k * slot
            audio[start:start + len(x)] += x * 10 ** (gain_db / 20)
            onset = 1000.0 * start / fs
            words.append((cs.speaker_id, sess.session_id, f"w{ti + 1}", onset))
            if run is not None and run[0] == label:
                run[2] = onset + cs.token_ms
            else:
                if run is not None:
                    codes.append(run)
                run = [label, onset, onset + cs.token_ms, sess.session_id,
                       ("Low", "Medium", "High")[int(trng.integers(3))]]
        if run is not None:
            codes.append(run)
        path = out / f"{sess.session_id}.wav"
        if cs.sample_rate == 44100:
            audio = signal.resample_poly(audio, 441, 160)
        write_wav(path, audio, cs.sample_rate)
        wavs.append(path)

    transcript = out / "transcript.csv"
    with transcript.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSCRIPT_HEADER)
        for spk, sess, word, onset in words:
            w.writerow([spk, sess, word, repr(onset)])
    code_path = out / "codes.csv"
    with code_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CODES_HEADER)
        for label, t0, t1, sess, intensity in codes:
            if Emotion.parse(label) is Emotion.NEUTRAL:
                continue
            w.writerow([cs.speaker_id, sess, repr(t0), repr(t1), label, Intensity.parse(intensity).value])
    return CorpusFiles(wavs, transcript, code_path)
