"""Transcripts, emotion codes and emotion-coded word tokens."""

from __future__ import annotations

import bisect
import csv
import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


class ParseError(CorpusError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ValidationError(CorpusError):
    pass


class Emotion(str, enum.Enum):
    JOY = "Joy"
    SADNESS = "Sadness"
    TENSION = "Tension"
    ANGER = "Anger"
    NEUTRAL = "Neutral"

    @classmethod
    def parse(cls, value: str) -> "Emotion":
        for e in cls:
            if e.value.lower() == value.strip().lower():
                return e
        raise ValueError(f"unknown emotion {value!r}")


class Intensity(str, enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    UNSPECIFIED = "Unspecified"

    @classmethod
    def parse(cls, value: str | None) -> "Intensity":
        if value is None or not value.strip():
            return cls.UNSPECIFIED
        for i in cls:
            if i.value.lower() == value.strip().lower():
                return i
        raise ValueError(f"unknown intensity {value!r}")


# Canonical label order; used for tie-breaking and report layout.
EMOTION_ORDER: tuple[str, ...] = tuple(e.value for e in Emotion)

TRANSCRIPT_HEADER = ("speaker_id", "session_id", "word", "onset_ms")
CODES_HEADER = ("speaker_id", "session_id", "t0_ms", "t1_ms", "emotion", "intensity")
TOKEN_HEADER = (
    "token_id", "speaker_id", "session_id", "word",
    "onset_ms", "duration_ms", "emotion", "intensity",
)

NO_DURATION = -1.0


@dataclass(frozen=True)
class WordOnset:
    speaker_id: str
    session_id: str
    word: str
    onset_ms: float


@dataclass(frozen=True)
class EmotionInterval:
    speaker_id: str
    session_id: str
    t0_ms: float
    t1_ms: float
    emotion: Emotion
    intensity: Intensity = Intensity.UNSPECIFIED

    def contains(self, t_ms: float) -> bool:
        # half-open [t0, t1)
        return self.t0_ms <= t_ms < self.t1_ms


@dataclass(frozen=True)
class EmotionToken:
    token_id: str
    speaker_id: str
    session_id: str
    word: str
    onset_ms: float
    duration_ms: float
    emotion: Emotion
    intensity: Intensity = Intensity.UNSPECIFIED
    coded: bool = True  # False when Neutral was assigned by default


def _read_rows(path, required: Sequence[str], optional: Sequence[str] = ()):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(path, 1, f"missing columns {missing}")
        index = {c: header.index(c) for c in (*required, *optional) if c in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, {c: row[i].strip() for c, i in index.items()}


def _parse_ms(path, lineno, field, text) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, lineno, f"{field} is not a number: {text!r}") from None
    if not math.isfinite(value) or value < 0:
        raise ParseError(path, lineno, f"{field} must be a non-negative finite number")
    return value


def parse_transcript(path) -> list[WordOnset]:
    """Read a word-onset transcript CSV.

    Onsets must be strictly increasing per (session, speaker), in file order.
    """
    words = []
    last: dict[tuple[str, str], tuple[float, int]] = {}
    for lineno, row in _read_rows(path, TRANSCRIPT_HEADER):
        if not row["word"]:
            raise ParseError(path, lineno, "empty word")
        if not row["speaker_id"] or not row["session_id"]:
            raise ParseError(path, lineno, "empty speaker_id or session_id")
        onset = _parse_ms(path, lineno, "onset_ms", row["onset_ms"])
        key = (row["session_id"], row["speaker_id"])
        if key in last and onset <= last[key][0]:
            raise ValidationError(
                f"{path}:{lineno}: onset {onset} not after {last[key][0]} "
                f"(line {last[key][1]}) for speaker {key[1]} in session {key[0]}"
            )
        last[key] = (onset, lineno)
        words.append(WordOnset(row["speaker_id"], row["session_id"], row["word"], onset))
    return words


def validate_intervals(codes: Iterable[EmotionInterval]) -> None:
    groups: dict[tuple[str, str], list[EmotionInterval]] = defaultdict(list)
    for c in codes:
        if not c.t0_ms < c.t1_ms:
            raise ValidationError(f"interval [{c.t0_ms}, {c.t1_ms}) is empty or reversed")
        groups[(c.session_id, c.speaker_id)].append(c)
    for (session, speaker), items in groups.items():
        items.sort(key=lambda c: c.t0_ms)
        for a, b in zip(items, items[1:]):
            if b.t0_ms < a.t1_ms:
                raise ValidationError(
                    f"overlapping emotion intervals for speaker {speaker} in session "
                    f"{session}: [{a.t0_ms}, {a.t1_ms}) {a.emotion.value} and "
                    f"[{b.t0_ms}, {b.t1_ms}) {b.emotion.value}"
                )


def parse_emotion_codes(path) -> list[EmotionInterval]:
    """Read an emotion-coding CSV; the intensity column is optional."""
    codes = []
    for lineno, row in _read_rows(path, CODES_HEADER[:5], optional=("intensity",)):
        t0 = _parse_ms(path, lineno, "t0_ms", row["t0_ms"])
        t1 = _parse_ms(path, lineno, "t1_ms", row["t1_ms"])
        try:
            emotion = Emotion.parse(row["emotion"])
            intensity = Intensity.parse(row.get("intensity"))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if not t0 < t1:
            raise ParseError(path, lineno, f"t0_ms ({t0}) must be below t1_ms ({t1})")
        codes.append(EmotionInterval(row["speaker_id"], row["session_id"], t0, t1, emotion, intensity))
    validate_intervals(codes)
    return codes


def assign_emotions(
    words: Sequence[WordOnset], codes: Sequence[EmotionInterval]
) -> list[EmotionToken]:
    """Label every word with the emotion of the interval holding its onset.

    Intervals are half-open, so an onset sitting exactly on one interval's end
    and the next one's start goes to the later interval. Words outside every
    interval become Neutral with ``coded=False``. Durations run to the next
    onset of the same speaker in the same session; the last word gets -1.
    """
    validate_intervals(codes)
    by_key: dict[tuple[str, str], list[EmotionInterval]] = defaultdict(list)
    for c in codes:
        by_key[(c.session_id, c.speaker_id)].append(c)
    for items in by_key.values():
        items.sort(key=lambda c: (c.t0_ms, c.t1_ms))
    starts = {k: [c.t0_ms for c in v] for k, v in by_key.items()}

    seq: dict[tuple[str, str], list[int]] = defaultdict(list)
    for i, w in enumerate(words):
        seq[(w.session_id, w.speaker_id)].append(i)

    width = max(6, len(str(max((len(v) for v in seq.values()), default=0))))
    tokens: list[EmotionToken | None] = [None] * len(words)
    for key, idx in seq.items():
        idx = sorted(idx, key=lambda i: words[i].onset_ms)
        intervals = by_key.get(key, [])
        for ordinal, i in enumerate(idx):
            w = words[i]
            if ordinal + 1 < len(idx):
                duration = words[idx[ordinal + 1]].onset_ms - w.onset_ms
            else:
                duration = NO_DURATION
            hit = _find_interval(intervals, starts.get(key, []), w.onset_ms)
            if hit is None:
                emotion, intensity, coded = Emotion.NEUTRAL, Intensity.UNSPECIFIED, False
            else:
                emotion, intensity, coded = hit.emotion, hit.intensity, True
            tokens[i] = EmotionToken(
                token_id=f"{w.session_id}:{w.speaker_id}:{ordinal + 1:0{width}d}",
                speaker_id=w.speaker_id,
                session_id=w.session_id,
                word=w.word,
                onset_ms=w.onset_ms,
                duration_ms=duration,
                emotion=emotion,
                intensity=intensity,
                coded=coded,
            )
    return tokens  # type: ignore[return-value]


def _find_interval(intervals, starts, t):
    pos = bisect.bisect_right(starts, t) - 1
    if pos >= 0 and intervals[pos].contains(t):
        return intervals[pos]
    return None


def write_tokens(tokens: Sequence[EmotionToken], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TOKEN_HEADER)
        for t in tokens:
            writer.writerow([
                t.token_id, t.speaker_id, t.session_id, t.word,
                repr(float(t.onset_ms)), repr(float(t.duration_ms)),
                t.emotion.value, t.intensity.value,
            ])


def read_tokens(path) -> list[EmotionToken]:
    tokens = []
    for lineno, row in _read_rows(path, TOKEN_HEADER):
        try:
            tokens.append(EmotionToken(
                token_id=row["token_id"],
                speaker_id=row["speaker_id"],
                session_id=row["session_id"],
                word=row["word"],
                onset_ms=float(row["onset_ms"]),
                duration_ms=float(row["duration_ms"]),
                emotion=Emotion.parse(row["emotion"]),
                intensity=Intensity.parse(row["intensity"]),
            ))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return tokens


@dataclass
class TokenStats:
    bin_ms: int
    bin_edges: list[float]
    histogram: list[int]
    counts: dict[str, dict[str, int]]  # speaker -> emotion -> count
    total: int
    with_duration: int
    fraction_within_240: float

    def emotion_totals(self) -> dict[str, int]:
        out: Counter = Counter()
        for per in self.counts.values():
            out.update(per)
        return {e: out.get(e, 0) for e in EMOTION_ORDER}


def token_stats(tokens: Sequence[EmotionToken], bin_ms: int) -> TokenStats:
    """Duration histogram, per-speaker emotion counts and the <=240 ms share."""
    if not isinstance(bin_ms, int) or bin_ms <= 0:
        raise ValueError(f"bin_ms must be a positive integer, got {bin_ms!r}")
    if not tokens:
        raise ValueError("no tokens")
    durations = [t.duration_ms for t in tokens if t.duration_ms >= 0]
    nbins = int(max(durations) // bin_ms) + 1 if durations else 0
    hist = [0] * nbins
    for d in durations:
        hist[int(d // bin_ms)] += 1
    counts: dict[str, dict[str, int]] = {}
    for t in tokens:
        per = counts.setdefault(t.speaker_id, {e: 0 for e in EMOTION_ORDER})
        per[t.emotion.value] += 1
    within = sum(1 for d in durations if d <= 240.0)
    return TokenStats(
        bin_ms=bin_ms,
        bin_edges=[float(k * bin_ms) for k in range(nbins + 1)],
        histogram=hist,
        counts=counts,
        total=len(tokens),
        with_duration=len(durations),
        fraction_within_240=within / len(durations) if durations else 0.0,
    )
