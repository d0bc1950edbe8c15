"""Token list + session audio -> feature table."""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import audio
from ..corpus import EmotionToken
from ..table import FeatureTable
from . import gammatone, pitch
from .vector import ORDERING_VERSION, Group, assemble_vector, compute_frame_matrix, variable_names

log = logging.getLogger(__name__)


def find_audio(audio_dir, session_id: str, speaker_id: str) -> Path:
    """``<session>_<speaker>.wav`` if present, else ``<session>.wav``."""
    audio_dir = Path(audio_dir)
    for name in (f"{session_id}_{speaker_id}.wav", f"{session_id}.wav"):
        p = audio_dir / name
        if p.exists():
            return p
    raise FileNotFoundError(f"no audio for session {session_id!r} speaker {speaker_id!r} in {audio_dir}")


def extract_features(tokens: list[EmotionToken], audio_dir, group=Group.ALL,
                     window_ms: int = audio.DEFAULT_WINDOW_MS,
                     pad_threshold: float = audio.DEFAULT_PAD_THRESHOLD,
                     voicing_threshold: float = pitch.VOICING_THRESHOLD,
                     channel: int | None = None, threads: int = 1) -> FeatureTable:
    """Compute the feature vector of every token.

    Tokens whose read window is more than ``pad_threshold`` zero padding are
    left out and listed under ``excluded`` in the table metadata.
    """
    group = Group(group)
    bank = gammatone.build_gammatone_bank()
    nfr = audio.n_frames(window_ms)
    by_source: dict[Path, list[int]] = defaultdict(list)
    for i, t in enumerate(tokens):
        by_source[find_audio(audio_dir, t.session_id, t.speaker_id)].append(i)

    windows: list[audio.TokenWindow | None] = [None] * len(tokens)
    for path, idx in sorted(by_source.items()):
        wav = audio.resample_16k(audio.decode_wav(path, channel=channel))
        for i in idx:
            t = tokens[i]
            windows[i] = audio.extract_window(wav, t.onset_ms, t.token_id, window_ms)

    keep = [i for i, w in enumerate(windows) if w.padded_fraction <= pad_threshold]
    excluded = [
        {"token_id": tokens[i].token_id, "padded_samples": windows[i].padded_samples}
        for i, w in enumerate(windows) if w.padded_fraction > pad_threshold
    ]
    if excluded:
        log.info("excluded %d tokens with more than %.0f%% padding", len(excluded), 100 * pad_threshold)

    def work(i):
        fm = compute_frame_matrix(windows[i], bank, voicing_threshold)
        return assemble_vector(fm, group)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(work, keep))
    else:
        rows = [work(i) for i in keep]

    names = variable_names(group, nfr)
    values = np.vstack(rows) if rows else np.zeros((0, len(names)))
    meta = {
        "group": group.value,
        "ordering_version": ORDERING_VERSION,
        "window_ms": window_ms,
        "n_frames": nfr,
        "voicing_threshold": voicing_threshold,
        "pad_threshold": pad_threshold,
        "excluded": excluded,
        "adjusted": False,
    }
    return FeatureTable(
        token_ids=[tokens[i].token_id for i in keep],
        session_ids=[tokens[i].session_id for i in keep],
        speaker_ids=[tokens[i].speaker_id for i in keep],
        emotions=[tokens[i].emotion.value for i in keep],
        names=names,
        values=values,
        meta=meta,
    )
