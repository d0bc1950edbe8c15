"""Command-line entry point: one subcommand per pipeline stage.

Stages talk only through files. Every report carries the full run
configuration so it can be regenerated from the same inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import audio, batchadjust, corpus, forest, protocol, synth
from .features import pitch
from .features.extract import extract_features
from .features.vector import GROUP_NAMES, ORDERING_VERSION
from .table import read_table, write_table

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 64

VERSION = "0.1.0"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    window_ms: int | None = None
    group: str | None = None
    trees: int | None = None
    mtry: int | None = None
    seed: int | None = None
    design: str | None = None
    batch_col: str | None = None
    pad_threshold: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _group_arg(value: str) -> str:
    if value.upper() in GROUP_NAMES:
        return value.upper()
    raise argparse.ArgumentTypeError(f"invalid group {value!r}; choose from {', '.join(GROUP_NAMES)}")


def _positive_int(value: str) -> int:
    n = int(value)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="speechemo", description="Speech emotion recognition pipeline.")
    p.add_argument("--version", action="version",
                   version=f"speechemo {VERSION} (feature ordering {ORDERING_VERSION}, "
                           f"forest format {forest.FORMAT_VERSION}, batch model {batchadjust.MODEL_VERSION})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("tokens", help="label word onsets with emotion codes")
    s.add_argument("--transcript", required=True)
    s.add_argument("--codes", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("stats", help="token duration histogram and per-speaker emotion counts")
    s.add_argument("--tokens", required=True)
    s.add_argument("--bin-ms", type=_positive_int, default=20)
    s.add_argument("--out", help="JSON output (stdout if omitted)")

    s = sub.add_parser("extract", help="compute feature vectors for tokens")
    s.add_argument("--tokens", required=True)
    s.add_argument("--audio-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--group", type=_group_arg, default="ALL")
    s.add_argument("--window-ms", type=_positive_int, default=audio.DEFAULT_WINDOW_MS)
    s.add_argument("--pad-threshold", type=float, default=audio.DEFAULT_PAD_THRESHOLD)
    s.add_argument("--voicing-threshold", type=float, default=pitch.VOICING_THRESHOLD)
    s.add_argument("--channel", type=int)
    s.add_argument("--threads", type=_positive_int, default=1)

    s = sub.add_parser("adjust", help="remove per-session batch effects from filter-bank variables")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--batch-col", choices=("session_id", "speaker_id"), default="session_id")
    s.add_argument("--design", choices=("emotion", "none"), default="emotion")
    s.add_argument("--model")
    s.add_argument("--tol", type=float, default=batchadjust.CONV_TOL)
    s.add_argument("--bypass", action="store_true")

    for name, help_ in (("evaluate", "balanced multiclass forest with OOB report"),
                        ("pairwise", "balanced two-class forests for every emotion pair")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--features", required=True)
        s.add_argument("--group", type=_group_arg, default="ALL")
        s.add_argument("--speaker")
        s.add_argument("--trees", type=_positive_int, default=forest.DEFAULT_TREES)
        s.add_argument("--mtry", type=_positive_int)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--threads", type=_positive_int, default=1)
        if name == "evaluate":
            s.add_argument("--report", required=True)
            s.add_argument("--table", help="also write the conditional matrix as TSV")
            s.add_argument("--top-k", type=int, default=20)
            s.add_argument("--no-importance", action="store_true")
        else:
            s.add_argument("--out", required=True)

    s = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    s.add_argument("--spec", required=True, help="corpus description (JSON)")
    s.add_argument("--out-dir", required=True)
    return p


def _cmd_tokens(a) -> None:
    words = corpus.parse_transcript(a.transcript)
    codes = corpus.parse_emotion_codes(a.codes)
    tokens = corpus.assign_emotions(words, codes)
    corpus.write_tokens(tokens, a.out)
    uncoded = sum(1 for t in tokens if not t.coded)
    _write_json(a.out + ".json", {
        "n_tokens": len(tokens),
        "neutral_default": uncoded,
        "neutral_default_ids": [t.token_id for t in tokens if not t.coded],
        "config": RunConfig("tokens", {"transcript": a.transcript, "codes": a.codes}, {"out": a.out}).to_dict(),
    })


def _cmd_stats(a) -> None:
    st = corpus.token_stats(corpus.read_tokens(a.tokens), a.bin_ms)
    d = asdict(st)
    d["emotion_totals"] = st.emotion_totals()
    text = json.dumps(d, indent=2, sort_keys=True) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_extract(a) -> None:
    tokens = corpus.read_tokens(a.tokens)
    table = extract_features(tokens, a.audio_dir, a.group, a.window_ms, a.pad_threshold,
                             a.voicing_threshold, a.channel, a.threads)
    table.meta["config"] = RunConfig("extract", {"tokens": a.tokens, "audio_dir": a.audio_dir},
                                     {"out": a.out}, window_ms=a.window_ms, group=a.group,
                                     pad_threshold=a.pad_threshold).to_dict()
    write_table(table, a.out)


def _cmd_adjust(a) -> None:
    table = read_table(a.features)
    out, model = batchadjust.adjust_table(table, a.batch_col, a.design, bypass=a.bypass, tol=a.tol)
    write_table(out, a.out)
    if a.model:
        if model is None:
            _write_json(a.model, {"version": batchadjust.MODEL_VERSION, "bypass": True})
        else:
            Path(a.model).write_text(model.to_json() + "\n")


def _forest_config(a, importance=True, top_k=0) -> protocol.ForestConfig:
    return protocol.ForestConfig(trees=a.trees, mtry=a.mtry, seed=a.seed, top_k=top_k,
                                 importance=importance, threads=a.threads)


def _echo(a, outputs) -> dict:
    # thread count is left out on purpose: results do not depend on it
    return RunConfig(a.command, {"features": a.features}, outputs, group=a.group,
                     trees=a.trees, mtry=a.mtry, seed=a.seed).to_dict()


def _cmd_evaluate(a) -> None:
    table = read_table(a.features)
    cfg = _forest_config(a, importance=not a.no_importance, top_k=a.top_k)
    echo = _echo(a, {"report": a.report, "table": a.table})
    echo["speaker"] = a.speaker
    rep = protocol.run_multiclass(table, a.group, cfg, speaker=a.speaker, config_echo=echo)
    _write_json(a.report, rep.to_dict())
    if a.table:
        Path(a.table).write_text(protocol.format_conditional_table(rep))


def _cmd_pairwise(a) -> None:
    table = read_table(a.features)
    results = protocol.run_pairwise_grid(table, a.group, _forest_config(a, importance=False), speaker=a.speaker)
    protocol.write_grid(results, a.out)
    echo = _echo(a, {"out": a.out})
    echo["speaker"] = a.speaker
    _write_json(a.out + ".json", {"config": echo})


def _cmd_synth(a) -> None:
    cs = synth.CorpusSpec.from_json(a.spec)
    synth.gen_corpus(cs, a.out_dir)


COMMANDS = {
    "tokens": _cmd_tokens,
    "stats": _cmd_stats,
    "extract": _cmd_extract,
    "adjust": _cmd_adjust,
    "evaluate": _cmd_evaluate,
    "pairwise": _cmd_pairwise,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[a.command](a)
    except (OSError, audio.AudioFormatError) as exc:
        print(f"speechemo {a.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:  # every domain error derives from ValueError
        print(f"speechemo {a.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
