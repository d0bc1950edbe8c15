"""Experiment designs: class gating, balanced bootstrap sizing, reports."""

from __future__ import annotations

import csv
import itertools
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import forest
from .corpus import EMOTION_ORDER
from .features.vector import Group
from .table import FeatureTable

MULTICLASS_MIN = 100
PAIRWISE_MIN = 200
MULTICLASS_CAP = 500
GRID_HEADER = ("emotion_a", "emotion_b", "rate", "skipped", "reason")


class PlanError(ValueError):
    pass


def eighty_percent(n: int) -> int:
    # integer floor of 0.8 n, free of float rounding
    return (4 * int(n)) // 5


def canonical_order(labels) -> list[str]:
    labels = set(labels)
    return [e for e in EMOTION_ORDER if e in labels] + sorted(labels - set(EMOTION_ORDER))


@dataclass
class SamplingPlan:
    mode: str
    sizes: dict[str, int]
    included: list[str]
    dropped: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class Skip:
    classes: tuple[str, str]
    reason: str


def plan_multiclass(class_counts: Mapping[str, int]) -> SamplingPlan:
    """Drop classes under 100 observations; size the rest min(floor(0.8 n), 500)."""
    included, dropped, sizes = [], [], {}
    for c in canonical_order(class_counts):
        n = int(class_counts[c])
        if n < MULTICLASS_MIN:
            dropped.append({"class": c, "reason": f"{n} observations, fewer than {MULTICLASS_MIN}"})
            continue
        included.append(c)
        sizes[c] = min(eighty_percent(n), MULTICLASS_CAP)
    if len(included) < 2:
        raise PlanError(f"only {len(included)} class(es) with at least {MULTICLASS_MIN} observations")
    return SamplingPlan("multiclass", sizes, included, dropped)


def plan_pairwise(n_a: int, n_b: int, a: str = "a", b: str = "b") -> SamplingPlan | Skip:
    """Both classes sized floor(0.8 min(n_a, n_b)); skip when either is under 200."""
    small = [(c, n) for c, n in ((a, n_a), (b, n_b)) if n < PAIRWISE_MIN]
    if small:
        reason = "; ".join(f"{c} has {n} observations, fewer than {PAIRWISE_MIN}" for c, n in small)
        return Skip((a, b), reason)
    size = eighty_percent(min(n_a, n_b))
    return SamplingPlan("pairwise", {a: size, b: size}, [a, b])


@dataclass
class ForestConfig:
    trees: int = forest.DEFAULT_TREES
    mtry: int | None = None
    seed: int = 0
    top_k: int = 20
    importance: bool = True
    threads: int = 1


@dataclass
class EvaluationReport:
    speaker: str | None
    group: str
    classes: list[str]
    dropped: list[dict]
    rate: float
    confusion: np.ndarray
    counts: dict[str, int]
    importance: list[dict]
    seed: int
    config: dict
    n_variables: int = 0
    sizes: dict = field(default_factory=dict)
    oob_unscored: int = 0

    @property
    def conditional(self) -> np.ndarray:
        return conditional_matrix(self.confusion)

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker,
            "group": self.group,
            "classes": list(self.classes),
            "dropped": list(self.dropped),
            "rate": float(self.rate),
            "confusion": np.asarray(self.confusion, dtype=int).tolist(),
            "conditional": self.conditional.tolist(),
            "counts": {c: int(self.counts[c]) for c in self.classes},
            "importance": list(self.importance),
            "seed": self.seed,
            "config": dict(self.config),
            "n_variables": self.n_variables,
            "sizes": dict(self.sizes),
            "oob_unscored": self.oob_unscored,
        }


def conditional_matrix(confusion) -> np.ndarray:
    """Confusion rows (true class) divided by their sums."""
    c = np.asarray(confusion, dtype=float)
    s = c.sum(axis=1, keepdims=True)
    return np.divide(c, s, out=np.zeros_like(c), where=s > 0)


def format_conditional_table(report: EvaluationReport | dict, digits: int = 2) -> str:
    """Tab-separated conditional probability matrix with class counts.

    Rows are the expressed (true) emotion, columns the recognized one.
    """
    d = report.to_dict() if isinstance(report, EvaluationReport) else report
    classes = d["classes"]
    lines = ["\t" + "\t".join(classes) + "\tNo. of Observations"]
    for c, row in zip(classes, d["conditional"]):
        cells = "\t".join(f"{v:.{digits}f}" for v in row)
        lines.append(f"{c}\t{cells}\t{d['counts'][c]}")
    return "\n".join(lines) + "\n"


def format_rate_table(reports) -> str:
    """One row per speaker: rate per feature group, observation count, emotions."""
    by_speaker: dict = {}
    for r in reports:
        d = r.to_dict() if isinstance(r, EvaluationReport) else r
        by_speaker.setdefault(d["speaker"], {})[d["group"]] = d
    groups = [g.value for g in (Group.FB, Group.F, Group.VQ, Group.ALL)]
    lines = ["speaker\t" + "\t".join(groups) + "\tNo. observations\tEmotions"]
    for spk, per in by_speaker.items():
        cells = [f"{100 * per[g]['rate']:.0f}%" if g in per else "-" for g in groups]
        any_d = next(iter(per.values()))
        n = sum(any_d["counts"].values())
        lines.append(f"{spk}\t" + "\t".join(cells) + f"\t{n}\t{', '.join(any_d['classes'])}")
    return "\n".join(lines) + "\n"


def _speaker_rows(table: FeatureTable, speaker):
    speakers = sorted(set(table.speaker_ids))
    if speaker is None:
        if len(speakers) > 1:
            raise PlanError(f"table holds several speakers {speakers}; pick one")
        return table, (speakers[0] if speakers else None)
    mask = np.array([s == speaker for s in table.speaker_ids])
    if not mask.any():
        raise PlanError(f"speaker {speaker!r} not in table")
    return table.take(mask), speaker


def _group_matrix(table: FeatureTable, group):
    names = table.group_names(group)
    return table.columns(names), names


def run_multiclass(table: FeatureTable, group, config: ForestConfig | None = None,
                   speaker: str | None = None, config_echo: dict | None = None) -> EvaluationReport:
    """Balanced forest over the classes that pass the 100-observation gate."""
    config = config or ForestConfig()
    sub, speaker = _speaker_rows(table, speaker)
    X, names = _group_matrix(sub, group)
    counts = Counter(sub.emotions)
    plan = plan_multiclass(counts)
    keep = np.array([e in plan.sizes for e in sub.emotions])
    Xk = X[keep]
    yk = [e for e, k in zip(sub.emotions, keep) if k]
    model = forest.train_forest(
        Xk, yk, n_trees=config.trees, mtry=config.mtry, class_sizes=plan.sizes,
        seed=config.seed, classes=plan.included, threads=config.threads,
    )
    oob = forest.oob_estimate(model, Xk, yk)
    imp = []
    if config.importance and config.top_k > 0:
        res = forest.importance(model, Xk, yk, seed=config.seed)
        imp = [
            {"var": names[i], "score": float(res.scores[i]), "se": float(res.se[i])}
            for i in res.ranking[:config.top_k]
        ]
    return EvaluationReport(
        speaker=speaker,
        group=Group(group).value,
        classes=plan.included,
        dropped=plan.dropped,
        rate=oob.rate,
        confusion=oob.confusion.counts,
        counts={c: int(counts[c]) for c in plan.included},
        importance=imp,
        seed=config.seed,
        config=dict(config_echo or {}),
        n_variables=len(names),
        sizes=plan.sizes,
        oob_unscored=oob.unscored,
    )


@dataclass
class PairResult:
    emotion_a: str
    emotion_b: str
    rate: float | None
    skipped: bool
    reason: str = ""


def run_pairwise_grid(table: FeatureTable, group, config: ForestConfig | None = None,
                      speaker: str | None = None, emotions=EMOTION_ORDER) -> list[PairResult]:
    """OOB rate of a balanced two-class forest for every unordered emotion pair."""
    config = config or ForestConfig()
    sub, speaker = _speaker_rows(table, speaker)
    X, _ = _group_matrix(sub, group)
    counts = Counter(sub.emotions)
    labels = np.array(sub.emotions)
    out = []
    for a, b in itertools.combinations(list(emotions), 2):
        plan = plan_pairwise(counts.get(a, 0), counts.get(b, 0), a, b)
        if isinstance(plan, Skip):
            out.append(PairResult(a, b, None, True, plan.reason))
            continue
        keep = (labels == a) | (labels == b)
        y = labels[keep].tolist()
        model = forest.train_forest(
            X[keep], y, n_trees=config.trees, mtry=config.mtry, class_sizes=plan.sizes,
            seed=config.seed, classes=[a, b], threads=config.threads,
        )
        out.append(PairResult(a, b, forest.oob_estimate(model, X[keep], y).rate, False))
    return out


def write_grid(results, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for r in results:
            w.writerow([r.emotion_a, r.emotion_b, "" if r.rate is None else repr(r.rate),
                        str(r.skipped).lower(), r.reason])
