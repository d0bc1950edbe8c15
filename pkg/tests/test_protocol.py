import csv
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechemo.features.vector import variable_names
from speechemo.protocol import (
    EvaluationReport, ForestConfig, PlanError, Skip, conditional_matrix, eighty_percent,
    format_conditional_table, format_rate_table, plan_multiclass, plan_pairwise, run_multiclass,
    run_pairwise_grid, write_grid,
)
from speechemo.table import FeatureTable

FAST = ForestConfig(trees=40, seed=1, top_k=5)


def make_table(counts, sep=4.0, seed=0, speaker="F", identical=()):
    """Synthetic ALL-width table; each class shifts its own FB variables."""
    rng = np.random.default_rng(seed)
    names = variable_names("ALL")
    rows, labels = [], []
    for k, (label, n) in enumerate(counts.items()):
        x = rng.standard_normal((n, len(names)))
        if label not in identical:
            x[:, k * 10:(k + 1) * 10] += sep
        rows.append(x)
        labels += [label] * n
    vals = np.vstack(rows)
    n = len(labels)
    return FeatureTable([f"t{i}" for i in range(n)], ["s1"] * n, [speaker] * n, labels,
                        names, vals, {"n_frames": 12})


def test_plan_drops_small_class_and_caps_sizes():
    plan = plan_multiclass({"Joy": 508, "Sadness": 14, "Tension": 1304, "Anger": 174, "Neutral": 3968})
    assert plan.included == ["Joy", "Tension", "Anger", "Neutral"]
    assert [d["class"] for d in plan.dropped] == ["Sadness"]
    assert plan.sizes == {"Joy": 406, "Tension": 500, "Anger": 139, "Neutral": 500}


def test_plan_drops_only_class_under_gate():
    plan = plan_multiclass({"Joy": 294, "Sadness": 286, "Tension": 7168, "Anger": 48, "Neutral": 636})
    assert [d["class"] for d in plan.dropped] == ["Anger"]


def test_boundary_100_kept():
    plan = plan_multiclass({c: 100 for c in ("Joy", "Sadness", "Tension", "Anger", "Neutral")})
    assert not plan.dropped and set(plan.sizes.values()) == {80}
    assert plan_multiclass({"Joy": 99, "Sadness": 100, "Neutral": 100}).dropped[0]["class"] == "Joy"


def test_too_few_classes():
    with pytest.raises(PlanError):
        plan_multiclass({"Joy": 500, "Anger": 20})


def test_pairwise_plans():
    assert isinstance(plan_pairwise(174, 3968, "Anger", "Neutral"), Skip)
    p = plan_pairwise(1712, 8692, "Joy", "Neutral")
    assert p.sizes == {"Joy": 1369, "Neutral": 1369}
    p = plan_pairwise(200, 200)
    assert not isinstance(p, Skip) and p.sizes == {"a": 160, "b": 160}
    s = plan_pairwise(199, 5000, "Joy", "Neutral")
    assert isinstance(s, Skip) and "Joy has 199" in s.reason


@given(st.integers(0, 10 ** 7))
def test_eighty_percent_is_exact_floor(n):
    assert eighty_percent(n) == math.floor(Fraction(4 * n, 5))


@settings(max_examples=100)
@given(st.dictionaries(st.sampled_from(["Joy", "Sadness", "Tension", "Anger", "Neutral"]),
                       st.integers(0, 5000), min_size=2))
def test_plan_gate_exact(counts):
    kept = [c for c, n in counts.items() if n >= 100]
    if len(kept) < 2:
        with pytest.raises(PlanError):
            plan_multiclass(counts)
        return
    plan = plan_multiclass(counts)
    assert set(plan.included) == set(kept)
    for c in kept:
        assert plan.sizes[c] == min(4 * counts[c] // 5, 500)


def test_joy_row_normalization():
    cm = np.array([[381, 25, 0, 102], [0, 10, 0, 0], [0, 0, 10, 0], [0, 0, 0, 10]])
    cond = conditional_matrix(cm)
    assert [round(v, 2) for v in cond[0]] == [0.75, 0.05, 0.00, 0.20]


def test_perfect_classifier_identity():
    assert np.array_equal(conditional_matrix(np.diag([5, 7, 9])), np.eye(3))


@settings(max_examples=100)
@given(st.lists(st.lists(st.integers(0, 1000), min_size=4, max_size=4), min_size=4, max_size=4))
def test_conditional_rows(rows):
    cm = np.array(rows)
    cond = conditional_matrix(cm)
    for i, r in enumerate(cm):
        if r.sum():
            assert abs(cond[i].sum() - 1) < 1e-9
            assert np.array_equal(np.rint(cond[i] * r.sum()).astype(int), r)


def test_run_multiclass_report():
    t = make_table({"Joy": 150, "Sadness": 60, "Tension": 130, "Neutral": 200})
    rep = run_multiclass(t, "FB", FAST, config_echo={"seed": 1})
    d = rep.to_dict()
    assert d["classes"] == ["Joy", "Tension", "Neutral"]
    assert d["dropped"][0]["class"] == "Sadness"
    assert d["n_variables"] == 192 and d["group"] == "FB"
    assert d["sizes"] == {"Joy": 120, "Tension": 104, "Neutral": 160}
    assert d["rate"] > 0.9
    assert np.allclose(np.sum(d["conditional"], axis=1), 1, atol=1e-9)
    assert np.array(d["confusion"]).sum(axis=1).tolist() == [150, 130, 200]
    assert len(d["importance"]) == 5 and all(v["var"] in variable_names("FB") for v in d["importance"])
    assert set(["speaker", "group", "classes", "dropped", "rate", "confusion", "conditional",
                "counts", "importance", "seed", "config"]) <= set(d)
    assert d["config"] == {"seed": 1}


def test_reports_byte_identical():
    t = make_table({"Joy": 120, "Neutral": 130})
    a = json.dumps(run_multiclass(t, "ALL", FAST).to_dict(), sort_keys=True)
    b = json.dumps(run_multiclass(t, "ALL", FAST).to_dict(), sort_keys=True)
    assert a == b


def test_group_consumes_only_its_block():
    # information lives only in the F block; FB sees none of it
    t = make_table({"Joy": 120, "Neutral": 130}, sep=0.0)
    lab = np.array(t.emotions)
    t.values[lab == "Joy", 192:240] += 5.0
    assert run_multiclass(t, "F", FAST).rate > 0.95
    assert run_multiclass(t, "FB", FAST).rate < 0.7


def test_multiple_speakers_need_selection():
    t1 = make_table({"Joy": 120, "Neutral": 120}, speaker="F")
    t2 = make_table({"Joy": 120, "Neutral": 120}, speaker="M", seed=1)
    both = FeatureTable(t1.token_ids + [i + "m" for i in t2.token_ids], t1.session_ids + t2.session_ids,
                        t1.speaker_ids + t2.speaker_ids, t1.emotions + t2.emotions, t1.names,
                        np.vstack([t1.values, t2.values]), t1.meta)
    with pytest.raises(PlanError, match="speakers"):
        run_multiclass(both, "FB", FAST)
    assert run_multiclass(both, "FB", FAST, speaker="M").speaker == "M"


def test_formatted_tables():
    rep = EvaluationReport("F", "FB", ["Joy", "Sadness", "Tension", "Neutral"], [], 0.8,
                           np.array([[381, 25, 0, 102], [1, 9, 0, 0], [0, 0, 10, 0], [0, 0, 2, 8]]),
                           {"Joy": 508, "Sadness": 10, "Tension": 10, "Neutral": 10}, [], 0, {})
    lines = format_conditional_table(rep).splitlines()
    assert lines[0].split("\t") == ["", "Joy", "Sadness", "Tension", "Neutral", "No. of Observations"]
    assert lines[1].split("\t") == ["Joy", "0.75", "0.05", "0.00", "0.20", "508"]
    rates = format_rate_table([rep]).splitlines()
    assert rates[1].split("\t")[:3] == ["F", "80%", "-"]


def test_pairwise_grid(tmp_path):
    t = make_table({"Joy": 220, "Sadness": 150, "Tension": 210, "Anger": 205, "Neutral": 260})
    res = run_pairwise_grid(t, "FB", ForestConfig(trees=20, seed=0))
    assert len(res) == 10
    skipped = {(r.emotion_a, r.emotion_b) for r in res if r.skipped}
    assert skipped == {("Joy", "Sadness"), ("Sadness", "Tension"), ("Sadness", "Anger"), ("Sadness", "Neutral")}
    assert all(r.rate > 0.9 for r in res if not r.skipped)
    write_grid(res, tmp_path / "g.csv")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["emotion_a", "emotion_b", "rate", "skipped", "reason"] and len(rows) == 11


def test_identical_pair_at_chance():
    t = make_table({"Joy": 250, "Neutral": 250}, identical=("Joy", "Neutral"))
    rates = []
    for seed in range(10):
        res = run_pairwise_grid(t, "FB", ForestConfig(trees=30, seed=seed), emotions=("Joy", "Neutral"))
        rates.append(res[0].rate)
    assert np.mean(rates) == pytest.approx(0.5, abs=0.05)
