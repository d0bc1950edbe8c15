import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechemo.features.voicequality import jitter, peak_amplitude, shimmer


def test_constant_f0_no_jitter():
    vals, mean = jitter([150.0] * 12)
    assert mean == 0 and not vals.any()


def test_alternating_f0_hand_value():
    vals, mean = jitter([150.0, 153.0] * 6)
    assert len(vals) == 11
    assert np.allclose(vals, 3 / 151.5)
    assert mean == pytest.approx(0.0198, abs=1e-4)


def test_all_unvoiced_jitter_zero():
    assert jitter([0.0] * 12)[1] == 0.0


def test_unvoiced_frames_break_pairs():
    vals, _ = jitter([100.0, 0.0, 110.0, 120.0])
    assert np.allclose(vals, [10 / 110])


def test_constant_amplitude_no_shimmer():
    assert shimmer([0.3] * 12)[1] == 0.0


def test_alternating_amplitude_hand_value():
    vals, mean = shimmer([1.0, 0.5] * 6)
    assert np.allclose(vals, 0.5 / 0.75)
    assert mean == pytest.approx(0.667, abs=1e-3)


def test_silence_shimmer_zero():
    assert shimmer([0.0] * 12)[1] == 0.0


def test_peak_amplitude():
    assert peak_amplitude([0.1, -0.7, 0.3]) == 0.7
    assert peak_amplitude([]) == 0.0


positive = st.floats(66, 400, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.just(0.0), positive), min_size=0, max_size=12))
def test_jitter_non_negative_and_amplitude_free(f0s):
    vals, mean = jitter(f0s)
    assert mean >= 0 and np.all(vals >= 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=12), st.floats(0.01, 100))
def test_shimmer_scale_invariant(amps, c):
    _, m1 = shimmer(amps)
    _, m2 = shimmer(np.array(amps) * c)
    assert m1 >= 0
    assert m2 == pytest.approx(m1, rel=1e-9, abs=1e-12)
