import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechemo.features.pitch import (
    MAX_LAG, MIN_LAG, estimate_f0_shr, periodicity, subharmonic_to_harmonic_ratio,
)

from conftest import FS, sawtooth, tone


def brute_periodicity(x):
    # direct normalized cross-correlation between the frame and its lagged copy
    n = len(x)
    best = -np.inf
    for lag in range(MIN_LAG, MAX_LAG + 1):
        a, b = x[:n - lag], x[lag:]
        d = np.sqrt(np.dot(a, a) * np.dot(b, b))
        best = max(best, np.dot(a, b) / d if d > 0 else 0.0)
    return best


def pulse_train(f0, n=640, fs=FS, phase=0.3):
    x = np.zeros(n)
    period = fs / f0
    t = phase * period
    while t < n:
        i = int(t)
        frac = t - i
        x[i] += 1 - frac
        if i + 1 < n:
            x[i + 1] += frac
        t += period
    return x


def brute_harmonic_sum(x, f, fs=FS, ceiling=1250.0):
    # amplitude of the Hann-windowed frame at each harmonic, by direct DFT
    w = (x - x.mean()) * np.hanning(len(x))
    t = np.arange(len(x)) / fs
    amp = lambda q: abs(np.sum(w * np.exp(-2j * np.pi * q * t)))  # noqa: E731
    ks = np.arange(1, int(ceiling // f) + 1)
    return sum(amp(k * f) for k in ks), sum(amp((k - 0.5) * f) for k in ks)


def test_sine_periodicity():
    x = tone(100, 640)
    p = periodicity(x)
    assert p >= 0.95
    assert p == pytest.approx(brute_periodicity(x), abs=1e-9)


def test_noise_periodicity_below_half():
    rng = np.random.default_rng(0)
    vals = [periodicity(rng.standard_normal(640)) for _ in range(1000)]
    assert np.mean(vals) < 0.5


def test_zero_frame_periodicity():
    assert periodicity(np.zeros(640)) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0))
def test_periodicity_bounded_and_matches_brute_force(seed, mix):
    rng = np.random.default_rng(seed)
    x = mix * tone(rng.uniform(70, 390), 640) + (1 - mix) * rng.standard_normal(640)
    p = periodicity(x)
    assert -1.0 <= p <= 1.0
    assert p == pytest.approx(brute_periodicity(x), abs=1e-9)


def test_sawtooth_120():
    assert estimate_f0_shr(sawtooth(120)) == pytest.approx(120, abs=3)


def test_noise_unvoiced_majority():
    rng = np.random.default_rng(1)
    zeros = sum(estimate_f0_shr(rng.standard_normal(640)) == 0 for _ in range(200))
    assert zeros > 100


def test_zero_frame_unvoiced():
    assert estimate_f0_shr(np.zeros(640)) == 0.0


def test_240_pulse_train_not_subharmonic():
    x = pulse_train(240)
    f0 = estimate_f0_shr(x)
    assert f0 == pytest.approx(240, abs=5)
    # oracle: harmonic summation alone cannot tell 120 from 240 ...
    h240, s240 = brute_harmonic_sum(x, 240.0)
    h120, _ = brute_harmonic_sum(x, 120.0)
    assert h120 == pytest.approx(h240, rel=0.01)
    # ... but the odd multiples of 120 Hz (the midpoints of 240's harmonics) are empty
    assert s240 / h240 < 0.4
    assert subharmonic_to_harmonic_ratio(x, 240.0) == pytest.approx(s240 / h240, rel=0.05, abs=0.02)


@pytest.mark.parametrize("f0", [70, 95, 133, 180, 250, 320, 390])
def test_pulse_trains_across_range(f0):
    assert estimate_f0_shr(pulse_train(f0)) == pytest.approx(f0, rel=0.02)


def test_amplitude_invariant():
    x = sawtooth(150)
    assert estimate_f0_shr(x) == estimate_f0_shr(3.7 * x)
