import numpy as np
import pytest

FS = 16000


def tone(freq, n=4160, fs=FS, amp=0.5, phase=0.0):
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * freq * t + phase)


def sawtooth(f0, n=640, fs=FS, amp=0.5):
    t = np.arange(n) / fs
    return amp * (2 * ((t * f0) % 1.0) - 1)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
