import numpy as np
import pytest

from replaydet.audio_io import AudioClip
from replaydet.synth_corpus import build_corpus

SR = 16000


def tone(freq, seconds=1.0, amp=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def white(seconds=1.0, amp=0.3, seed=0, sr=SR):
    return AudioClip(amp * np.random.default_rng(seed).standard_normal(int(seconds * sr)), sr)


def band_energy(x, lo, hi, sr=SR):
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(x.shape[0], 1 / sr)
    return spec[(f >= lo) & (f < hi)].sum()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    return build_corpus(12, 12, tmp_path_factory.mktemp("corpus"), seed=3, duration_range=(1.0, 1.5))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        name, status = mod.RESULTS[number]
        terminalreporter.write_line(f"{status} criterion {number}: {name}")
