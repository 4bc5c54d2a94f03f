import sys

import numpy as np
import pytest

from replaydet.audio_io import AudioClip
from replaydet.codec import (CUTOFF_HZ, SUPPORTED_BITRATES, CodecConfig, CompressedPackage, allocate_bits,
                             decode, encode, imdct_frames, mdct_frames, roundtrip)
from replaydet.dsp import stft_log_spectrogram
from replaydet.errors import CorruptPackage, ExternalCodecFailure, PreconditionViolation
from replaydet.synth_corpus import generate_bonafide

from conftest import band_energy, tone, white


def test_mdct_perfect_reconstruction():
    x = white(0.37, seed=2).samples
    np.testing.assert_allclose(imdct_frames(mdct_frames(x), len(x)), x, atol=1e-12)


def test_config_validation():
    with pytest.raises(PreconditionViolation):
        CodecConfig(bitrate_bps=24000)
    with pytest.raises(PreconditionViolation):
        CodecConfig(mode="external")
    with pytest.raises(PreconditionViolation):
        CodecConfig(sample_rate_hz=8000)


def test_size_budget_one_second():
    pkg = encode(white(1.0), CodecConfig(16000))
    assert pkg.size_bytes <= 2100


@pytest.mark.parametrize("bitrate", SUPPORTED_BITRATES)
def test_size_budget_all_rates(bitrate):
    for secs in (0.3, 1.7):
        pkg = encode(generate_bonafide(1, max(1.0, secs)), CodecConfig(bitrate))
        dur = pkg.original_length / 16000
        assert pkg.size_bytes <= bitrate / 8 * dur * 1.05


def test_silence_is_minimal():
    pkg = encode(AudioClip(np.zeros(16000)), CodecConfig())
    assert all(len(f) == 1 for f in pkg.frames)
    assert np.all(decode(pkg).samples == 0)


def test_length_preserved_and_deterministic():
    cfg = CodecConfig(12000)
    for n in (321, 16000, 17777):
        x = white(n / 16000, seed=n)
        a, b = encode(x, cfg), encode(x, cfg)
        assert a.frames == b.frames
        assert len(decode(a)) == n


def test_tone_fidelity_at_16k():
    x = tone(1000, amp=0.5)
    y = roundtrip(x, CodecConfig(16000)).samples
    spec_x, spec_y = np.abs(np.fft.rfft(x.samples)), np.abs(np.fft.rfft(y))
    assert np.argmax(spec_y) == np.argmax(spec_x)
    assert abs(20 * np.log10(spec_y.max() / spec_x.max())) < 1.0


def test_six_khz_tone_removed_at_8k():
    x = tone(6000)
    y = roundtrip(x, CodecConfig(8000)).samples
    assert band_energy(y, 5900, 6100) < 0.01 * band_energy(x.samples, 5900, 6100)


@pytest.mark.parametrize("bitrate", SUPPORTED_BITRATES)
def test_cutoff_attenuation(bitrate):
    x = white(1.0, seed=9)
    y = roundtrip(x, CodecConfig(bitrate)).samples
    cut = CUTOFF_HZ[bitrate]
    ratio = band_energy(y, cut, 8000) / band_energy(x.samples, cut, 8000)
    assert 10 * np.log10(ratio) <= -30


def _lsd(a, b):
    return np.sqrt(np.mean((stft_log_spectrogram(a).values - stft_log_spectrogram(b).values) ** 2))


def test_lower_bitrate_distorts_more():
    for seed in range(4):
        x = generate_bonafide(seed, 1.5)
        lo, hi = roundtrip(x, CodecConfig(8000)), roundtrip(x, CodecConfig(16000))
        assert _lsd(x, lo) >= _lsd(x, hi)
        assert band_energy(x.samples - lo.samples, 4000, 8000) >= band_energy(x.samples - hi.samples, 4000, 8000)


def test_allocation_respects_budget():
    rng = np.random.default_rng(0)
    for _ in range(50):
        sf = rng.integers(-20, 5, size=32)
        coded = rng.random(32) > 0.2
        budget = int(rng.integers(0, 600))
        bits = allocate_bits(sf, coded, budget, 10)
        assert np.sum(bits) * 10 <= budget
        assert np.all(bits[~coded] == 0)
        assert np.all((bits == 0) | ((bits >= 2) & (bits <= 8)))


def test_corrupt_packages():
    pkg = encode(white(0.2), CodecConfig())
    with pytest.raises(CorruptPackage):
        decode(CompressedPackage(pkg.frames[:-1], pkg.config, pkg.original_length))
    frames = list(pkg.frames)
    frames[3] = frames[3] + b"\0" * 50
    with pytest.raises(CorruptPackage):
        decode(CompressedPackage(frames, pkg.config, pkg.original_length))


def test_external_codec(tmp_path):
    script = tmp_path / "codec.py"
    script.write_text("import shutil, sys\nassert sys.argv[3] == '8000'\nshutil.copy(sys.argv[1], sys.argv[2])\n")
    cfg = CodecConfig(8000, mode="external", command=f"{sys.executable} {script} {{input}} {{output}} {{bitrate}}")
    x = AudioClip(np.round(np.clip(white(0.3).samples, -1, 0.999) * 32768) / 32768)
    np.testing.assert_allclose(roundtrip(x, cfg).samples, x.samples, atol=1 / 32768)
    bad = CodecConfig(8000, mode="external", command=f"{sys.executable} -c 'pass'")
    with pytest.raises(ExternalCodecFailure):
        encode(x, bad)
