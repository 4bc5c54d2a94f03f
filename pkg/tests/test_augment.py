import numpy as np
import pytest

from replaydet.audio_io import AudioClip
from replaydet.augment import (AugmentSpec, Augmenter, add_noise, add_reverb, adjust_speed, change_speed,
                               draw_mask, fit_noise, freq_mask, mask_bins, mask_frames, scaled_noise, time_mask)
from replaydet.dsp import LOG_FLOOR, stft_log_spectrogram
from replaydet.errors import PreconditionViolation, RirTooLong, SilentNoiseSource, SilentSignal
from replaydet.synth_corpus import exponential_rir, generate_bonafide

from conftest import tone, white


@pytest.fixture
def spec():
    # white noise has no cells already at the floor, so changed cells = masked cells
    return stft_log_spectrogram(white(2.0, seed=11))


class ZeroWidth:
    def integers(self, lo, hi):
        return 0


class FullWidth:
    def __init__(self, n):
        self.n = n

    def integers(self, lo, hi):
        return hi - 1 if hi - 1 == self.n else 0


def test_mask_zero_width_is_identity(spec):
    start, width = draw_mask(spec.num_bins, 80, ZeroWidth())
    assert width == 0
    np.testing.assert_array_equal(mask_bins(spec, start, width).values, spec.values)


def test_full_masks(spec):
    start, width = draw_mask(spec.num_bins, spec.num_bins, FullWidth(spec.num_bins))
    assert np.all(mask_bins(spec, start, width).values == LOG_FLOOR)
    start, width = draw_mask(spec.num_frames, spec.num_frames, FullWidth(spec.num_frames))
    assert np.all(mask_frames(spec, start, width).values == LOG_FLOOR)


def test_masked_cell_counts(spec):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        start, width = draw_mask(spec.num_bins, 80, rng)
        out = mask_bins(spec, start, width).values
        assert np.sum(out != spec.values) == width * spec.num_frames
        start, width = draw_mask(spec.num_frames, spec.num_frames, rng)
        out = mask_frames(spec, start, width).values
        assert np.sum(out != spec.values) == width * spec.num_bins


def test_mask_shape_determinism_and_bounds(spec):
    a, b = freq_mask(spec, 80, seed=3), freq_mask(spec, 80, seed=3)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.values.shape == spec.values.shape
    draws = {draw_mask(512, 80, np.random.default_rng(s)) for s in range(50)}
    assert len(draws) > 40
    with pytest.raises(PreconditionViolation):
        freq_mask(spec, 600)
    t = time_mask(spec, 80, max_prop=0.1, seed=1)
    assert np.sum(np.all(t.values == LOG_FLOOR, axis=1)) <= int(0.1 * spec.num_frames)


def test_add_noise_snr():
    x = generate_bonafide(1, 1.5)
    noise = white(0.7, seed=2)  # shorter than the clip, so it loops
    for seed in range(10):
        n = scaled_noise(x, noise, 10.0, np.random.default_rng(seed))
        snr = 10 * np.log10(np.mean(x.samples ** 2) / np.mean(n ** 2))
        assert abs(snr - 10.0) < 0.1
    y = add_noise(x, noise, 100.0, seed=0)
    assert np.sqrt(np.mean((y.samples - x.samples) ** 2)) < 1e-4
    assert np.max(np.abs(add_noise(x, noise, -20.0, seed=0).samples)) <= 1.0


def test_add_noise_errors():
    x = generate_bonafide(1, 1.0)
    with pytest.raises(SilentNoiseSource):
        add_noise(x, AudioClip(np.zeros(100)), 10.0, seed=0)
    with pytest.raises(SilentSignal):
        add_noise(AudioClip(np.zeros(1000)), white(0.1), 10.0, seed=0)


def test_fit_noise_lengths():
    rng = np.random.default_rng(0)
    assert fit_noise(np.arange(10.0), 25, rng).shape == (25,)
    assert fit_noise(np.arange(100.0), 25, rng).shape == (25,)


def test_reverb_impulses():
    x = generate_bonafide(2, 1.0)
    delta = AudioClip(np.array([1.0]))
    np.testing.assert_allclose(add_reverb(x, delta).samples, x.samples, atol=1e-12)
    k = 37
    shifted = add_reverb(x, AudioClip(np.r_[np.zeros(k), 1.0])).samples
    ref = np.r_[np.zeros(k), x.samples[:-k]]
    np.testing.assert_allclose(shifted * (np.max(np.abs(ref)) / x.peak), ref, atol=1e-9)
    with pytest.raises(RirTooLong):
        add_reverb(x, AudioClip(np.ones(len(x))))


def test_reverb_lengthens_autocorrelation():
    x = generate_bonafide(3, 1.5)
    rir = AudioClip(exponential_rir(0.5, 0.0, np.random.default_rng(0)))
    y = add_reverb(x, rir)

    def tail(s):
        ac = np.correlate(s, s, "full")[len(s) - 1 :]
        return np.sum(ac[800:4000] ** 2) / ac[0] ** 2

    assert tail(y.samples) > tail(x.samples)


def test_speed_lengths_and_pitch():
    x = tone(1000, seconds=1.0)
    assert len(change_speed(x, 0.9)) == round(16000 / 0.9) == 17778
    assert len(change_speed(x, 1.0)) == 16000
    y = change_speed(x, 1.1).samples
    peak = np.argmax(np.abs(np.fft.rfft(y))) * 16000 / len(y)
    assert abs(peak - 1100) <= 5
    with pytest.raises(PreconditionViolation):
        adjust_speed(x, (0.4, 1.0))
    a, b = adjust_speed(x, seed=5), adjust_speed(x, seed=5)
    assert len(a) == len(b) and np.array_equal(a.samples, b.samples)


def test_augmenter_variants():
    x = generate_bonafide(4, 1.2)
    for kind in ("add_noise", "add_reverb", "adjust_speed", "pre_emphasis", "de_emphasis"):
        y = Augmenter(AugmentSpec(kind)).waveform(x, np.random.default_rng(0))
        assert y.sample_rate_hz == 16000 and np.all(np.isfinite(y.samples))
    with pytest.raises(PreconditionViolation):
        AugmentSpec("mixup")


def test_spectral_augmenter_masks_both_branches(spec):
    other = spec.with_values(spec.values - 1.0)
    o, p = Augmenter(AugmentSpec("freq_mask")).spectral(np.random.default_rng(7))(spec, other)
    np.testing.assert_array_equal(o.values == LOG_FLOOR, p.values == LOG_FLOOR)
