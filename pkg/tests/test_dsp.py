import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replaydet.audio_io import AudioClip
from replaydet.dsp import (EPS, LOG_FLOOR, de_emphasis, frame_count, hz_to_mel, mel_filterbank, mel_project,
                           mel_to_hz, pre_emphasis, stft_log_spectrogram, stft_magnitude)
from replaydet.errors import ClipTooShort, InvalidNumMel, PreconditionViolation

from conftest import tone, white


def test_spectrogram_shape_and_framing():
    spec = stft_log_spectrogram(white(1.0))
    assert spec.frame_len_samples == 800 and spec.hop_samples == 400
    assert spec.num_bins == 512
    assert spec.num_frames == frame_count(16000, 800, 400) == 39


def test_stft_matches_direct_dft():
    x = white(0.2, seed=1).samples
    mag = stft_magnitude(x, 800, 400, 1024)
    n = np.arange(800)
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * n / 800)
    k = np.arange(513)[:, None]
    frame = x[400:1200] * hann
    direct = np.abs(np.exp(-2j * np.pi * k * n[None, :] / 1024) @ frame)
    np.testing.assert_allclose(mag[1], direct, rtol=1e-9, atol=1e-9)


def test_tone_peak_bin():
    spec = stft_log_spectrogram(tone(1000))
    assert np.all(np.argmax(spec.values, axis=1) == 64)  # 1000 Hz * 1024 / 16000


def test_silence_sits_at_floor_and_short_clip_errors():
    spec = stft_log_spectrogram(AudioClip(np.zeros(4000)))
    assert np.all(spec.values == LOG_FLOOR)
    with pytest.raises(ClipTooShort):
        stft_log_spectrogram(AudioClip(np.zeros(799)))


def test_mel_scale_roundtrip():
    f = np.array([0.0, 700.0, 1000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
    assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2))


def test_mel_filterbank_shape_and_peaks():
    fb = mel_filterbank(80, 512, 1024, 16000)
    assert fb.shape == (80, 512)
    assert np.all(fb.max(axis=1) <= 1.0) and np.all(fb.max(axis=1) > 0.3)
    centres = np.argmax(fb, axis=1)
    assert np.all(np.diff(centres) >= 0)


def test_mel_projection():
    spec = stft_log_spectrogram(tone(1000))
    mel = mel_project(spec)
    assert mel.values.shape == (spec.num_frames, 80) and mel.scale == "mel"
    silent = mel_project(stft_log_spectrogram(AudioClip(np.zeros(4000))))
    np.testing.assert_allclose(silent.values, np.log(EPS))
    for bad in (1, 513):
        with pytest.raises(InvalidNumMel):
            mel_project(spec, bad)
    with pytest.raises(PreconditionViolation):
        mel_project(mel)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=200), st.floats(0.0, 0.99))
def test_emphasis_inverse(values, coeff):
    clip = AudioClip(np.array(values))
    back = de_emphasis(pre_emphasis(clip, coeff), coeff)
    np.testing.assert_allclose(back.samples, clip.samples, atol=1e-9)


def test_pre_emphasis_definition():
    y = pre_emphasis(AudioClip(np.array([1.0, 2.0, 3.0])), 0.97).samples
    np.testing.assert_allclose(y, [1.0, 2.0 - 0.97, 3.0 - 1.94])
    with pytest.raises(PreconditionViolation):
        pre_emphasis(AudioClip(np.ones(3)), 1.0)
