"""Spectral primitives: STFT log spectrograms, mel projection, emphasis filters."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from .audio_io import AudioClip
from .errors import ClipTooShort, InvalidNumMel, PreconditionViolation

EPS = 1e-10
LOG_FLOOR = float(np.log(EPS))

FRAME_MS = 50.0
HOP_MS = 25.0
FFT_SIZE = 1024
NUM_MEL = 80
EMPHASIS_COEFF = 0.97


@dataclass(frozen=True)
class Spectrogram:
    """Log-magnitude spectrogram, ``values`` shaped (num_frames, num_bins)."""

    values: np.ndarray
    frame_len_samples: int
    hop_samples: int
    fft_bins: int
    sample_rate_hz: int = 16000
    num_mel: int | None = None

    @property
    def scale(self) -> str:
        return "linear" if self.num_mel is None else "mel"

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "Spectrogram":
        return replace(self, values=values)


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // hop


def stft_magnitude(samples, frame_len: int, hop: int, fft_size: int, window="hann") -> np.ndarray:
    """All ``fft_size // 2 + 1`` magnitude bins per frame, windowed and zero-padded."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < frame_len:
        raise ClipTooShort(f"{samples.shape[0]} samples is shorter than one {frame_len}-sample frame")
    if fft_size < frame_len:
        raise PreconditionViolation(f"fft size {fft_size} smaller than frame length {frame_len}")
    frames = sliding_window_view(samples, frame_len)[::hop]
    win = signal.get_window(window, frame_len, fftbins=True)
    return np.abs(np.fft.rfft(frames * win, n=fft_size, axis=1))


def stft_log_spectrogram(
    clip: AudioClip,
    frame_ms: float = FRAME_MS,
    hop_ms: float = HOP_MS,
    fft_size: int = FFT_SIZE,
) -> Spectrogram:
    """Hann-windowed log-magnitude STFT keeping bins 0..fft_size/2-1 (Nyquist dropped)."""
    sr = clip.sample_rate_hz
    frame_len = int(round(sr * frame_ms / 1000.0))
    hop = int(round(sr * hop_ms / 1000.0))
    mag = stft_magnitude(clip.samples, frame_len, hop, fft_size)[:, : fft_size // 2]
    return Spectrogram(np.log(mag + EPS), frame_len, hop, fft_size, sr)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_mel: int, num_bins: int, fft_size: int, sample_rate_hz: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters with unit peak, shape (num_mel, num_bins)."""
    fmax = sample_rate_hz / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_mel + 2))
    freqs = np.arange(num_bins) * sample_rate_hz / fft_size
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (centre - lo)
    falling = (hi - freqs[None, :]) / (hi - centre)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def mel_project(spec: Spectrogram, num_mel: int = NUM_MEL) -> Spectrogram:
    if spec.num_mel is not None:
        raise PreconditionViolation("spectrogram is already mel-scaled")
    if num_mel < 2 or num_mel > spec.num_bins:
        raise InvalidNumMel(f"num_mel must lie in [2, {spec.num_bins}], got {num_mel}")
    fb = mel_filterbank(num_mel, spec.num_bins, spec.fft_bins, spec.sample_rate_hz)
    # undo the +EPS of the log so silence maps back to exactly zero magnitude
    linear = np.clip(np.exp(spec.values) - EPS, 0.0, None)
    mel = linear @ fb.T
    return replace(spec, values=np.log(mel + EPS), num_mel=num_mel)


def pre_emphasis(clip: AudioClip, coeff: float = EMPHASIS_COEFF) -> AudioClip:
    """y[n] = x[n] - coeff * x[n-1], with y[0] = x[0]."""
    if not 0.0 <= coeff < 1.0:
        raise PreconditionViolation(f"emphasis coefficient must lie in [0, 1), got {coeff}")
    x = clip.samples
    y = x.copy()
    y[1:] -= coeff * x[:-1]
    return clip.with_samples(y)


def de_emphasis(clip: AudioClip, coeff: float = EMPHASIS_COEFF) -> AudioClip:
    """Inverse of :func:`pre_emphasis`: y[n] = x[n] + coeff * y[n-1]."""
    if not 0.0 <= coeff < 1.0:
        raise PreconditionViolation(f"emphasis coefficient must lie in [0, 1), got {coeff}")
    return clip.with_samples(signal.lfilter([1.0], [1.0, -coeff], clip.samples))
