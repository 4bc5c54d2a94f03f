"""Training-set augmentation: spectrogram masking and waveform perturbations.

Waveform ops take and return :class:`AudioClip`; masking ops take and return
:class:`Spectrogram`. Every op draws from the ``numpy`` generator (or seed) it
is given, so a fixed seed reproduces the same crop, mask or factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .audio_io import AudioClip, load_wav, resample_samples
from .dsp import EMPHASIS_COEFF, LOG_FLOOR, Spectrogram, de_emphasis, pre_emphasis
from .errors import PreconditionViolation, RirTooLong, SilentNoiseSource, SilentSignal

MASK_MAX_LEN = 80
SNR_DB = 10.0
SPEED_RANGE = (0.9, 1.1)

KINDS = ("freq_mask", "time_mask", "add_noise", "add_reverb", "adjust_speed", "pre_emphasis", "de_emphasis")
SPEC_KINDS = ("freq_mask", "time_mask")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def draw_mask(size: int, max_len: int, rng) -> tuple[int, int]:
    """(start, width) with width ~ U{0..max_len} and start uniform over valid offsets."""
    max_len = int(min(max_len, size))
    width = int(rng.integers(0, max_len + 1))
    start = int(rng.integers(0, size - width + 1))
    return start, width


def mask_bins(spec: Spectrogram, start: int, width: int) -> Spectrogram:
    v = spec.values.copy()
    v[:, start : start + width] = LOG_FLOOR
    return spec.with_values(v)


def mask_frames(spec: Spectrogram, start: int, width: int) -> Spectrogram:
    v = spec.values.copy()
    v[start : start + width, :] = LOG_FLOOR
    return spec.with_values(v)


def freq_mask(spec: Spectrogram, max_len: int = MASK_MAX_LEN, seed=None) -> Spectrogram:
    if max_len > spec.num_bins:
        raise PreconditionViolation(f"mask length {max_len} exceeds {spec.num_bins} bins")
    return mask_bins(spec, *draw_mask(spec.num_bins, max_len, _rng(seed)))


def time_mask(spec: Spectrogram, max_len: int = MASK_MAX_LEN, max_prop: float = 1.0, seed=None) -> Spectrogram:
    if not 0.0 <= max_prop <= 1.0:
        raise PreconditionViolation(f"max_prop must lie in [0, 1], got {max_prop}")
    cap = min(max_len, int(np.floor(max_prop * spec.num_frames)))
    return mask_frames(spec, *draw_mask(spec.num_frames, cap, _rng(seed)))


def _power(x: np.ndarray) -> float:
    return float(np.mean(x * x)) if x.size else 0.0


def fit_noise(noise: np.ndarray, n: int, rng) -> np.ndarray:
    """Random crop of ``noise`` to ``n`` samples, looping it first if it is shorter."""
    if noise.shape[0] < n:
        noise = np.tile(noise, int(np.ceil(n / noise.shape[0])) + 1)
    start = int(rng.integers(0, noise.shape[0] - n + 1))
    return noise[start : start + n]


def scaled_noise(clip: AudioClip, noise: AudioClip, snr_db: float, rng) -> np.ndarray:
    p_sig = _power(clip.samples)
    if p_sig <= 0.0:
        raise SilentSignal("signal power is zero; SNR is undefined")
    if _power(noise.samples) <= 0.0:
        raise SilentNoiseSource("noise source is silent")
    seg = fit_noise(noise.samples, len(clip), rng)
    p_seg = _power(seg)
    if p_seg <= 0.0:
        raise SilentNoiseSource("selected noise segment is silent")
    return seg * np.sqrt(p_sig / (p_seg * 10.0 ** (snr_db / 10.0)))


def add_noise(clip: AudioClip, noise: AudioClip, snr_db: float = SNR_DB, seed=None) -> AudioClip:
    n = scaled_noise(clip, noise, snr_db, _rng(seed))
    return clip.with_samples(np.clip(clip.samples + n, -1.0, 1.0))


def add_reverb(clip: AudioClip, rir: AudioClip) -> AudioClip:
    if len(rir) >= len(clip):
        raise RirTooLong(f"RIR of {len(rir)} samples is not shorter than the {len(clip)}-sample clip")
    y = signal.fftconvolve(clip.samples, rir.samples)[: len(clip)]
    peak = float(np.max(np.abs(y)))
    if peak > 0.0:
        y = y * (clip.peak / peak)
    return clip.with_samples(y)


def speed_output_length(n: int, factor: float) -> int:
    return int(round(n / factor))


def change_speed(clip: AudioClip, factor: float) -> AudioClip:
    """Resampling speed change: duration scales by 1/factor and pitch by factor."""
    if factor <= 0:
        raise PreconditionViolation(f"speed factor must be positive, got {factor}")
    if factor == 1.0:
        return clip.with_samples(clip.samples.copy())
    n_out = speed_output_length(len(clip), factor)
    return clip.with_samples(resample_samples(clip.samples, 1.0 / factor, n_out))


def adjust_speed(clip: AudioClip, factor_range=SPEED_RANGE, seed=None) -> AudioClip:
    lo, hi = factor_range
    if not 0.5 <= lo <= hi <= 2.0:
        raise PreconditionViolation(f"speed range must satisfy 0.5 <= lo <= hi <= 2, got {factor_range}")
    return change_speed(clip, float(_rng(seed).uniform(lo, hi)))


# -- noise and RIR sources ---------------------------------------------------

def _wav_files(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".wav")


def synthetic_babble(rng, seconds: float = 3.0, sr: int = 16000) -> AudioClip:
    """Stand-in for recorded office noise: pink-ish noise with a slow amplitude wobble."""
    n = int(seconds * sr)
    white = rng.standard_normal(n)
    pink = signal.lfilter([0.049922035, -0.095993537, 0.050612699, -0.004408786],
                          [1.0, -2.494956002, 2.017265875, -0.522189400], white)
    wobble = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * np.arange(n) / sr)
    x = pink * wobble
    return AudioClip(0.5 * x / np.max(np.abs(x)), sr)


def synthetic_rir(rng, sr: int = 16000) -> AudioClip:
    t60 = rng.uniform(0.2, 0.6)
    n = int(t60 * sr)
    t = np.arange(n) / sr
    h = rng.standard_normal(n) * np.exp(-6.9078 * t / t60)
    h[0] = np.max(np.abs(h)) * 2.0
    return AudioClip(h / np.max(np.abs(h)), sr)


@dataclass
class AugmentSpec:
    kind: str
    max_len: int = MASK_MAX_LEN
    max_prop: float = 1.0
    snr_db: float = SNR_DB
    speed_range: tuple[float, float] = SPEED_RANGE
    emph_coeff: float = EMPHASIS_COEFF
    source_dir: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionViolation(f"unknown augmentation {self.kind!r}; choose from {KINDS}")

    @property
    def is_spectral(self) -> bool:
        return self.kind in SPEC_KINDS


@dataclass
class Augmenter:
    """Applies one :class:`AugmentSpec` with per-utterance seeds."""

    spec: AugmentSpec
    _sources: list = field(default_factory=list, repr=False)

    def _source(self, rng) -> AudioClip:
        if self.spec.source_dir:
            if not self._sources:
                self._sources = _wav_files(self.spec.source_dir)
                if not self._sources:
                    raise SilentNoiseSource(f"no WAV files in {self.spec.source_dir}")
            return load_wav(self._sources[int(rng.integers(len(self._sources)))])
        if self.spec.kind == "add_noise":
            return synthetic_babble(rng)
        return synthetic_rir(rng)

    def waveform(self, clip: AudioClip, rng) -> AudioClip:
        k = self.spec.kind
        if k == "add_noise":
            return add_noise(clip, self._source(rng), self.spec.snr_db, rng)
        if k == "add_reverb":
            rir = self._source(rng)
            if len(rir) >= len(clip):
                rir = rir.with_samples(rir.samples[: len(clip) - 1])
            return add_reverb(clip, rir)
        if k == "adjust_speed":
            return adjust_speed(clip, self.spec.speed_range, rng)
        if k == "pre_emphasis":
            return pre_emphasis(clip, self.spec.emph_coeff)
        if k == "de_emphasis":
            return de_emphasis(clip, self.spec.emph_coeff)
        return clip

    def spectral(self, rng):
        """Returns an ``(orig, proc)`` transform masking the same cells in both spectrograms."""
        def apply(orig: Spectrogram, proc: Spectrogram):
            if self.spec.kind == "freq_mask":
                start, width = draw_mask(orig.num_bins, min(self.spec.max_len, orig.num_bins), rng)
                return mask_bins(orig, start, width), mask_bins(proc, start, width)
            cap = min(self.spec.max_len, int(np.floor(self.spec.max_prop * orig.num_frames)))
            start, width = draw_mask(orig.num_frames, cap, rng)
            return mask_frames(orig, start, width), mask_frames(proc, start, width)
        return apply
