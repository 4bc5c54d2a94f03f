"""Analysis/synthesis vocoder used to strip channel detail from an utterance.

The built-in vocoder is a small source-filter model: normalized
cross-correlation pitch tracking, a cepstrally smoothed spectral envelope
and pulse/noise excitation re-filtered frame by frame with overlap-add.
:class:`ExternalVocoder` delegates to any command that maps a WAV to a WAV.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from .audio_io import AudioClip, load_wav, save_wav
from .errors import ClipTooShort, ExternalToolFailure

MIN_CLIP_MS = 100.0
ENV_FLOOR = 1e-10


@dataclass(frozen=True)
class VocoderConfig:
    frame_ms: float = 25.0
    hop_ms: float = 5.0
    f0_min_hz: float = 50.0
    f0_max_hz: float = 500.0
    voicing_threshold: float = 0.5
    silence_db: float = 45.0
    n_cepstral: int = 48
    fft_size: int = 1024
    seed: int = 0


@dataclass
class VocoderAnalysis:
    f0_hz: np.ndarray              # (num_frames,), 0 = unvoiced
    spectral_envelope: np.ndarray  # (num_frames, fft_size // 2 + 1), linear magnitude
    frame_hop_ms: float
    sample_rate_hz: int
    peak: float
    nccf_peak: np.ndarray | None = None

    @property
    def num_frames(self) -> int:
        return self.f0_hz.shape[0]


class Vocoder(Protocol):
    def resynthesize(self, clip: AudioClip) -> AudioClip: ...


def _frame_geometry(cfg: VocoderConfig, sr: int):
    win = int(round(sr * cfg.frame_ms / 1000.0))
    hop = int(round(sr * cfg.hop_ms / 1000.0))
    return win, hop


def _centred_frames(x: np.ndarray, win: int, hop: int, extra: int = 0):
    """Frames of length ``win + extra`` starting win/2 before each hop position."""
    n_frames = int(np.ceil(x.shape[0] / hop)) or 1
    pad_left = win // 2
    pad_right = n_frames * hop + win + extra
    padded = np.concatenate([np.zeros(pad_left), x, np.zeros(pad_right - x.shape[0])])
    frames = sliding_window_view(padded, win + extra)[::hop][:n_frames]
    return frames


def _nccf(frames: np.ndarray, win: int, max_lag: int) -> np.ndarray:
    """Normalized cross-correlation of each frame's first ``win`` samples against lags 0..max_lag."""
    n_fft = 1 << int(np.ceil(np.log2(2 * win + max_lag)))
    head = frames[:, :win]
    spec_full = np.fft.rfft(frames, n=n_fft, axis=1)
    spec_head = np.fft.rfft(head, n=n_fft, axis=1)
    xcorr = np.fft.irfft(np.conj(spec_head) * spec_full, n=n_fft, axis=1)[:, : max_lag + 1]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    energy_lag = sq[:, lags + win] - sq[:, lags]
    energy_0 = energy_lag[:, :1]
    denom = np.sqrt(np.clip(energy_0 * energy_lag, 0.0, None))
    scale = np.max(sq[:, -1:], axis=1, keepdims=True)
    tiny = 1e-12 * np.maximum(scale, 1e-300)
    return np.where(denom > tiny, xcorr / np.maximum(denom, tiny), 0.0)


def _pick_f0(nccf: np.ndarray, sr: int, cfg: VocoderConfig):
    lag_min = int(np.floor(sr / cfg.f0_max_hz))
    lag_max = int(np.ceil(sr / cfg.f0_min_hz))
    f0 = np.zeros(nccf.shape[0])
    peaks = np.zeros(nccf.shape[0])
    for i, row in enumerate(nccf):
        seg = row[lag_min : lag_max + 1]
        best = float(seg.max())
        peaks[i] = best
        if best < cfg.voicing_threshold:
            continue
        # earliest local maximum close to the global one avoids sub-octave errors
        interior = np.flatnonzero((seg[1:-1] >= seg[:-2]) & (seg[1:-1] >= seg[2:])) + 1
        cands = interior[seg[interior] >= 0.85 * best] if interior.size else np.array([int(seg.argmax())])
        k = int(cands[0]) if cands.size else int(seg.argmax())
        lag = float(k + lag_min)
        if 0 < k < seg.shape[0] - 1:
            a, b, c = seg[k - 1], seg[k], seg[k + 1]
            den = a - 2.0 * b + c
            if den < 0:
                lag += 0.5 * (a - c) / den
        hz = sr / lag
        if cfg.f0_min_hz <= hz <= cfg.f0_max_hz:
            f0[i] = hz
    return f0, peaks


def _cepstral_envelope(frames: np.ndarray, cfg: VocoderConfig) -> np.ndarray:
    win = frames.shape[1]
    window = signal.get_window("hann", win, fftbins=True)
    mag = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1))
    log_mag = np.log(mag + ENV_FLOOR)
    cep = np.fft.irfft(log_mag, n=cfg.fft_size, axis=1)
    lifter = np.zeros(cfg.fft_size)
    lifter[: cfg.n_cepstral] = 1.0
    lifter[cfg.fft_size - cfg.n_cepstral + 1 :] = 1.0
    smooth = np.fft.rfft(cep * lifter, axis=1).real
    return np.exp(smooth)


class SimpleVocoder:
    """Pitch + cepstral envelope vocoder with pulse/noise excitation."""

    def __init__(self, config: VocoderConfig | None = None):
        self.config = config or VocoderConfig()

    def analyze(self, clip: AudioClip) -> VocoderAnalysis:
        cfg = self.config
        sr = clip.sample_rate_hz
        if len(clip) < sr * MIN_CLIP_MS / 1000.0:
            raise ClipTooShort(f"vocoder needs >= {MIN_CLIP_MS:.0f} ms, got {1000 * clip.duration_s:.1f} ms")
        win, hop = _frame_geometry(cfg, sr)
        max_lag = int(np.ceil(sr / cfg.f0_min_hz)) + 1
        frames = _centred_frames(clip.samples, win, hop, extra=max_lag)
        f0, peaks = _pick_f0(_nccf(frames, win, max_lag), sr, cfg)
        # damped resonances in near-silent tails correlate like a high pitch
        energy = np.sum(frames[:, :win] ** 2, axis=1)
        if energy.max() > 0:
            f0[energy < energy.max() * 10.0 ** (-cfg.silence_db / 10.0)] = 0.0
        envelope = _cepstral_envelope(frames[:, :win], cfg)
        return VocoderAnalysis(f0, envelope, cfg.hop_ms, sr, clip.peak, peaks)

    def _excitation(self, f0_frames: np.ndarray, num_samples: int, hop: int, sr: int):
        rng = np.random.default_rng(self.config.seed)
        noise = rng.standard_normal(num_samples)
        frame_of = np.minimum(np.arange(num_samples) // hop, f0_frames.shape[0] - 1)
        # linear f0 interpolation within voiced stretches
        t_frames = np.arange(f0_frames.shape[0]) * hop
        f0 = np.interp(np.arange(num_samples), t_frames, f0_frames)
        voiced = (f0_frames[frame_of] > 0) & (f0 > 0)
        f0 = np.where(voiced, f0, 0.0)
        phase = np.cumsum(f0 / sr)
        pulses = np.zeros(num_samples)
        wraps = np.flatnonzero(np.diff(np.floor(phase), prepend=0.0) > 0)
        if wraps.size:
            period = sr / np.maximum(f0[wraps], 1.0)
            pulses[wraps] = np.sqrt(period)
        return np.where(voiced, pulses, noise)

    def synthesize(self, analysis: VocoderAnalysis, num_samples: int) -> AudioClip:
        cfg = self.config
        sr = analysis.sample_rate_hz
        win, hop = _frame_geometry(cfg, sr)
        n_fft = cfg.fft_size
        exc = self._excitation(analysis.f0_hz, num_samples, hop, sr)
        frames = _centred_frames(exc, win, hop)[: analysis.num_frames]
        window = signal.get_window("hann", win, fftbins=True)
        spec = np.fft.rfft(frames * window, n=n_fft, axis=1) * analysis.spectral_envelope[: frames.shape[0]]
        shift = (n_fft - win) // 2
        filtered = np.roll(np.fft.irfft(spec, n=n_fft, axis=1), shift, axis=1)

        pad = win // 2 + shift
        total = num_samples + 2 * n_fft
        out = np.zeros(total)
        norm = np.zeros(total)
        for i in range(frames.shape[0]):
            start = i * hop - pad + n_fft
            out[start : start + n_fft] += filtered[i]
            wstart = i * hop - win // 2 + n_fft
            norm[wstart : wstart + win] += window
        y = out[n_fft : n_fft + num_samples]
        w = norm[n_fft : n_fft + num_samples]
        y = y / np.maximum(w, 1e-3 * w.max()) if w.max() > 0 else y
        out_peak = float(np.max(np.abs(y))) if y.size else 0.0
        if analysis.peak <= 0.0 or out_peak <= 1e-300:
            return AudioClip(np.zeros(num_samples), sr)
        return AudioClip(y * (analysis.peak / out_peak), sr)

    def resynthesize(self, clip: AudioClip) -> AudioClip:
        return self.synthesize(self.analyze(clip), len(clip))


class ExternalVocoder:
    """Runs ``command`` (with ``{input}``/``{output}`` placeholders) to resynthesize a clip."""

    def __init__(self, command: str, hop_samples: int = 80):
        self.command = command
        self.hop_samples = hop_samples

    def resynthesize(self, clip: AudioClip) -> AudioClip:
        out = run_wav_command(self.command, clip, {}, ExternalToolFailure)
        if abs(len(out) - len(clip)) > self.hop_samples:
            raise ExternalToolFailure(
                f"external vocoder returned {len(out)} samples for a {len(clip)}-sample input"
            )
        return _fit_length(out, len(clip))


class PassThrough:
    """Identity stage; stands in for the vocoder or codec in diagnostics."""

    def resynthesize(self, clip: AudioClip) -> AudioClip:
        return clip

    def roundtrip(self, clip: AudioClip) -> AudioClip:
        return clip


def _fit_length(clip: AudioClip, n: int) -> AudioClip:
    x = clip.samples
    if x.shape[0] >= n:
        return clip.with_samples(x[:n])
    return clip.with_samples(np.concatenate([x, np.zeros(n - x.shape[0])]))


def run_wav_command(template: str, clip: AudioClip, extra: dict, error_cls) -> AudioClip:
    """Write ``clip`` to a temp WAV, run the templated command, read its output WAV."""
    with tempfile.TemporaryDirectory(prefix="replaydet-") as tmp:
        src = Path(tmp) / "input.wav"
        dst = Path(tmp) / "output.wav"
        save_wav(clip, src)
        args = [part.format(input=str(src), output=str(dst), **extra) for part in shlex.split(template)]
        try:
            proc = subprocess.run(args, capture_output=True, timeout=600)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise error_cls(f"could not run {args[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            raise error_cls(
                f"{args[0]!r} exited with {proc.returncode}: {proc.stderr.decode(errors='replace')[-500:]}"
            )
        if not dst.exists():
            raise error_cls(f"{args[0]!r} did not write {dst.name}")
        try:
            out = load_wav(dst)
        except Exception as exc:
            raise error_cls(f"unreadable output from {args[0]!r}: {exc}") from exc
    return out


def make_vocoder(kind: str = "builtin", command: str | None = None, config: VocoderConfig | None = None):
    if kind == "builtin":
        return SimpleVocoder(config)
    if kind == "external":
        if not command:
            raise ValueError("external vocoder requires a command template")
        return ExternalVocoder(command)
    if kind == "none":
        return PassThrough()
    raise ValueError(f"unknown vocoder kind {kind!r}")
