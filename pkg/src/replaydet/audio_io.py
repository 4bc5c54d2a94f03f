"""WAV ingestion/output and band-limited resampling.

Everything downstream assumes 16 kHz mono float64 samples in [-1, 1];
``load_wav`` canonicalizes to that on the way in.
"""

from __future__ import annotations

import math
import os
import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import CorruptHeader, PreconditionViolation, UnsupportedFormat

CANONICAL_RATE = 16000
MAX_DURATION_S = 30.0

# Resampler design: Kaiser-windowed sinc, 64 taps per output phase.
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64
_CHUNK = 8192

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE

    def __post_init__(self):
        if int(self.sample_rate_hz) <= 0:
            raise PreconditionViolation(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate_hz)


def _parse_riff(data: bytes, path):
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise CorruptHeader(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise CorruptHeader(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
            if fmt is not None:
                break
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise CorruptHeader(f"{path}: missing fmt or data chunk")
    return fmt, payload


def load_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV, downmix to mono and resample to 16 kHz."""
    with open(path, "rb") as fh:
        data = fh.read()
    (tag, channels, rate, _, block_align, bits), payload = _parse_riff(data, path)
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {channels} channels (only mono/stereo supported)")
    if rate <= 0:
        raise CorruptHeader(f"{path}: sample rate {rate}")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise UnsupportedFormat(f"{path}: format tag {tag:#06x} with {bits} bits per sample")
    if block_align != channels * bits // 8:
        raise CorruptHeader(f"{path}: block align {block_align} inconsistent with {channels}x{bits} bits")
    n_frames = len(payload) // block_align
    raw = np.frombuffer(payload[: n_frames * block_align], dtype=dtype).astype(np.float64)
    samples = raw.reshape(n_frames, channels).mean(axis=1) * scale
    samples = np.clip(samples, -1.0, 1.0)
    clip = AudioClip(samples, rate)
    if rate != CANONICAL_RATE:
        clip = resample(clip, CANONICAL_RATE)
    limit = int(MAX_DURATION_S * CANONICAL_RATE)
    if len(clip) > limit:
        clip = clip.with_samples(clip.samples[:limit])
    return clip


def save_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit PCM mono. Samples outside [-1, 1] are clipped."""
    if len(clip) == 0:
        raise PreconditionViolation("cannot write an empty clip")
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    tmp = f"{os.fspath(path)}.tmp{os.getpid()}"
    with wave.open(tmp, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate_hz)
        wf.writeframes(pcm.tobytes())
    os.replace(tmp, path)


def _kaiser(x, beta=KAISER_BETA):
    # x in [-1, 1]; zero outside
    inside = np.abs(x) < 1.0
    arg = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    return np.where(inside, np.i0(beta * arg) / np.i0(beta), 0.0)


def resample_samples(x: np.ndarray, ratio: float, n_out: int | None = None) -> np.ndarray:
    """Resample by ``ratio`` = output rate / input rate with a windowed-sinc kernel.

    When downsampling the kernel is widened so it still spans 64 output periods,
    putting the anti-alias cutoff at the output Nyquist frequency.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n_out is None:
        n_out = int(round(n * ratio))
    if n_out <= 0 or n == 0:
        return np.zeros(max(n_out, 0))
    cutoff = min(1.0, ratio)
    half_width = (TAPS_PER_PHASE / 2) / cutoff
    n_taps = 2 * int(math.ceil(half_width))
    offsets = np.arange(-n_taps // 2 + 1, n_taps // 2 + 1)
    padded = np.concatenate([np.zeros(n_taps), x, np.zeros(n_taps)])
    out = np.empty(n_out)
    step = 1.0 / ratio
    for start in range(0, n_out, _CHUNK):
        m = np.arange(start, min(start + _CHUNK, n_out))
        t = m * step
        base = np.floor(t).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        tau = t[:, None] - idx
        kernel = cutoff * np.sinc(cutoff * tau) * _kaiser(tau / half_width)
        out[start : start + m.shape[0]] = np.sum(padded[idx + n_taps] * kernel, axis=1)
    return out


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Band-limited resampling to ``target_rate_hz``; length is round(n*target/src)."""
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz < 1000:
        raise PreconditionViolation(f"target rate must be >= 1000 Hz, got {target_rate_hz}")
    if target_rate_hz == clip.sample_rate_hz:
        return AudioClip(clip.samples.copy(), target_rate_hz)
    ratio = target_rate_hz / clip.sample_rate_hz
    return AudioClip(resample_samples(clip.samples, ratio), target_rate_hz)
