"""Synthetic bonafide/replayed corpus for desk-scale experiments.

Bonafide utterances come from a cascade formant synthesizer with occasional
fricative bursts; replayed versions pass those through a randomized
loudspeaker/room/microphone channel.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import astuple, dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audio_io import AudioClip, save_wav
from .errors import PreconditionViolation

log = logging.getLogger(__name__)

SR = 16000
F0_RANGE = (80.0, 300.0)

# (F1, F2, F3) in Hz for a handful of adult vowels.
VOWELS = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [300, 870, 2240],
    [530, 1840, 2480],
    [570, 840, 2410],
    [660, 1720, 2410],
    [490, 1350, 1690],
    [440, 1020, 2240],
], dtype=np.float64)
BANDWIDTHS = np.array([70.0, 100.0, 140.0])
BLOCK = 80

T60_RANGE = (0.1, 0.8)
DRR_RANGE_DB = (0.0, 12.0)
NONLINEARITY_RANGE = (0.0, 0.3)
BANDLIMIT_RANGE = (3400.0, 7000.0)
SNR_RANGE_DB = (15.0, 40.0)


def _resonate(x: np.ndarray, freqs: np.ndarray, bw: float) -> np.ndarray:
    """Two-pole resonator with unit DC gain and per-block centre frequency."""
    r = np.exp(-np.pi * bw / SR)
    y = np.empty_like(x)
    zi = np.zeros(2)
    for start in range(0, x.shape[0], BLOCK):
        f = freqs[min(start + BLOCK // 2, x.shape[0] - 1)]
        c = 2.0 * r * np.cos(2.0 * np.pi * f / SR)
        a = [1.0, -c, r * r]
        b = [1.0 - c + r * r]
        y[start : start + BLOCK], zi = signal.lfilter(b, a, x[start : start + BLOCK], zi=zi)
    return y


def generate_bonafide(seed: int, duration_s: float = 2.0) -> AudioClip:
    """Formant-synthesized vowel sequence, deterministic per seed."""
    if not 1.0 <= duration_s <= 10.0:
        raise PreconditionViolation(f"duration must lie in [1, 10] s, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * SR))
    t = np.arange(n) / SR

    f0_base = rng.uniform(95.0, 230.0)
    contour = (1.0 + 0.12 * np.sin(2 * np.pi * rng.uniform(0.3, 1.2) * t + rng.uniform(0, 2 * np.pi)))
    contour *= 1.0 - rng.uniform(0.0, 0.15) * t / duration_s
    f0 = np.clip(f0_base * contour, *F0_RANGE)

    # syllable plan: vowel targets with gaps, some gaps filled by fricatives
    formant_scale = rng.uniform(0.88, 1.15)
    centres, targets = [], []
    voicing = np.zeros(n)
    fricative = np.zeros(n)
    pos = int(rng.uniform(0.02, 0.08) * SR)
    while pos < n:
        length = int(rng.uniform(0.14, 0.32) * SR)
        end = min(pos + length, n)
        ramp = np.minimum(1.0, np.minimum(np.arange(end - pos), np.arange(end - pos)[::-1]) / (0.025 * SR))
        voicing[pos:end] = np.maximum(voicing[pos:end], ramp * rng.uniform(0.6, 1.0))
        centres.append((pos + end) / 2)
        targets.append(VOWELS[rng.integers(len(VOWELS))] * formant_scale * rng.uniform(0.95, 1.05, 3))
        gap = int(rng.uniform(0.03, 0.12) * SR)
        if rng.random() < 0.5 and end + gap < n:
            burst = np.hanning(gap) * rng.uniform(0.2, 0.5)
            fricative[end : end + gap] = burst
        pos = end + gap
    centres = np.asarray(centres)
    targets = np.asarray(targets)
    formants = np.stack([np.interp(np.arange(n), centres, targets[:, i]) for i in range(3)], axis=1)

    phase = np.cumsum(f0 / SR)
    pulses = np.zeros(n)
    pulses[np.flatnonzero(np.diff(np.floor(phase), prepend=0.0) > 0)] = 1.0
    glottal = signal.lfilter([1.0], [1.0, -0.96], pulses)
    glottal = np.diff(glottal, prepend=0.0)  # lip radiation
    breath = rng.standard_normal(n) * 0.02
    source = (glottal + breath) * voicing

    voiced = source
    for i in range(3):
        voiced = _resonate(voiced, formants[:, i], BANDWIDTHS[i])
    voiced /= np.max(np.abs(voiced)) + 1e-12

    hiss = signal.lfilter(*signal.butter(4, [2500.0, 7500.0], btype="band", fs=SR), rng.standard_normal(n))
    hiss = hiss / (np.std(hiss) + 1e-12) * fricative * 0.1
    y = voiced + hiss
    y *= rng.uniform(0.3, 0.9) / (np.max(np.abs(y)) + 1e-12)
    return AudioClip(y, SR)


@dataclass(frozen=True)
class ReplayChannelConfig:
    t60_s: float
    drr_db: float
    nonlinearity: float
    bandlimit_hz: float
    noise_snr_db: float
    seed: int

    def __post_init__(self):
        if not (self.t60_s == 0.0 or T60_RANGE[0] <= self.t60_s <= T60_RANGE[1]):
            raise PreconditionViolation(f"T60 {self.t60_s} outside {T60_RANGE} (0 = no reverb)")
        if not NONLINEARITY_RANGE[0] <= self.nonlinearity <= NONLINEARITY_RANGE[1]:
            raise PreconditionViolation(f"nonlinearity {self.nonlinearity} outside {NONLINEARITY_RANGE}")
        if not (BANDLIMIT_RANGE[0] <= self.bandlimit_hz <= BANDLIMIT_RANGE[1] or self.bandlimit_hz >= SR / 2):
            raise PreconditionViolation(f"bandlimit {self.bandlimit_hz} outside {BANDLIMIT_RANGE}")
        if self.noise_snr_db < SNR_RANGE_DB[0]:
            raise PreconditionViolation(f"noise SNR {self.noise_snr_db} below {SNR_RANGE_DB[0]} dB")

    @classmethod
    def random(cls, rng: np.random.Generator) -> "ReplayChannelConfig":
        return cls(
            t60_s=float(rng.uniform(*T60_RANGE)),
            drr_db=float(rng.uniform(*DRR_RANGE_DB)),
            nonlinearity=float(rng.uniform(*NONLINEARITY_RANGE)),
            bandlimit_hz=float(rng.uniform(*BANDLIMIT_RANGE)),
            noise_snr_db=float(rng.uniform(*SNR_RANGE_DB)),
            seed=int(rng.integers(2**31)),
        )

    @classmethod
    def neutral(cls) -> "ReplayChannelConfig":
        return cls(0.0, 0.0, 0.0, SR / 2, 100.0, 0)


def exponential_rir(t60_s: float, drr_db: float, rng: np.random.Generator, sr: int = SR) -> np.ndarray:
    """Unit direct path followed by a Gaussian tail decaying 60 dB over ``t60_s``."""
    if t60_s <= 0.0:
        return np.ones(1)
    n = max(2, int(t60_s * sr))
    t = np.arange(n) / sr
    tail = rng.standard_normal(n) * np.exp(-6.908 * t / t60_s)
    tail[0] = 0.0
    tail *= np.sqrt(10.0 ** (-drr_db / 10.0) / np.sum(tail ** 2))
    tail[0] = 1.0
    return tail


def lowpass_fir(x: np.ndarray, cutoff_hz: float, sr: int = SR, numtaps: int = 511) -> np.ndarray:
    if cutoff_hz >= sr / 2.0:
        return x
    taps = signal.firwin(numtaps, cutoff_hz, window=("kaiser", 8.6), fs=sr)
    return signal.fftconvolve(x, taps, mode="same")


def apply_replay_channel(clip: AudioClip, cfg: ReplayChannelConfig) -> AudioClip:
    """Loudspeaker soft-clip, room reverb, microphone band limit and noise."""
    rng = np.random.default_rng(cfg.seed)
    x = clip.samples
    n = x.shape[0]
    y = x - cfg.nonlinearity * x ** 3
    rir = exponential_rir(cfg.t60_s, cfg.drr_db, rng, clip.sample_rate_hz)
    if rir.shape[0] > 1:
        y = signal.fftconvolve(y, rir)[:n]
    y = lowpass_fir(y, cfg.bandlimit_hz, clip.sample_rate_hz)
    p_sig = np.mean(y ** 2)
    if p_sig > 0:
        noise = rng.standard_normal(n)
        y = y + noise * np.sqrt(p_sig / 10.0 ** (cfg.noise_snr_db / 10.0))
    peak_in, peak_out = clip.peak, float(np.max(np.abs(y)))
    if peak_out > 0:
        y = y * (peak_in / peak_out)
    return clip.with_samples(y)


@dataclass
class CorpusPaths:
    manifest: Path
    train_manifest: Path
    eval_manifest: Path
    eval_keys: Path


def build_corpus(n_bonafide: int, n_spoof: int, out_dir, seed: int = 0,
                 train_fraction: float = 0.5, duration_range=(1.0, 2.5)) -> CorpusPaths:
    """Write WAVs plus ``manifest.tsv``/``train.tsv``/``eval.tsv`` (utt_id, path, label).

    Spoofed clips replay bonafide content from the same split. Train and eval
    spoofs use separately drawn channel configurations.
    """
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).spawn(4)
    dur_rng = np.random.default_rng(seeds[0])
    clip_seeds = np.random.default_rng(seeds[1]).integers(2**31, size=n_bonafide)

    n_b_train = int(round(n_bonafide * train_fraction))
    n_s_train = int(round(n_spoof * train_fraction))
    durations = dur_rng.uniform(*duration_range, size=n_bonafide)
    bonafide = [generate_bonafide(int(s), float(d)) for s, d in zip(clip_seeds, durations)]

    chan_train = np.random.default_rng(seeds[2])
    chan_eval = np.random.default_rng(seeds[3])
    rows: dict[str, list] = {"train": [], "eval": []}
    configs: dict[str, set] = {"train": set(), "eval": set()}

    for i, clip in enumerate(bonafide):
        split = "train" if i < n_b_train else "eval"
        utt = f"B{i:05d}"
        save_wav(clip, out / "wav" / f"{utt}.wav")
        rows[split].append((utt, f"wav/{utt}.wav", "bonafide"))

    for j in range(n_spoof):
        split = "train" if j < n_s_train else "eval"
        pool = range(0, n_b_train) if split == "train" else range(n_b_train, n_bonafide)
        if len(pool) == 0:
            pool = range(n_bonafide)
        src = bonafide[pool[j % len(pool)]]
        cfg = ReplayChannelConfig.random(chan_train if split == "train" else chan_eval)
        configs[split].add(astuple(cfg))
        utt = f"S{j:05d}"
        save_wav(apply_replay_channel(src, cfg), out / "wav" / f"{utt}.wav")
        rows[split].append((utt, f"wav/{utt}.wav", "spoof"))

    if configs["train"] & configs["eval"]:
        raise AssertionError("train and eval channel configurations overlap")

    paths = CorpusPaths(out / "manifest.tsv", out / "train.tsv", out / "eval.tsv", out / "eval_keys.txt")
    write_manifest(paths.manifest, rows["train"] + rows["eval"])
    write_manifest(paths.train_manifest, rows["train"])
    write_manifest(paths.eval_manifest, rows["eval"])
    with open(paths.eval_keys, "w") as fh:
        for utt, _, label in rows["eval"]:
            fh.write(f"{utt} {label}\n")
    log.info("wrote %d bonafide + %d spoof utterances to %s", n_bonafide, n_spoof, out)
    return paths


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    path: Path
    label: str


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerows(rows)


def read_manifest(path) -> list[ManifestEntry]:
    """Parse a manifest TSV; relative audio paths resolve against the manifest's folder."""
    from .errors import MalformedLine

    base = Path(path).parent
    entries = []
    with open(path, newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("bonafide", "spoof"):
                raise MalformedLine(path, line_no, line)
            audio = Path(parts[1])
            entries.append(ManifestEntry(parts[0], audio if audio.is_absolute() else base / audio, parts[2]))
    return entries
