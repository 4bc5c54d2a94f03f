"""Channel-residual features and their PCA reduction.

The raw feature of an utterance is the frame-averaged log spectrogram of the
clip minus that of its vocoded and codec-roundtripped copy. Both branches go
through the same STFT settings, so the frames line up one to one.
"""

from __future__ import annotations

import io
import os
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .audio_io import AudioClip
from .codec import Codec, CodecConfig
from .dsp import FFT_SIZE, FRAME_MS, HOP_MS, NUM_MEL, Spectrogram, mel_project, stft_log_spectrogram
from .errors import ClipTooShort, CorruptFile, DimensionMismatch, PreconditionViolation
from .vocoder import VocoderConfig, make_vocoder

MIN_CLIP_MS = 100.0
PCA_ENERGY = 0.98

CACHE_MAGIC = b"RDFT"
CACHE_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    frame_ms: float = FRAME_MS
    hop_ms: float = HOP_MS
    fft_size: int = FFT_SIZE
    scale: str = "linear"
    num_mel: int = NUM_MEL
    vocoder: str = "builtin"
    vocoder_command: str | None = None
    vocoder_seed: int = 0

    def __post_init__(self):
        if self.scale not in ("linear", "mel"):
            raise PreconditionViolation(f"spectrogram scale must be 'linear' or 'mel', got {self.scale!r}")

    @property
    def dim(self) -> int:
        return self.num_mel if self.scale == "mel" else self.fft_size // 2


def log_spectrogram(clip: AudioClip, cfg: FeatureConfig) -> Spectrogram:
    spec = stft_log_spectrogram(clip, cfg.frame_ms, cfg.hop_ms, cfg.fft_size)
    if cfg.scale == "mel":
        spec = mel_project(spec, cfg.num_mel)
    return spec


class FeatureExtractor:
    """Vocoder and codec stages bound to one configuration.

    ``vocoder``/``codec`` may be replaced by any object with ``resynthesize``/
    ``roundtrip`` methods; ``vocoder.PassThrough`` gives the identity branch.
    """

    def __init__(self, codec_config: CodecConfig | None = None, config: FeatureConfig | None = None,
                 vocoder=None, codec=None):
        self.config = config or FeatureConfig()
        self.codec_config = codec_config or CodecConfig()
        if vocoder is None:
            vocoder = make_vocoder(self.config.vocoder, self.config.vocoder_command,
                                   VocoderConfig(seed=self.config.vocoder_seed))
        self.vocoder = vocoder
        self.codec = codec if codec is not None else Codec(self.codec_config)

    def processed(self, clip: AudioClip) -> AudioClip:
        return self.codec.roundtrip(self.vocoder.resynthesize(clip))

    def spectrogram_pair(self, clip: AudioClip) -> tuple[Spectrogram, Spectrogram]:
        if len(clip) < clip.sample_rate_hz * MIN_CLIP_MS / 1000.0:
            raise ClipTooShort(f"feature extraction needs >= {MIN_CLIP_MS:.0f} ms, got {1000 * clip.duration_s:.1f} ms")
        orig = log_spectrogram(clip, self.config)
        proc = log_spectrogram(self.processed(clip), self.config)
        if orig.values.shape != proc.values.shape:
            raise DimensionMismatch(f"branch spectrograms differ in shape: {orig.values.shape} vs {proc.values.shape}")
        return orig, proc

    def extract(self, clip: AudioClip, spec_transform: Callable | None = None) -> np.ndarray:
        """Residual feature vector; ``spec_transform(orig, proc)`` may edit both spectrograms first."""
        orig, proc = self.spectrogram_pair(clip)
        if spec_transform is not None:
            orig, proc = spec_transform(orig, proc)
        f = orig.values.mean(axis=0) - proc.values.mean(axis=0)
        if not np.all(np.isfinite(f)):
            raise DimensionMismatch("non-finite residual feature")
        return f


def extract_raw(clip: AudioClip, codec_config: CodecConfig | None = None,
                pipeline_config: FeatureConfig | None = None, **stages) -> np.ndarray:
    return FeatureExtractor(codec_config, pipeline_config, **stages).extract(clip)


@dataclass
class PcaTransform:
    mean: np.ndarray
    components: np.ndarray  # (dim, k), orthonormal columns
    explained_energy_fraction: float
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    degenerate: bool = False

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[1]

    def transform(self, features) -> np.ndarray:
        return apply_pca(self, features)

    def inverse(self, reduced) -> np.ndarray:
        return np.asarray(reduced) @ self.components.T + self.mean


def fit_pca(features, energy: float = PCA_ENERGY) -> PcaTransform:
    """PCA keeping the fewest leading components whose eigenvalue mass reaches ``energy``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise PreconditionViolation("PCA needs a (n >= 2, dim) feature matrix")
    if not 0.0 < energy <= 1.0:
        raise PreconditionViolation(f"energy fraction must lie in (0, 1], got {energy}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = float(evals.sum())
    if total <= 0.0:
        warnings.warn("all training features are identical; keeping a single PCA component",
                      RuntimeWarning, stacklevel=2)
        return PcaTransform(mean, evecs[:, :1], 1.0, evals, degenerate=True)
    frac = np.cumsum(evals) / total
    # tolerate rounding in the cumulative sum right at the threshold
    k = int(np.searchsorted(frac, energy - 1e-12)) + 1
    k = min(k, x.shape[1])
    comps = evecs[:, :k]
    # deterministic sign: largest-magnitude entry of each column positive
    signs = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(k)])
    comps = comps * np.where(signs == 0, 1.0, signs)
    return PcaTransform(mean, comps, float(frac[k - 1]), evals)


def apply_pca(t: PcaTransform, features) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != t.input_dim:
        raise DimensionMismatch(f"feature dim {f.shape[-1]} does not match PCA input dim {t.input_dim}")
    return (f - t.mean) @ t.components


def pca_to_arrays(t: PcaTransform) -> dict[str, np.ndarray]:
    return {
        "pca.mean": t.mean,
        "pca.components": t.components,
        "pca.eigenvalues": t.eigenvalues,
        "pca.meta": np.array([t.explained_energy_fraction, float(t.degenerate)]),
    }


def pca_from_arrays(arrays: dict) -> PcaTransform:
    meta = arrays["pca.meta"]
    return PcaTransform(arrays["pca.mean"], arrays["pca.components"], float(meta[0]),
                        arrays["pca.eigenvalues"], bool(meta[1]))


# -- feature cache -----------------------------------------------------------

def write_feature_cache(path, ids, matrix) -> None:
    """RDFT file: header, little-endian float64 rows, then length-prefixed UTF-8 ids."""
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<f8"))
    ids = list(ids)
    if m.ndim != 2:
        m = m.reshape(len(ids), -1)
    if m.shape[0] != len(ids):
        raise PreconditionViolation(f"{m.shape[0]} rows but {len(ids)} ids")
    buf = io.BytesIO()
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack("<III", CACHE_VERSION, m.shape[1], m.shape[0]))
    buf.write(m.tobytes())
    for utt in ids:
        raw = utt.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    atomic_write(path, buf.getvalue())


def read_feature_cache(path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != CACHE_MAGIC:
        raise CorruptFile(f"{path}: not a feature cache")
    version, dim, count = struct.unpack_from("<III", data, 4)
    if version != CACHE_VERSION:
        raise CorruptFile(f"{path}: unsupported cache version {version}")
    end = 16 + 8 * dim * count
    if len(data) < end:
        raise CorruptFile(f"{path}: truncated matrix")
    matrix = np.frombuffer(data[16:end], dtype="<f8").reshape(count, dim).astype(np.float64)
    ids = []
    pos = end
    for _ in range(count):
        if pos + 4 > len(data):
            raise CorruptFile(f"{path}: truncated id table")
        (n,) = struct.unpack_from("<I", data, pos)
        ids.append(data[pos + 4 : pos + 4 + n].decode("utf-8"))
        pos += 4 + n
    if pos != len(data):
        raise CorruptFile(f"{path}: trailing bytes after id table")
    return ids, matrix


def atomic_write(path, payload: bytes) -> None:
    tmp = f"{os.fspath(path)}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
