"""Experiment configuration as nested dataclasses with a flat dotted text form.

A config file holds ``section.key=value`` lines; ``#`` starts a comment.
Values are parsed by the type of the field's default, tuples as
comma-separated lists, ``none`` as None for optional strings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .codec import CodecConfig
from .errors import PreconditionViolation
from .features import FeatureConfig


@dataclass
class CodecSection:
    bitrate_bps: int = 16000
    mode: str = "builtin"
    command: str | None = None

    def build(self) -> CodecConfig:
        return CodecConfig(bitrate_bps=self.bitrate_bps, mode=self.mode, command=self.command)


@dataclass
class SpectrogramSection:
    frame_ms: float = 50.0
    hop_ms: float = 25.0
    fft: int = 1024
    scale: str = "linear"
    num_mel: int = 80


@dataclass
class VocoderSection:
    kind: str = "builtin"
    command: str | None = None
    seed: int = 0


@dataclass
class PcaSection:
    energy: float = 0.98


@dataclass
class VaeSection:
    epochs: int = 100
    lr: float = 1e-3
    batch: int = 32
    num_samples: int = 10


@dataclass
class OcsvmSection:
    nu: float = 0.5
    tol: float = 1e-3


@dataclass
class AnoganSection:
    epochs: int = 100
    lr: float = 1e-3
    batch: int = 32
    z_dim: int = 64
    search_iters: int = 100
    search_lr: float = 0.01
    restarts: int = 3


@dataclass
class ClassifierSection:
    kind: str = "ocsvm"
    vae: VaeSection = field(default_factory=VaeSection)
    ocsvm: OcsvmSection = field(default_factory=OcsvmSection)
    anogan: AnoganSection = field(default_factory=AnoganSection)

    def params(self, seed: int) -> dict:
        if self.kind == "ocsvm":
            return dataclasses.asdict(self.ocsvm)
        sect = self.vae if self.kind == "vae" else self.anogan
        return dict(dataclasses.asdict(sect), seed=seed)


@dataclass
class AugmentSection:
    kinds: tuple = ()
    mask_max_len: int = 80
    max_prop: float = 1.0
    snr_db: float = 10.0
    speed_range: tuple = (0.9, 1.1)
    emph_coeff: float = 0.97
    noise_dir: str | None = None
    rir_dir: str | None = None


@dataclass
class PathsSection:
    train_manifest: str | None = None
    eval_manifest: str | None = None
    workdir: str | None = None


@dataclass
class ExtractSection:
    max_failure_fraction: float = 0.01


@dataclass
class ExperimentConfig:
    seed: int = 0
    codec: CodecSection = field(default_factory=CodecSection)
    spectrogram: SpectrogramSection = field(default_factory=SpectrogramSection)
    vocoder: VocoderSection = field(default_factory=VocoderSection)
    pca: PcaSection = field(default_factory=PcaSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    paths: PathsSection = field(default_factory=PathsSection)
    extract: ExtractSection = field(default_factory=ExtractSection)

    def feature_config(self) -> FeatureConfig:
        s, v = self.spectrogram, self.vocoder
        return FeatureConfig(s.frame_ms, s.hop_ms, s.fft, s.scale, s.num_mel, v.kind, v.command, v.seed)

    def codec_config(self) -> CodecConfig:
        return self.codec.build()

    def validate(self) -> "ExperimentConfig":
        self.feature_config()
        self.codec_config()
        from .augment import AugmentSpec
        for kind in self.augment.kinds:
            AugmentSpec(kind)
        if self.classifier.kind not in ("vae", "ocsvm", "anogan"):
            raise PreconditionViolation(f"unknown classifier kind {self.classifier.kind!r}")
        return self


def _walk(obj, prefix=""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            yield from _walk(value, key + ".")
        else:
            yield key, obj, f.name, value


def flatten(cfg: ExperimentConfig) -> dict[str, object]:
    return {key: value for key, _, _, value in _walk(cfg)}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_text(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={_format(v)}\n" for k, v in flatten(cfg).items())


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], (int, float)):
                return tuple(float(s) for s in items)
            return tuple(items)
    except ValueError:
        raise PreconditionViolation(f"bad value {raw!r} for {key}") from None
    return None if raw.lower() == "none" else raw


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply ``(key, value-string)`` pairs in order; unknown keys are an error."""
    slots = {key: (owner, name, value) for key, owner, name, value in _walk(cfg)}
    for key, raw in pairs:
        if key not in slots:
            raise PreconditionViolation(f"unknown config key {key!r}")
        owner, name, current = slots[key]
        default = getattr(type(owner)(), name)
        setattr(owner, name, _parse(raw, default if default is not None else current, key))
    return cfg


def parse_lines(text: str, source="<config>") -> list[tuple[str, str]]:
    pairs = []
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionViolation(f"{source}:{no}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Defaults, then the file (if any), then ``key=value`` overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            apply_overrides(cfg, parse_lines(fh.read(), path))
    apply_overrides(cfg, parse_lines("\n".join(overrides), "--set"))
    return cfg.validate()
