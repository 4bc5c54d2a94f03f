"""End-to-end experiment steps: extract, train, score, eval.

Work directory layout::

    cache/xx/<sha256>.rdft   one cached residual per (audio content, settings, variant)
    features/train.rdft      raw residuals of the train split (originals + augmented copies)
    features/eval.rdft       raw residuals of the eval split
    model.rdmd               classifier + PCA
    scores.txt               "utt_id score" per eval utterance
    report.tsv, *.png        EER report and figures
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import load_wav
from .augment import Augmenter, AugmentSpec
from .classifiers import load_model, make_classifier, save_model
from .config import ExperimentConfig, flatten
from .errors import DataError, PreconditionViolation, ReplayDetError
from .evaluation import compute_eer, join_scores, read_keys, read_scores, write_scores
from .features import FeatureExtractor, apply_pca, fit_pca, read_feature_cache, write_feature_cache
from .report import det_curve, score_histogram
from .synth_corpus import read_manifest

log = logging.getLogger(__name__)

AUG_SEP = "+"
DEFAULT_WORKDIR = "replaydet-work"


def resolve_workdir(cfg: ExperimentConfig, flag: str | None = None) -> Path:
    wd = flag or cfg.paths.workdir or os.environ.get("REPLAYDET_WORKDIR") or DEFAULT_WORKDIR
    path = Path(wd)
    path.mkdir(parents=True, exist_ok=True)
    return path


def feature_settings(cfg: ExperimentConfig) -> dict:
    """Everything that changes a raw residual, except the audio and the variant."""
    return {"spectrogram": asdict(cfg.spectrogram), "vocoder": asdict(cfg.vocoder), "codec": asdict(cfg.codec)}


def augment_spec(cfg: ExperimentConfig, kind: str) -> AugmentSpec:
    a = cfg.augment
    source = a.noise_dir if kind == "add_noise" else a.rir_dir if kind == "add_reverb" else None
    return AugmentSpec(kind, a.mask_max_len, a.max_prop, a.snr_db, tuple(a.speed_range), a.emph_coeff, source)


@dataclass
class _Job:
    utt_id: str
    path: str
    variant: str | None
    cfg: ExperimentConfig
    cache_dir: str


def _variant_seed(master: int, digest: str, variant: str) -> int:
    h = hashlib.sha256(f"{master}:{digest}:{variant}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _run_job(job: _Job):
    """(cache hit?, vector or None, error message or None)"""
    try:
        with open(job.path, "rb") as fh:
            audio = fh.read()
        digest = hashlib.sha256(audio).hexdigest()
        settings = feature_settings(job.cfg)
        if job.variant:
            settings["variant"] = asdict(augment_spec(job.cfg, job.variant))
            settings["variant_seed"] = _variant_seed(job.cfg.seed, digest, job.variant)
        key = hashlib.sha256((digest + json.dumps(settings, sort_keys=True)).encode()).hexdigest()
        entry = Path(job.cache_dir) / key[:2] / f"{key}.rdft"
        if entry.exists():
            _, m = read_feature_cache(entry)
            return True, m[0], None
        clip = load_wav(job.path)
        extractor = FeatureExtractor(job.cfg.codec_config(), job.cfg.feature_config())
        if job.variant:
            rng = np.random.default_rng(settings["variant_seed"])
            aug = Augmenter(augment_spec(job.cfg, job.variant))
            if aug.spec.is_spectral:
                vec = extractor.extract(clip, aug.spectral(rng))
            else:
                vec = extractor.extract(aug.waveform(clip, rng))
        else:
            vec = extractor.extract(clip)
        entry.parent.mkdir(parents=True, exist_ok=True)
        write_feature_cache(entry, [key], vec[None, :])
        return False, vec, None
    except ReplayDetError as exc:
        return False, None, f"{type(exc).__name__}: {exc}"
    except (OSError, ValueError) as exc:
        return False, None, f"{type(exc).__name__}: {exc}"


@dataclass
class ExtractReport:
    counts: dict = field(default_factory=dict)     # split -> vectors written
    cache_hits: int = 0
    computed: int = 0
    failures: list = field(default_factory=list)   # (utt_id, message)
    total: int = 0

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / self.total if self.total else 0.0


def cmd_extract(cfg: ExperimentConfig, workdir: Path, jobs: int = 1) -> ExtractReport:
    report = ExtractReport()
    cache = workdir / "cache"
    feats = workdir / "features"
    feats.mkdir(parents=True, exist_ok=True)
    splits = {"train": cfg.paths.train_manifest, "eval": cfg.paths.eval_manifest}
    if not any(splits.values()):
        raise PreconditionViolation("set paths.train_manifest and/or paths.eval_manifest")
    for split, manifest in splits.items():
        if not manifest:
            continue
        rows = read_manifest(manifest)
        variants = [None] + (list(cfg.augment.kinds) if split == "train" else [])
        work = [_Job(r.utt_id, str(r.path), v, cfg, str(cache)) for r in rows for v in variants]
        if jobs > 1 and len(work) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_job, work, chunksize=max(1, len(work) // (4 * jobs))))
        else:
            results = [_run_job(j) for j in work]
        ids, vecs = [], []
        for job, (hit, vec, err) in zip(work, results):
            name = job.utt_id if job.variant is None else f"{job.utt_id}{AUG_SEP}{job.variant}"
            report.total += 1
            if err is not None:
                log.warning("skipping %s: %s", name, err)
                report.failures.append((name, err))
                continue
            report.cache_hits += hit
            report.computed += not hit
            ids.append(name)
            vecs.append(vec)
        dim = cfg.feature_config().dim
        matrix = np.stack(vecs) if vecs else np.zeros((0, dim))
        write_feature_cache(feats / f"{split}.rdft", ids, matrix)
        report.counts[split] = len(ids)
        log.info("%s: %d features (%d cache hits)", split, len(ids), report.cache_hits)
    return report


def _base_id(name: str) -> str:
    return name.split(AUG_SEP, 1)[0]


def model_echo(cfg: ExperimentConfig) -> dict:
    """Config echoed into the model file; paths are left out so reruns elsewhere match byte for byte."""
    return {k: v for k, v in flatten(cfg).items() if not k.startswith("paths.")}


def cmd_train(cfg: ExperimentConfig, workdir: Path, model_path: Path | None = None) -> Path:
    if not cfg.paths.train_manifest:
        raise PreconditionViolation("paths.train_manifest is required for training")
    labels = {r.utt_id: r.label for r in read_manifest(cfg.paths.train_manifest)}
    ids, x = read_feature_cache(workdir / "features" / "train.rdft")
    keep = [i for i, name in enumerate(ids) if labels.get(_base_id(name)) == "bonafide"]
    if len(keep) < 2:
        raise DataError(f"only {len(keep)} bonafide training features available")
    x = x[keep]
    pca = fit_pca(x, cfg.pca.energy)
    if pca.degenerate:
        log.warning("PCA input is degenerate; using a single component")
    z = apply_pca(pca, x)
    model = make_classifier(cfg.classifier.kind, **cfg.classifier.params(cfg.seed))
    model.fit(z)
    path = Path(model_path) if model_path else workdir / "model.rdmd"
    save_model(path, model, pca, model_echo(cfg))
    log.info("trained %s on %d bonafide vectors (PCA %d -> %d dims)", model.kind, len(keep), x.shape[1], pca.k)
    return path


def cmd_score(cfg: ExperimentConfig, workdir: Path, model_path: Path | None = None,
              features_path: Path | None = None, scores_path: Path | None = None) -> Path:
    model, pca, echo = load_model(model_path or workdir / "model.rdmd")
    ids, x = read_feature_cache(features_path or workdir / "features" / "eval.rdft")
    if pca is not None:
        x = apply_pca(pca, x)
    scores = model.score(x, seed=cfg.seed) if len(ids) else np.zeros(0)
    out = Path(scores_path) if scores_path else workdir / "scores.txt"
    write_scores(zip(ids, scores), out)
    return out


def keys_from_manifest(manifest) -> dict[str, str]:
    return {r.utt_id: r.label for r in read_manifest(manifest)}


def cmd_eval(scores_path, keys, out_dir: Path) -> dict:
    """``keys`` is a key-file path or an already loaded id -> label mapping."""
    scores = read_scores(scores_path)
    key_map = keys if isinstance(keys, dict) else read_keys(keys)
    bona, spoof = join_scores(scores, key_map)
    result = compute_eer(bona, spoof)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [("eer_percent", f"{100 * result.eer:.4f}"), ("threshold", f"{result.threshold:.12g}"),
            ("n_bonafide", str(result.n_bonafide)), ("n_spoof", str(result.n_spoof))]
    with open(out_dir / "report.tsv", "w") as fh:
        fh.write("metric\tvalue\n")
        fh.writelines(f"{k}\t{v}\n" for k, v in rows)
    figures = [score_histogram(bona, spoof, result, out_dir / "score_hist.png"),
               det_curve(bona, spoof, result, out_dir / "det.png")]
    return {"result": result, "report": out_dir / "report.tsv", "figures": figures}


def run_all(cfg: ExperimentConfig, workdir: Path, jobs: int = 1) -> dict:
    ext = cmd_extract(cfg, workdir, jobs)
    model = cmd_train(cfg, workdir)
    scores = cmd_score(cfg, workdir, model)
    ev = cmd_eval(scores, keys_from_manifest(cfg.paths.eval_manifest), workdir)
    return {"extract": ext, "model": model, "scores": scores, **ev}


def compare_classifiers(cfg: ExperimentConfig, workdir: Path, kinds=("vae", "ocsvm", "anogan"),
                        jobs: int = 1) -> dict[str, float]:
    """EER of each classifier kind on the configured manifests, sharing one feature extraction."""
    rep = cmd_extract(cfg, workdir, jobs)
    if rep.failures:
        raise DataError(f"{len(rep.failures)} extraction failures, first: {rep.failures[0]}")
    keys = keys_from_manifest(cfg.paths.eval_manifest)
    out = {}
    for kind in kinds:
        cfg.classifier.kind = kind
        sub = workdir / kind
        sub.mkdir(exist_ok=True)
        model = cmd_train(cfg, workdir, sub / "model.rdmd")
        scores = cmd_score(cfg, workdir, model, scores_path=sub / "scores.txt")
        out[kind] = cmd_eval(scores, keys, sub)["result"].eer
    return out
