"""Equal error rate and the score/key text formats.

Scores are bonafide confidences: a threshold ``t`` accepts any utterance with
score >= t. FRR(t) is the fraction of bonafide below ``t``, FAR(t) the fraction
of spoofs at or above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MalformedLine, MissingKey, SingleClassInput
from .features import atomic_write

LABELS = ("bonafide", "spoof")


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_bonafide: int
    n_spoof: int


def error_rates(bonafide, spoof, thresholds) -> tuple[np.ndarray, np.ndarray]:
    b = np.sort(np.asarray(bonafide, dtype=np.float64))
    s = np.sort(np.asarray(spoof, dtype=np.float64))
    t = np.asarray(thresholds, dtype=np.float64)
    frr = np.searchsorted(b, t, side="left") / b.shape[0]
    far = 1.0 - np.searchsorted(s, t, side="left") / s.shape[0]
    return frr, far


def compute_eer(bonafide, spoof) -> EerResult:
    """EER by sweeping every distinct score as a threshold.

    FRR - FAR is non-decreasing in the threshold; the EER is taken where it
    changes sign, linearly interpolating both rates between the bracketing
    thresholds (in threshold-index space, so only ranks matter).
    """
    b = np.asarray(bonafide, dtype=np.float64).ravel()
    s = np.asarray(spoof, dtype=np.float64).ravel()
    if b.size == 0 or s.size == 0:
        raise SingleClassInput("EER needs at least one bonafide and one spoof score")
    uniq = np.unique(np.concatenate([b, s]))
    # one sentinel above every score so FAR can reach 0
    thr = np.append(uniq, np.inf)
    frr, far = error_rates(b, s, thr)
    diff = frr - far
    # diff starts at -1 (lowest score: FRR 0, FAR 1) and ends at +1 (sentinel)
    k = int(np.searchsorted(diff, 0.0, side="left"))
    if diff[k] == 0.0:
        eer, t = frr[k], thr[k]
    else:
        d0, d1 = diff[k - 1], diff[k]
        w = -d0 / (d1 - d0)
        # both rates agree at the interpolated point, so either one is the EER
        eer = (1 - w) * frr[k - 1] + w * frr[k]
        t = thr[k - 1] + w * (thr[k] - thr[k - 1]) if np.isfinite(thr[k]) else thr[k - 1]
    return EerResult(float(eer), float(t), int(b.size), int(s.size))


# -- score and key files -----------------------------------------------------

def write_scores(records, path) -> None:
    """``records``: iterable of (utt_id, score). One "utt_id score" line each, %.12g."""
    lines = []
    for utt, score in records:
        if " " in utt or "\t" in utt or not utt:
            raise ValueError(f"utterance id {utt!r} must be non-empty without whitespace")
        lines.append(f"{utt} {float(score):.12g}\n")
    atomic_write(path, "".join(lines).encode("utf-8"))


def _pairs(path):
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise MalformedLine(path, no, line.rstrip("\n"))
            yield no, line, parts


def read_scores(path) -> dict[str, float]:
    out = {}
    for no, line, (utt, val) in _pairs(path):
        try:
            score = float(val)
        except ValueError:
            raise MalformedLine(path, no, line.rstrip("\n")) from None
        if not np.isfinite(score) or utt in out:
            raise MalformedLine(path, no, line.rstrip("\n"))
        out[utt] = score
    return out


def write_keys(records, path) -> None:
    lines = []
    for utt, label in records:
        if label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {label!r}")
        lines.append(f"{utt} {label}\n")
    atomic_write(path, "".join(lines).encode("utf-8"))


def read_keys(path) -> dict[str, str]:
    out = {}
    for no, line, (utt, label) in _pairs(path):
        if label not in LABELS or utt in out:
            raise MalformedLine(path, no, line.rstrip("\n"))
        out[utt] = label
    return out


def join_scores(scores: dict[str, float], keys: dict[str, str]) -> tuple[np.ndarray, np.ndarray]:
    """Split scores into (bonafide, spoof) arrays; every scored id must have a key."""
    missing = set(scores) - set(keys)
    if missing:
        raise MissingKey(missing)
    ids = sorted(scores)
    bona = np.array([scores[u] for u in ids if keys[u] == "bonafide"])
    spoof = np.array([scores[u] for u in ids if keys[u] == "spoof"])
    return bona, spoof
