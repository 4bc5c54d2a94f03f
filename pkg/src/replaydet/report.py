"""Report figures for an evaluated score set."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import norm  # noqa: E402

from .evaluation import EerResult, error_rates  # noqa: E402


def score_histogram(bonafide, spoof, result: EerResult, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    both = np.concatenate([bonafide, spoof])
    bins = np.linspace(both.min(), both.max(), 31) if both.max() > both.min() else 10
    ax.hist(bonafide, bins=bins, alpha=0.6, label=f"bonafide (n={len(bonafide)})")
    ax.hist(spoof, bins=bins, alpha=0.6, label=f"spoof (n={len(spoof)})")
    ax.axvline(result.threshold, color="k", ls="--", lw=1, label=f"EER threshold ({100 * result.eer:.2f}%)")
    ax.set_xlabel("score (higher = more bonafide)")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def det_curve(bonafide, spoof, result: EerResult, path) -> Path:
    thr = np.append(np.unique(np.concatenate([bonafide, spoof])), np.inf)
    frr, far = error_rates(bonafide, spoof, thr)
    lo, hi = 1e-3, 1 - 1e-3
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(norm.ppf(np.clip(far, lo, hi)), norm.ppf(np.clip(frr, lo, hi)), lw=1.5)
    e = norm.ppf(np.clip(result.eer, lo, hi))
    ax.plot([e], [e], "ro", label=f"EER {100 * result.eer:.2f}%")
    ticks = np.array([0.001, 0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99])
    ax.set_xticks(norm.ppf(ticks), [f"{100 * t:g}" for t in ticks])
    ax.set_yticks(norm.ppf(ticks), [f"{100 * t:g}" for t in ticks])
    ax.set_xlabel("false acceptance rate (%)")
    ax.set_ylabel("false rejection rate (%)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
