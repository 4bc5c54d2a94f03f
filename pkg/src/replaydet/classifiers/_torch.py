"""Small torch helpers shared by the neural scorers."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import torch


@contextmanager
def seeded(seed: int):
    """Seed torch's global RNG for layer init without leaking state; yields a batch generator."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield torch.Generator().manual_seed(seed + 1)


def batches(n: int, size: int, gen: torch.Generator):
    perm = torch.randperm(n, generator=gen)
    for start in range(0, n, size):
        yield perm[start : start + size]


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def __call__(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"input.mean": self.mean, "input.scale": self.scale}

    @classmethod
    def from_arrays(cls, arrays: dict) -> "Standardizer":
        return cls(arrays["input.mean"], arrays["input.scale"])


def state_to_arrays(module: torch.nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().cpu().numpy().astype(np.float64) for k, v in module.state_dict().items()}


def state_from_arrays(module: torch.nn.Module, arrays: dict, prefix: str = "") -> None:
    state = {k: torch.from_numpy(np.array(arrays[prefix + k])) for k in module.state_dict()}
    module.load_state_dict(state)
