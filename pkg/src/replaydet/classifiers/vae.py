"""Variational autoencoder scored by reconstruction probability.

Encoder and decoder are five affine layers each, widths shrinking
geometrically from the input dimension to the 2-d latent. The decoder is a
unit-variance Gaussian, so the per-sample log-likelihood is
-0.5 * ||x - x_hat||^2 - 0.5 * d * log(2 pi).
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from ..errors import DimensionMismatch, NonFiniteLoss, PreconditionViolation
from ._torch import Standardizer, batches, seeded, state_from_arrays, state_to_arrays

LATENT_DIM = 2
NUM_LAYERS = 5
NUM_LATENT_SAMPLES = 10
LOG_2PI = math.log(2.0 * math.pi)


def layer_widths(d: int, latent: int = LATENT_DIM, layers: int = NUM_LAYERS) -> list[int]:
    """Hidden widths d -> ... -> latent, geometric, never below the latent size."""
    return [d] + [max(latent, int(round(d * (latent / d) ** (i / layers)))) for i in range(1, layers)]


def _mlp(widths: list[int]) -> nn.Sequential:
    mods: list[nn.Module] = []
    for i in range(len(widths) - 1):
        mods.append(nn.Linear(widths[i], widths[i + 1]))
        if i < len(widths) - 2:
            mods.append(nn.ReLU())
    return nn.Sequential(*mods).double()


class VaeNet(nn.Module):
    def __init__(self, d: int, latent: int = LATENT_DIM):
        super().__init__()
        w = layer_widths(d, latent)
        self.latent = latent
        self.encoder = _mlp(w + [2 * latent])
        self.decoder = _mlp([latent] + w[::-1])

    def encode(self, x):
        h = self.encoder(x)
        return h[:, : self.latent], h[:, self.latent :]

    def loss(self, x, eps):
        """Negative ELBO averaged over the batch, with explicit reparameterization noise."""
        mu, logvar = self.encode(x)
        z = mu + torch.exp(0.5 * logvar) * eps
        recon = 0.5 * torch.sum((x - self.decoder(z)) ** 2, dim=1)
        return torch.mean(recon + kl_divergence(mu, logvar))


def kl_divergence(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)) per row."""
    return 0.5 * torch.sum(torch.exp(logvar) + mu * mu - 1.0 - logvar, dim=1)


class VAE:
    kind = "vae"

    def __init__(self, epochs: int = 100, lr: float = 1e-3, batch: int = 32, seed: int = 0,
                 num_samples: int = NUM_LATENT_SAMPLES, latent_dim: int = LATENT_DIM, standardize: bool = False):
        self.epochs = epochs
        self.lr = lr
        self.batch = batch
        self.seed = seed
        self.standardize = standardize
        self.num_samples = num_samples
        self.latent_dim = latent_dim
        self.net: VaeNet | None = None
        self.scaler: Standardizer | None = None
        self.history: list[float] = []

    def config(self) -> dict:
        return {"epochs": self.epochs, "lr": self.lr, "batch": self.batch, "seed": self.seed,
                "num_samples": self.num_samples, "latent_dim": self.latent_dim,
                "standardize": self.standardize, "input_dim": self.net_dim}

    @property
    def net_dim(self) -> int:
        return self.scaler.mean.shape[0] if self.scaler is not None else 0

    def fit(self, x) -> "VAE":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 10:
            raise PreconditionViolation("VAE training needs at least 10 feature vectors")
        self.scaler = Standardizer.fit(x) if self.standardize else Standardizer.identity(x.shape[1])
        xt = torch.from_numpy(self.scaler(x))
        with seeded(self.seed) as gen:
            self.net = VaeNet(x.shape[1], self.latent_dim)
            opt = torch.optim.Adam(self.net.parameters(), lr=self.lr)
            self.history = []
            for epoch in range(self.epochs):
                total = 0.0
                for idx in batches(x.shape[0], self.batch, gen):
                    xb = xt[idx]
                    eps = torch.randn(xb.shape[0], self.latent_dim, generator=gen, dtype=torch.float64)
                    loss = self.net.loss(xb, eps)
                    if not torch.isfinite(loss):
                        raise NonFiniteLoss(f"VAE loss became {loss.item()} at epoch {epoch + 1}")
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    total += loss.item() * xb.shape[0]
                self.history.append(total / x.shape[0])
        return self

    def reconstruction_error(self, x) -> np.ndarray:
        """Squared error of the decoded posterior mean, in model input units."""
        xt = torch.from_numpy(self.scaler(np.atleast_2d(x)))
        with torch.no_grad():
            mu, _ = self.net.encode(xt)
            return torch.sum((xt - self.net.decoder(mu)) ** 2, dim=1).numpy()

    def score(self, x, seed: int = 0) -> np.ndarray:
        """Mean decoder log-density over ``num_samples`` posterior draws; higher is more typical."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.net_dim:
            raise DimensionMismatch(f"expected {self.net_dim}-dim input, got {x.shape[1]}")
        xt = torch.from_numpy(self.scaler(x))
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            mu, logvar = self.net.encode(xt)
            std = torch.exp(0.5 * logvar)
            total = torch.zeros(x.shape[0], dtype=torch.float64)
            for _ in range(self.num_samples):
                z = mu + std * torch.randn(mu.shape, generator=gen, dtype=torch.float64)
                err = torch.sum((xt - self.net.decoder(z)) ** 2, dim=1)
                total += -0.5 * err - 0.5 * x.shape[1] * LOG_2PI
        return (total / self.num_samples).numpy()

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = state_to_arrays(self.net)
        out.update(self.scaler.to_arrays())
        out["history"] = np.asarray(self.history, dtype=np.float64)
        return out

    @classmethod
    def from_arrays(cls, config: dict, arrays: dict) -> "VAE":
        m = cls(config["epochs"], config["lr"], config["batch"], config["seed"],
                config["num_samples"], config["latent_dim"], config.get("standardize", False))
        m.scaler = Standardizer.from_arrays(arrays)
        m.net = VaeNet(config["input_dim"], config["latent_dim"])
        state_from_arrays(m.net, arrays)
        m.history = list(arrays.get("history", np.zeros(0)))
        return m
