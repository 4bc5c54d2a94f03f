"""AnoGAN: a GAN trained on bonafide features, scored by latent search.

Feature vectors are handled as single-channel 1-D sequences. The generator
maps z through an affine layer, five stride-2 transposed convolutions and an
affine layer back to the feature length. The discriminator mirrors it with an
affine layer, five stride-2 convolutions and a logit head; its last
convolutional map is the feature used by the discrimination loss.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..errors import DimensionMismatch, NonFiniteLoss, PreconditionViolation
from ._torch import Standardizer, batches, seeded, state_from_arrays, state_to_arrays

Z_DIM = 64
CHANNELS = 64
NUM_CONV = 5
BASE_LEN = 2
D_INPUT_LEN = 128
RESIDUAL_WEIGHT = 0.5
SEARCH_ITERS = 100
SEARCH_LR = 0.01
RESTARTS = 3


def _channels(base: int) -> list[int]:
    return [max(1, base >> i) for i in range(NUM_CONV)] + [1]


class Generator(nn.Module):
    def __init__(self, d: int, z_dim: int = Z_DIM, channels: int = CHANNELS):
        super().__init__()
        ch = _channels(channels)
        self.ch0 = ch[0]
        self.fc_in = nn.Linear(z_dim, ch[0] * BASE_LEN)
        self.deconvs = nn.ModuleList(
            nn.ConvTranspose1d(ch[i], ch[i + 1], kernel_size=4, stride=2, padding=1) for i in range(NUM_CONV)
        )
        self.fc_out = nn.Linear(BASE_LEN << NUM_CONV, d)
        self.double()

    def forward(self, z):
        h = F.relu(self.fc_in(z)).view(z.shape[0], self.ch0, BASE_LEN)
        for i, layer in enumerate(self.deconvs):
            h = layer(h)
            if i < NUM_CONV - 1:
                h = F.relu(h)
        return self.fc_out(h.flatten(1))


class Discriminator(nn.Module):
    def __init__(self, d: int, channels: int = CHANNELS):
        super().__init__()
        ch = _channels(channels)[::-1]
        self.fc_in = nn.Linear(d, D_INPUT_LEN)
        self.convs = nn.ModuleList(
            nn.Conv1d(ch[i], ch[i + 1], kernel_size=4, stride=2, padding=1) for i in range(NUM_CONV)
        )
        self.head = nn.Linear(ch[-1] * (D_INPUT_LEN >> NUM_CONV), 1)
        self.double()

    def features(self, x):
        h = F.leaky_relu(self.fc_in(x), 0.2).unsqueeze(1)
        for layer in self.convs:
            h = F.leaky_relu(layer(h), 0.2)
        return h.flatten(1)

    def forward(self, x):
        return self.head(self.features(x)).squeeze(1)


def discriminator_loss(D: Discriminator, real, fake):
    lr, lf = D(real), D(fake)
    return (F.binary_cross_entropy_with_logits(lr, torch.ones_like(lr))
            + F.binary_cross_entropy_with_logits(lf, torch.zeros_like(lf)))


def generator_loss(D: Discriminator, fake):
    """Non-saturating loss: -log D(G(z))."""
    lf = D(fake)
    return F.binary_cross_entropy_with_logits(lf, torch.ones_like(lf))


def anomaly_loss(G: Generator, D: Discriminator, x, z, residual_weight: float = RESIDUAL_WEIGHT,
                 feature_weight: float | None = None):
    """Per-row weighted L1 residual plus L1 discriminator-feature distance."""
    if feature_weight is None:
        feature_weight = 1.0 - residual_weight
    gz = G(z)
    res = torch.sum(torch.abs(x - gz), dim=1)
    if feature_weight == 0.0:
        return residual_weight * res
    feat = torch.sum(torch.abs(D.features(x) - D.features(gz)), dim=1)
    return residual_weight * res + feature_weight * feat


class AnoGAN:
    kind = "anogan"

    def __init__(self, epochs: int = 100, lr: float = 1e-3, batch: int = 32, seed: int = 0,
                 z_dim: int = Z_DIM, channels: int = CHANNELS, search_iters: int = SEARCH_ITERS,
                 search_lr: float = SEARCH_LR, restarts: int = RESTARTS, standardize: bool = False):
        self.epochs = epochs
        self.lr = lr
        self.batch = batch
        self.seed = seed
        self.standardize = standardize
        self.z_dim = z_dim
        self.channels = channels
        self.search_iters = search_iters
        self.search_lr = search_lr
        self.restarts = restarts
        self.G: Generator | None = None
        self.D: Discriminator | None = None
        self.scaler: Standardizer | None = None
        self.history: list[tuple[float, float, float]] = []
        self.collapsed = False

    @property
    def input_dim(self) -> int:
        return self.scaler.mean.shape[0] if self.scaler is not None else 0

    def config(self) -> dict:
        return {"epochs": self.epochs, "lr": self.lr, "batch": self.batch, "seed": self.seed,
                "z_dim": self.z_dim, "channels": self.channels, "search_iters": self.search_iters,
                "search_lr": self.search_lr, "restarts": self.restarts,
                "standardize": self.standardize, "input_dim": self.input_dim}

    def fit(self, x) -> "AnoGAN":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 32:
            raise PreconditionViolation("AnoGAN training needs at least 32 feature vectors")
        self.scaler = Standardizer.fit(x) if self.standardize else Standardizer.identity(x.shape[1])
        xt = torch.from_numpy(self.scaler(x))
        d = x.shape[1]
        with seeded(self.seed) as gen:
            self.G = Generator(d, self.z_dim, self.channels)
            self.D = Discriminator(d, self.channels)
            opt_g = torch.optim.Adam(self.G.parameters(), lr=self.lr, betas=(0.5, 0.999))
            opt_d = torch.optim.Adam(self.D.parameters(), lr=self.lr, betas=(0.5, 0.999))
            self.history = []
            for epoch in range(self.epochs):
                sums = np.zeros(3)
                seen = 0
                for idx in batches(x.shape[0], self.batch, gen):
                    real = xt[idx]
                    nb = real.shape[0]
                    z = torch.randn(nb, self.z_dim, generator=gen, dtype=torch.float64)
                    fake = self.G(z)
                    d_loss = discriminator_loss(self.D, real, fake.detach())
                    opt_d.zero_grad()
                    d_loss.backward()
                    opt_d.step()
                    g_loss = generator_loss(self.D, self.G(z))
                    opt_g.zero_grad()
                    g_loss.backward()
                    opt_g.step()
                    if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
                        raise NonFiniteLoss(f"GAN loss became non-finite at epoch {epoch + 1}")
                    with torch.no_grad():
                        acc = 0.5 * ((self.D(real) > 0).double().mean() + (self.D(fake) <= 0).double().mean())
                    sums += nb * np.array([d_loss.item(), g_loss.item(), acc.item()])
                    seen += nb
                self.history.append(tuple(sums / seen))
        self._check_health()
        return self

    def _check_health(self):
        acc = self.history[-1][2] if self.history else 0.75
        if not 0.5 < acc < 1.0:
            warnings.warn(f"discriminator accuracy {acc:.3f} outside (0.5, 1.0); training may have collapsed",
                          RuntimeWarning, stacklevel=3)
        with torch.no_grad():
            gen = torch.Generator().manual_seed(self.seed)
            out = self.G(torch.randn(256, self.z_dim, generator=gen, dtype=torch.float64))
        self.collapsed = bool(out.var(dim=0).mean().item() < 1e-6)
        if self.collapsed:
            warnings.warn("generator output variance < 1e-6: mode collapse", RuntimeWarning, stacklevel=3)

    def generate(self, z) -> np.ndarray:
        """Generator output mapped back to feature units."""
        with torch.no_grad():
            g = self.G(torch.as_tensor(np.atleast_2d(z), dtype=torch.float64)).numpy()
        return g * self.scaler.scale + self.scaler.mean

    def search(self, x, seed: int = 0, iters: int | None = None, feature_weight: float | None = None):
        """Best anomaly loss and its latent per row, over ``restarts`` Adam searches."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim}-dim input, got {x.shape[1]}")
        iters = self.search_iters if iters is None else iters
        n, r = x.shape[0], self.restarts
        xt = torch.from_numpy(self.scaler(x)).repeat_interleave(r, dim=0)
        gen = torch.Generator().manual_seed(seed)
        z = torch.randn(n * r, self.z_dim, generator=gen, dtype=torch.float64).requires_grad_(True)
        opt = torch.optim.Adam([z], lr=self.search_lr)
        for p in list(self.G.parameters()) + list(self.D.parameters()):
            p.requires_grad_(False)
        try:
            best = torch.full((n * r,), np.inf, dtype=torch.float64)
            best_z = z.detach().clone()
            for step in range(iters + 1):
                loss = anomaly_loss(self.G, self.D, xt, z, feature_weight=feature_weight)
                with torch.no_grad():
                    better = loss < best
                    best = torch.where(better, loss, best)
                    best_z[better] = z[better]
                if step == iters:
                    break
                opt.zero_grad()
                loss.sum().backward()
                opt.step()
        finally:
            for p in list(self.G.parameters()) + list(self.D.parameters()):
                p.requires_grad_(True)
        best = best.view(n, r)
        pick = torch.argmin(best, dim=1)
        rows = torch.arange(n)
        return best[rows, pick].numpy(), best_z.view(n, r, -1)[rows, pick].numpy()

    def score(self, x, seed: int = 0) -> np.ndarray:
        return -self.search(x, seed)[0]

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = state_to_arrays(self.G, "G.")
        out.update(state_to_arrays(self.D, "D."))
        out.update(self.scaler.to_arrays())
        out["history"] = np.asarray(self.history, dtype=np.float64).reshape(-1, 3)
        return out

    @classmethod
    def from_arrays(cls, config: dict, arrays: dict) -> "AnoGAN":
        keys = ("epochs", "lr", "batch", "seed", "z_dim", "channels", "search_iters", "search_lr", "restarts")
        m = cls(**{k: config[k] for k in keys}, standardize=config.get("standardize", False))
        m.scaler = Standardizer.from_arrays(arrays)
        d = config["input_dim"]
        m.G = Generator(d, m.z_dim, m.channels)
        m.D = Discriminator(d, m.channels)
        state_from_arrays(m.G, arrays, "G.")
        state_from_arrays(m.D, arrays, "D.")
        m.history = [tuple(row) for row in arrays.get("history", np.zeros((0, 3)))]
        return m
