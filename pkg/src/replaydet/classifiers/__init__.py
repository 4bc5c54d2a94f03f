"""One-class scorers. Each exposes ``fit(x)``, ``score(x, seed)`` (higher = more bonafide),
``config()`` and ``to_arrays``/``from_arrays`` for the model file."""

from .anogan import AnoGAN
from .model_io import load_model, save_model
from .ocsvm import OneClassSVM
from .vae import VAE

KINDS = ("vae", "ocsvm", "anogan")


def make_classifier(kind: str, **params):
    if kind == "vae":
        return VAE(**params)
    if kind == "ocsvm":
        return OneClassSVM(**params)
    if kind == "anogan":
        return AnoGAN(**params)
    raise ValueError(f"unknown classifier {kind!r}; choose from {KINDS}")


__all__ = ["AnoGAN", "KINDS", "OneClassSVM", "VAE", "load_model", "make_classifier", "save_model"]
