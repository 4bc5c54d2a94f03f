"""RDMD model files: a trained scorer plus the PCA transform it expects.

Layout (all little-endian):
    b"RDMD" | u32 version | u16 len + kind | u32 len + JSON config |
    u32 blob count | per blob: u16 len + name, u8 ndim, u32 dims..., float64 data
Blobs are written in sorted name order, so equal models give equal bytes.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from ..errors import CorruptFile
from ..features import PcaTransform, atomic_write, pca_from_arrays, pca_to_arrays

MAGIC = b"RDMD"
VERSION = 1


def _blobs_to_bytes(arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        a = np.ascontiguousarray(np.asarray(arrays[name], dtype="<f8"))
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
        buf.write(a.tobytes())
    return buf.getvalue()


def encode_model(kind: str, config: dict, arrays: dict[str, np.ndarray]) -> bytes:
    cfg = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tag = kind.encode("ascii")
    head = MAGIC + struct.pack("<I", VERSION) + struct.pack("<H", len(tag)) + tag
    return head + struct.pack("<I", len(cfg)) + cfg + _blobs_to_bytes(arrays)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFile(f"{self.path}: truncated model file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_model(data: bytes, path="<bytes>") -> tuple[str, dict, dict[str, np.ndarray]]:
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise CorruptFile(f"{path}: not a model file")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CorruptFile(f"{path}: unsupported model version {version}")
    (n,) = r.unpack("<H")
    kind = r.take(n).decode("ascii")
    (n,) = r.unpack("<I")
    try:
        config = json.loads(r.take(n).decode("utf-8"))
    except ValueError as exc:
        raise CorruptFile(f"{path}: bad config block: {exc}") from exc
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise CorruptFile(f"{path}: trailing bytes")
    return kind, config, arrays


def _registry():
    from .anogan import AnoGAN
    from .ocsvm import OneClassSVM
    from .vae import VAE

    return {"vae": VAE, "ocsvm": OneClassSVM, "anogan": AnoGAN}


def save_model(path, model, pca: PcaTransform | None, extra_config: dict | None = None) -> None:
    config = {"model": model.config(), "pipeline": extra_config or {}}
    arrays = {"model." + k: v for k, v in model.to_arrays().items()}
    if pca is not None:
        arrays.update(pca_to_arrays(pca))
    atomic_write(path, encode_model(model.kind, config, arrays))


def load_model(path):
    """Returns (model, pca or None, pipeline config echo)."""
    with open(path, "rb") as fh:
        kind, config, arrays = decode_model(fh.read(), path)
    reg = _registry()
    if kind not in reg:
        raise CorruptFile(f"{path}: unknown model kind {kind!r}")
    own = {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}
    model = reg[kind].from_arrays(config["model"], own)
    pca = pca_from_arrays(arrays) if "pca.mean" in arrays else None
    return model, pca, config.get("pipeline", {})
