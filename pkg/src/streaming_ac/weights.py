"""Seeded weight initialisation and the ``SACW`` binary weights file.

File layout (all little-endian)::

    b"SACW" | u32 version=1 | u32 tensor_count
    per tensor: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 data (row-major)

Tensors are written in sorted name order, so equal weights give equal bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import bottleneck, emformer, vocoder
from .errors import FormatError

MAGIC = b"SACW"
VERSION = 1


def init_weights(cfg, seed: int = 0) -> dict[str, np.ndarray]:
    """All model parameters for ``cfg`` (a ``SessionConfig``), drawn from one seeded stream."""
    rng = np.random.default_rng(seed)
    w = {}
    bound = 1.0 / np.sqrt(cfg.n_bands)
    w["frontend.w"] = rng.uniform(-bound, bound, (cfg.n_bands, cfg.emformer.hidden)).astype(np.float32)
    w["frontend.b"] = rng.uniform(-bound, bound, (cfg.emformer.hidden,)).astype(np.float32)
    w["speaker.w"] = rng.standard_normal((cfg.n_bands, cfg.embed_dim)).astype(np.float32)
    w.update(emformer.init_weights(cfg.emformer, rng))
    w.update(bottleneck.init_weights(cfg.wavenet, rng))
    w.update(vocoder.init_weights(cfg.vocoder, rng))
    return w


def dumps(weights: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(weights))]
    for name in sorted(weights):
        arr = np.ascontiguousarray(weights[name], dtype="<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise FormatError("not a SACW weights file (bad magic)")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise FormatError(f"unsupported weights version {version}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(data):
                raise FormatError(f"truncated data for tensor {name!r}")
            out[name] = np.frombuffer(data, "<f4", size, pos).astype(np.float32).reshape(shape)
            pos += 4 * size
    except struct.error as exc:
        raise FormatError(f"truncated weights file: {exc}") from None
    if pos != len(data):
        raise FormatError("trailing bytes after last tensor")
    return out


def save_weights(weights: dict[str, np.ndarray], path) -> None:
    Path(path).write_bytes(dumps(weights))


def load_weights(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def check_weights(weights: dict, cfg) -> None:
    """Raise ``FormatError`` if ``weights`` does not match the shapes ``cfg`` expects."""
    expected = init_weights(cfg, 0)
    missing = sorted(set(expected) - set(weights))
    if missing:
        raise FormatError(f"weights missing {len(missing)} tensors, e.g. {missing[0]!r}")
    for name, ref in expected.items():
        if weights[name].shape != ref.shape:
            raise FormatError(f"tensor {name!r} has shape {weights[name].shape}, expected {ref.shape}")
