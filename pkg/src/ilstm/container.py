"""Binary model files.

Layout, all integers little-endian::

    b"ILSTM1"
    u32 metadata length, metadata as UTF-8 JSON (sorted keys)
    u32 tensor count
    per tensor: u16 name length, name (UTF-8), u8 rank, rank x u32 dims,
                float32 payload in row-major order

Tensors are stored at 32-bit precision and widened to float64 on load.
"""

from __future__ import annotations

import json
import struct
from os import PathLike

import numpy as np

from .lstm import LstmParams
from .models import DenseHead, ModelOne, ModelTwo, Responder, COND_MAPS

MAGIC = b"ILSTM1"


class ContainerError(ValueError):
    pass


def dumps(metadata: dict, tensors: dict[str, np.ndarray]) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if not data.startswith(MAGIC):
        raise ContainerError("not a model file (bad magic)")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ContainerError("model file is truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    try:
        (meta_len,) = struct.unpack("<I", take(4))
        metadata = json.loads(take(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", take(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = take(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", take(1))
            dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
            n = int(np.prod(dims, dtype=np.int64))
            tensors[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).astype(np.float64)
    except (UnicodeDecodeError, json.JSONDecodeError, struct.error) as exc:
        raise ContainerError(f"corrupt model file: {exc}") from None
    if pos != len(data):
        raise ContainerError("trailing bytes after the last tensor")
    return metadata, tensors


def save(path: str | PathLike, metadata: dict, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(metadata, tensors))


def load(path: str | PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        return loads(fh.read())


def model_metadata(model, **extra) -> dict:
    if model.kind == "responder":
        meta = {
            "kind": model.kind,
            "h": model.hidden_size,
            "e": model.fwd.input_size,
            "cond_width": model.cond_width,
            "answer_vocab": list(model.answer_vocab),
        }
    else:
        meta = {"kind": model.kind, "h": model.hidden_size, "e": model.lstm.input_size}
    meta.update(extra)
    return meta


def save_model(path: str | PathLike, model, **extra) -> None:
    """Write ``model`` plus metadata (e.g. taxonomy label lists) to ``path``."""
    save(path, model_metadata(model, **extra), model.parameters())


def model_from_container(metadata: dict, tensors: dict[str, np.ndarray]):
    try:
        kind, H, E = metadata["kind"], int(metadata["h"]), int(metadata["e"])
        if kind == "one":
            K = tensors["head.b"].shape[0]
            model = ModelOne(LstmParams.zeros(H, E), DenseHead.init(K, H))
        elif kind == "two":
            model = ModelTwo(
                LstmParams.zeros(H, E),
                DenseHead.init(tensors["main_head.b"].shape[0], H),
                DenseHead.init(tensors["sub_head.b"].shape[0], H),
            )
        elif kind == "responder":
            vocab = metadata["answer_vocab"]
            C = int(metadata["cond_width"])
            model = Responder(
                LstmParams.zeros(H, E),
                LstmParams.zeros(H, E),
                {name: DenseHead.init(H, C) for name in COND_MAPS},
                DenseHead.init(len(vocab), 2 * H),
                vocab,
            )
        else:
            raise ContainerError(f"unknown model kind {kind!r}")
        model.load_parameters(tensors)
    except (KeyError, ValueError) as exc:
        raise ContainerError(f"inconsistent model file: {exc}") from None
    return model


def load_model(path: str | PathLike):
    """Return ``(model, metadata)``."""
    metadata, tensors = load(path)
    return model_from_container(metadata, tensors), metadata
