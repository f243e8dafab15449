"""Versioned binary checkpoints.

Layout: magic, format version, config JSON, then every parameter tensor in
declaration order as little-endian float64. A human-readable JSON manifest
(config, seed, epoch, losses) is written next to the binary.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import ModelConfig, RecurrentAutoencoder, cast_params, init_params

MAGIC = b"AISRAE\x00\x01"
FORMAT_VERSION = 1


def save_checkpoint(path, model: RecurrentAutoencoder,
                    manifest: dict | None = None) -> None:
    """Write the model to `path` and its manifest to `path + '.manifest.json'`."""
    path = Path(path)
    flat = model.params.flat()
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(flat)))
        for name, arr in flat.items():
            blob = name.encode()
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    meta = {"config": model.config.to_dict(), "format_version": FORMAT_VERSION}
    if manifest:
        meta.update(manifest)
    manifest_path = path.with_name(path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> RecurrentAutoencoder:
    """Rebuild a model bit-exactly from a checkpoint file."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a model checkpoint (bad magic)")
    offset = len(MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, data, offset)
        offset += size
        return values

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    (config_len,) = take("<I")
    config = ModelConfig.from_dict(json.loads(data[offset:offset + config_len]))
    offset += config_len

    # Structure from config, then overwrite every tensor by stored name.
    params = init_params(config, np.random.default_rng(0))
    flat = params.flat()
    (n_tensors,) = take("<I")
    if n_tensors != len(flat):
        raise DataError(
            f"checkpoint holds {n_tensors} tensors, config implies {len(flat)}")
    loaded: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = take("<I")
        name = data[offset:offset + name_len].decode()
        offset += name_len
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        loaded[name] = arr.reshape(shape).astype(np.float64)
    for name, arr in flat.items():
        if name not in loaded:
            raise DataError(f"checkpoint is missing tensor {name}")
        if loaded[name].shape != arr.shape:
            raise DataError(
                f"tensor {name} has shape {loaded[name].shape}, expected {arr.shape}")
        arr[...] = loaded[name]
    if config.dtype == "float32":
        params = cast_params(params, np.float32)
    return RecurrentAutoencoder(config, params)
