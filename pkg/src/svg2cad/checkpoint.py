"""Versioned checkpoint container: JSON header plus raw float32 tensors.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then the concatenated tensor payload. The header records the format version,
the model configuration, run state (step, epoch, RNG state) and a tensor
directory of (name, shape, offset). All tensors are 32-bit little-endian
floats; loading validates shapes against the configuration.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .model import DualDecoderModel, ModelConfig, build_model

MAGIC = b"SVG2CADC"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    state: dict

    def model_tensors(self) -> dict[str, np.ndarray]:
        return {k[len("model."):]: v for k, v in self.tensors.items() if k.startswith("model.")}


def save_checkpoint(path: Union[str, Path], config: ModelConfig,
                    tensors: dict[str, np.ndarray], state: dict) -> None:
    directory = []
    payload = bytearray()
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype="<f4")
        directory.append({"name": name, "shape": list(data.shape), "offset": len(payload)})
        payload.extend(data.tobytes())
    header = json.dumps({
        "version": FORMAT_VERSION,
        "model_config": config.to_dict(),
        "state": state,
        "tensors": directory,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_start = len(MAGIC) + 8
    try:
        header = json.loads(raw[header_start: header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    config = ModelConfig.from_dict(header["model_config"])
    body = raw[header_start + header_len:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(body):
            raise CheckpointError(f"tensor {entry['name']!r} overruns the payload")
        tensors[entry["name"]] = np.frombuffer(
            body[start:end], dtype="<f4").reshape(shape).copy()
    return Checkpoint(config=config, tensors=tensors, state=header.get("state", {}))


def load_model(path: Union[str, Path]) -> tuple[DualDecoderModel, Checkpoint]:
    """Rebuild the model from the stored config, validating every tensor shape."""
    import torch

    ckpt = load_checkpoint(path)
    model = build_model(ckpt.config, seed=0)
    expected = {name: tuple(p.shape) for name, p in model.state_dict().items()
                if isinstance(p, torch.Tensor)}
    stored = ckpt.model_tensors()
    for name, shape in expected.items():
        if name == "embedding.pos_table":
            continue  # derived, not persisted
        if name not in stored:
            raise CheckpointError(f"checkpoint missing tensor {name!r}")
        if tuple(stored[name].shape) != shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {tuple(stored[name].shape)}, config wants {shape}")
    state_dict = {name: torch.from_numpy(stored[name]) for name in expected
                  if name != "embedding.pos_table"}
    model.load_state_dict(state_dict, strict=False)
    return model, ckpt
