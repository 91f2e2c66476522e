"""The ``radt-ckpt-1`` named-tensor container.

Byte layout::

    b"radt-ckpt-1\\n"                 magic line
    <u8 little-endian>               length N of the JSON header in bytes
    <N bytes of UTF-8 JSON>          header
    <tensor bytes>                   raw little-endian tensor data

The header is ``{"config": {...}, "rng": {...}, "tensors": [...]}`` where every
tensor entry is ``{"name", "dtype", "shape", "offset", "nbytes"}`` with
``offset`` counted from the first byte after the header. ``dtype`` is a numpy
dtype name. A torch RNG state passed in ``rng["torch"]`` travels as the uint8
tensor ``"rng.torch"``; every other RNG entry must be JSON serializable.
"""
from __future__ import annotations

import json
import logging
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TYPE_CHECKING

import numpy as np
import torch

from radt._hashing import digest
from radt.exceptions import ArtifactError, CheckpointFormatError
from radt.storage import FileStorage


__all__ = (
    "CHECKPOINT_MAGIC",
    "Checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
)

if TYPE_CHECKING:
    from radt._util import PathLikeStr

_LOGGER = logging.getLogger("radt.nncore.checkpoint")

CHECKPOINT_MAGIC = b"radt-ckpt-1\n"
_TORCH_RNG = "rng.torch"
_DTYPES = {"float32", "float64", "int64", "int32", "uint8", "bool"}


@dataclass
class Checkpoint:
    tensors: dict[str, torch.Tensor]
    config: dict[str, Any] = field(default_factory=dict)
    rng: dict[str, Any] = field(default_factory=dict)

    def digest(self) -> str:
        """Content digest over the tensors in name order."""
        return digest(sorted(self.tensors.items()))


def encode_checkpoint(
    tensors: Mapping[str, torch.Tensor],
    config: Mapping[str, Any] | None = None,
    rng: Mapping[str, Any] | None = None,
) -> bytes:
    rng = dict(rng or {})
    tensors = dict(tensors)
    if "torch" in rng:
        tensors[_TORCH_RNG] = rng.pop("torch")

    table = []
    chunks = []
    offset = 0
    for name, tensor in tensors.items():
        arr = tensor.detach().cpu().contiguous().numpy()
        if arr.dtype.name not in _DTYPES:
            raise CheckpointFormatError(f"Tensor '{name}' has unsupported dtype {arr.dtype}")
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        table.append(
            {
                "name": name,
                "dtype": arr.dtype.name,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        chunks.append(data)
        offset += len(data)

    header = json.dumps(
        {"config": dict(config or {}), "rng": rng, "tensors": table}, sort_keys=True
    ).encode("utf-8")
    return b"".join([CHECKPOINT_MAGIC, struct.pack("<Q", len(header)), header, *chunks])


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse bytes produced by :func:`encode_checkpoint`.

    Raises:
        CheckpointFormatError: If the magic line, header or tensor table is invalid
    """
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointFormatError("Not a radt-ckpt-1 container (bad magic line)")
    pos = len(CHECKPOINT_MAGIC)
    if len(data) < pos + 8:
        raise CheckpointFormatError("Checkpoint is truncated before the header length")
    (header_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + header_len:
        raise CheckpointFormatError("Checkpoint header is truncated")
    try:
        header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError("Checkpoint header is not valid JSON") from e
    body = memoryview(data)[pos + header_len :]

    tensors: dict[str, torch.Tensor] = {}
    try:
        for entry in header["tensors"]:
            dtype = entry["dtype"]
            if dtype not in _DTYPES:
                raise CheckpointFormatError(f"Unsupported dtype '{dtype}'")
            start, nbytes = int(entry["offset"]), int(entry["nbytes"])
            if start + nbytes > len(body):
                raise CheckpointFormatError(f"Tensor '{entry['name']}' runs past the end of the file")
            le = np.dtype(dtype).newbyteorder("<")
            arr = np.frombuffer(body[start : start + nbytes], dtype=le)
            arr = arr.astype(np.dtype(dtype), copy=True).reshape(entry["shape"])
            tensors[entry["name"]] = torch.from_numpy(arr)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError("Malformed tensor table") from e

    rng = dict(header.get("rng", {}))
    if _TORCH_RNG in tensors:
        rng["torch"] = tensors.pop(_TORCH_RNG)
    return Checkpoint(tensors=tensors, config=dict(header.get("config", {})), rng=rng)


def save_checkpoint(
    path: PathLikeStr,
    tensors: Mapping[str, torch.Tensor],
    config: Mapping[str, Any] | None = None,
    rng: Mapping[str, Any] | None = None,
) -> None:
    """Write a checkpoint file atomically."""
    path = Path(path)
    FileStorage(path.parent).write(path.name, encode_checkpoint(tensors, config, rng))
    _LOGGER.debug("Wrote checkpoint %s with %d tensor(s)", path, len(tensors))


def load_checkpoint(path: PathLikeStr) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        ArtifactError: If the file does not exist
        CheckpointFormatError: If it is not a valid container
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"Checkpoint '{path}' does not exist")
    return decode_checkpoint(FileStorage(path.parent).read(path.name))
