from __future__ import annotations

import dataclasses
import hashlib
import os
import struct
import threading
from enum import Enum
from pathlib import PurePath
from typing import Any, Protocol, TYPE_CHECKING

import numpy as np
import torch

from radt._util import repr_

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping
    from typing_extensions import Buffer


__all__ = ("digest", "update_hash", "UnhashableTypeError")

# Arbitrary item to denote where we found a cycle in a hashed object.
# This allows us to hash self-referencing lists, dictionaries, etc.
_CYCLE_PLACEHOLDER = b"radt-cycle-placeholder"


class UnhashableTypeError(TypeError):
    """Internal exception raised when an object has no stable byte encoding."""


class Hasher(Protocol):
    def update(self, __data: Buffer, /) -> None:
        ...


def update_hash(
    obj: Any,
    hasher: Hasher,
    type_encoders: Mapping[type, Callable[[Any], Any]] | None = None,
) -> None:
    """Updates a hashlib hasher with the stable encoding of ``obj``."""
    ch = StableHasher(type_encoders)
    ch.update(obj, hasher)


def digest(
    obj: Any, type_encoders: Mapping[type, Callable[[Any], Any]] | None = None
) -> str:
    """Return the md5 hex digest of an object's stable encoding.

    Two objects with equal content always produce the same digest across
    processes and platforms: arrays and tensors are hashed by dtype, shape
    and little-endian bytes, dataclasses by their fields, mappings by their
    items in iteration order.
    """
    hasher = hashlib.new("md5")
    update_hash(obj, hasher, type_encoders)
    return hasher.hexdigest()


class _Visiting(threading.local):
    """Ids of the containers being encoded on this thread."""

    def __init__(self) -> None:
        self.ids: set[int] = set()


_visiting = _Visiting()


def int_to_bytes(i: int) -> bytes:
    num_bytes = (i.bit_length() + 8) // 8
    return i.to_bytes(num_bytes, "little", signed=True)


def _array_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    header = f"{arr.dtype.str}:{arr.shape}".encode()
    return header + b"|" + arr.tobytes()


class StableHasher:
    """A hasher that produces process-independent encodings of objects,
    including numeric arrays, and tolerates cycles.
    """

    def __init__(
        self, type_encoders: Mapping[type, Callable[[Any], Any]] | None = None
    ):
        self._type_encoders = type_encoders

    def __repr__(self) -> str:
        return repr_(self)

    def to_bytes(self, obj: Any) -> bytes:
        """Protect against cycles and tag the encoding with the type name."""
        tname = type(obj).__qualname__.encode()

        key = id(obj)
        if key in _visiting.ids:
            return _CYCLE_PLACEHOLDER

        _visiting.ids.add(key)
        try:
            return b"%s:%s" % (tname, self._to_bytes(obj))
        finally:
            _visiting.ids.discard(key)

    def update(self, obj: Any, hasher: Hasher) -> None:
        """Update the provided hasher with the encoding of an object."""
        hasher.update(self.to_bytes(obj))

    def _to_bytes(self, obj: Any) -> bytes:
        """Encode objects to ``bytes``.

        Python's built in ``hash`` does not produce consistent results across
        runs, so every supported type has an explicit encoding.
        """
        if obj is None:
            return b"0"

        elif obj is True:
            return b"1"

        elif obj is False:
            return b"0"

        elif isinstance(obj, (bytes, bytearray)):
            return bytes(obj)

        elif isinstance(obj, str):
            return obj.encode()

        elif isinstance(obj, float):
            return struct.pack("<d", obj)

        elif isinstance(obj, int):
            return int_to_bytes(obj)

        elif isinstance(obj, np.ndarray):
            return _array_bytes(obj)

        elif isinstance(obj, np.generic):
            return _array_bytes(np.asarray(obj))

        elif isinstance(obj, torch.Tensor):
            return _array_bytes(obj.detach().cpu().contiguous().numpy())

        elif isinstance(obj, Enum):
            return self.to_bytes(obj.value)

        elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            h = hashlib.new("md5")
            for field in dataclasses.fields(obj):
                self.update((field.name, getattr(obj, field.name)), h)
            return h.digest()

        elif isinstance(obj, (list, tuple)):
            h = hashlib.new("md5")
            for item in obj:
                self.update(item, h)
            return h.digest()

        elif isinstance(obj, dict):
            h = hashlib.new("md5")
            for item in obj.items():
                self.update(item, h)
            return h.digest()

        elif isinstance(obj, PurePath):
            # Hash files as name + last modification time, so a rewritten
            # artifact gets a new key.
            h = hashlib.new("md5")
            self.update(str(obj), h)
            try:
                self.update(os.path.getmtime(obj), h)
            except OSError:
                self.update(None, h)
            return h.digest()

        elif self._type_encoders:
            for type_, encoder in self._type_encoders.items():
                if isinstance(obj, type_):
                    try:
                        new = encoder(obj)
                    except Exception as e:
                        raise UnhashableTypeError(type(obj).__qualname__) from e
                    return self.to_bytes(new)

        raise UnhashableTypeError(
            f"No stable encoding for objects of type '{type(obj).__qualname__}'"
        )
