from __future__ import annotations

import threading

from radt.exceptions import ArtifactError
from radt.storage.base import Storage


__all__ = ("MemoryStorage",)


class MemoryStorage(Storage):
    """In memory artifact store, used for scratch indices and in tests."""

    __slots__ = ("_mem", "_lock")

    def __init__(self) -> None:
        self._mem: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def write(self, name: str, data: str | bytes) -> None:
        """Write an artifact.

        Args:
            name: Name to associate the artifact with
            data: Content to store, ``str`` is encoded as UTF-8
        """
        if isinstance(data, str):
            data = data.encode("utf-8")
        with self._lock:
            self._mem[name] = bytes(data)

    def read(self, name: str) -> bytes:
        with self._lock:
            try:
                return self._mem[name]
            except KeyError as e:
                raise ArtifactError(f"Artifact '{name}' does not exist") from e

    def exists(self, name: str) -> bool:
        with self._lock:
            return name in self._mem

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._mem)

    def delete(self, name: str) -> None:
        """Delete an artifact.

        If no such ``name`` exists, this is a no-op.
        """
        with self._lock:
            self._mem.pop(name, None)

    def delete_all(self) -> None:
        """Delete all stored artifacts."""
        with self._lock:
            self._mem.clear()
