from __future__ import annotations

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING


__all__ = ("Storage", "as_storage")

if TYPE_CHECKING:
    from radt._util import PathLikeStr


class Storage(ABC):
    """An abstract artifact store that all storage implementations inherit from.

    Artifacts are addressed by a relative name such as ``"manifest.json"`` or
    ``"task_0003.jsonl"``. Writes replace the whole artifact atomically.
    """

    @abstractmethod
    def write(self, name: str, data: str | bytes) -> None:
        """Write an artifact.

        Args:
            name: Name to associate the artifact with
            data: Content to store, ``str`` is encoded as UTF-8
        """
        raise NotImplementedError

    @abstractmethod
    def read(self, name: str) -> bytes:
        """Read an artifact.

        Args:
            name: Name of the artifact

        Returns:
            The stored content

        Raises:
            ArtifactError: If no artifact with this name exists
        """
        raise NotImplementedError

    @abstractmethod
    def exists(self, name: str) -> bool:
        """Return ``True`` if an artifact named ``name`` is stored."""
        raise NotImplementedError

    @abstractmethod
    def names(self) -> list[str]:
        """Return the sorted names of all stored artifacts."""
        raise NotImplementedError

    @abstractmethod
    def delete(self, name: str) -> None:
        """Delete an artifact.

        If no such artifact exists, this is a no-op.

        Args:
            name: Name of the artifact to delete
        """
        raise NotImplementedError

    @abstractmethod
    def delete_all(self) -> None:
        """Delete all stored artifacts."""
        raise NotImplementedError


def as_storage(target: Storage | PathLikeStr) -> Storage:
    """Return ``target`` if it is a :class:`Storage`, else a
    :class:`FileStorage <radt.storage.file.FileStorage>` rooted at the path.
    """
    if isinstance(target, Storage):
        return target
    from radt.storage.file import FileStorage

    return FileStorage(target)
