from __future__ import annotations

import logging
import os
import shutil
import tempfile
from pathlib import Path

from radt.exceptions import ArtifactError
from radt.storage.base import Storage


__all__ = ("FileStorage",)

_LOGGER = logging.getLogger("radt.storage.file")


def _check_name(name: str) -> str:
    if not name or name.startswith(("/", "\\")) or ".." in Path(name).parts:
        raise ArtifactError(f"Invalid artifact name '{name}'")
    return name


class FileStorage(Storage):
    """Directory based artifact store.

    Every write goes to a temporary file in the target directory first and is
    moved into place with :func:`os.replace`, so readers never observe a
    partially written artifact.
    """

    __slots__ = ("path",)

    def __init__(self, path: str | os.PathLike[str]) -> None:
        self.path = Path(path)

    def __repr__(self) -> str:
        return f"FileStorage(path={str(self.path)!r})"

    def _path_from_name(self, name: str) -> Path:
        return self.path / _check_name(name)

    def write(self, name: str, data: str | bytes) -> None:
        """Write an artifact.

        Args:
            name: Name to associate the artifact with
            data: Content to store, ``str`` is encoded as UTF-8
        """
        target_file = self._path_from_name(name)
        if isinstance(data, str):
            data = data.encode("utf-8")
        try:
            target_file.parent.mkdir(parents=True, exist_ok=True)
            tmp_file_fd, tmp_file_name = tempfile.mkstemp(
                dir=target_file.parent, prefix=f"{target_file.name}.tmp"
            )
            renamed = False
            try:
                try:
                    os.write(tmp_file_fd, data)
                finally:
                    os.close(tmp_file_fd)

                os.replace(tmp_file_name, target_file)
                renamed = True
            finally:
                if not renamed:
                    os.unlink(tmp_file_name)
        except OSError as e:
            raise ArtifactError(f"Failed to write '{target_file}'") from e
        _LOGGER.debug("Wrote %s (%d bytes)", target_file, len(data))

    def read(self, name: str) -> bytes:
        """Read an artifact.

        Args:
            name: Name of the artifact

        Returns:
            The stored content
        """
        path = self._path_from_name(name)
        try:
            return path.read_bytes()
        except FileNotFoundError as e:
            raise ArtifactError(f"Artifact '{path}' does not exist") from e
        except OSError as e:
            raise ArtifactError(f"Failed to read '{path}'") from e

    def exists(self, name: str) -> bool:
        return self._path_from_name(name).is_file()

    def names(self) -> list[str]:
        if not self.path.is_dir():
            return []
        return sorted(
            p.relative_to(self.path).as_posix()
            for p in self.path.rglob("*")
            if p.is_file() and ".tmp" not in p.name
        )

    def delete(self, name: str) -> None:
        """Delete an artifact.

        If no such artifact exists, this is a no-op.

        Args:
            name: Name of the artifact to delete
        """
        self._path_from_name(name).unlink(missing_ok=True)

    def delete_all(self) -> None:
        """Delete all stored artifacts.

        Note:
            This deletes and recreates :attr:`FileStorage.path`
        """
        shutil.rmtree(self.path, ignore_errors=True)
        self.path.mkdir(parents=True, exist_ok=True)
