from .base import Storage, as_storage
from .file import FileStorage
from .memory import MemoryStorage


__all__ = (
    "Storage",
    "FileStorage",
    "MemoryStorage",
    "as_storage",
)
