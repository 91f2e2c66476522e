import pytest

from radt.exceptions import ArtifactError
from radt.storage import MemoryStorage


def test_write_read():
    """Test write and read operations."""
    storage = MemoryStorage()
    storage.write("test", b"test")
    storage.write("text", "täst")
    assert storage.read("test") == b"test"
    assert storage.read("text") == "täst".encode("utf-8")
    assert storage.names() == ["test", "text"]


def test_stored_bytes_are_copies():
    """Test mutating the written buffer does not change the artifact."""
    storage = MemoryStorage()
    buf = bytearray(b"abc")
    storage.write("a", buf)
    buf[0] = ord("z")
    assert storage.read("a") == b"abc"


def test_delete():
    """Test values can be deleted."""
    storage = MemoryStorage()
    storage.write("a", b"1")
    storage.write("b", b"2")
    storage.delete("a")
    storage.delete("missing")
    assert not storage.exists("a") and storage.exists("b")
    with pytest.raises(ArtifactError):
        storage.read("a")
    storage.delete_all()
    assert storage.names() == []
