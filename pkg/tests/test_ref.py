import concurrent.futures
import os
import time
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest

from radt.ref import cache_reference, clear_references, get_references


class Handle:
    def __init__(self, name: str) -> None:
        self.name = name


def test_returns_same_object():
    """Test that reference cache returns the same object not a copy of the object."""
    mock = MagicMock()

    @cache_reference()
    def call(name: str):
        mock()
        return Handle(name)

    result_1 = call("a")
    result_2 = call("a")
    result_3 = call("b")
    result_4 = call(name="b")

    assert result_1 is result_2
    assert result_2 is not result_3
    assert result_3 is result_4
    assert mock.call_count == 2
    assert len(get_references()) == 2


def test_keys_cover_arrays_and_defaults():
    """Test arrays are keyed by content and defaults are bound before keying."""
    mock = MagicMock()

    @cache_reference()
    def call(arr: np.ndarray, scale: float = 1.0):
        mock()
        return Handle(str(arr.sum() * scale))

    assert call(np.arange(3)) is call(np.arange(3), 1.0)
    assert call(np.arange(3)) is not call(np.arange(4))
    assert call(np.arange(3)) is not call(np.arange(3, dtype=np.float32))
    assert mock.call_count == 3


def test_paths_are_keyed_by_modification_time(tmp_path):
    """Test rewriting a file produces a new reference."""
    path = tmp_path / "artifact"
    path.write_text("one")

    @cache_reference()
    def load(p: Path):
        return Handle(p.read_text())

    first = load(path)
    assert load(path) is first
    path.write_text("two")
    later = time.time() + 10
    os.utime(path, (later, later))
    assert load(path).name == "two"


def test_private_arguments_are_not_keyed():
    """Test arguments with a leading underscore are left out of the key."""
    mock = MagicMock()

    @cache_reference()
    def call(name: str, _log: object = None):
        mock()
        return Handle(name)

    assert call("a", _log=object()) is call("a", _log=object())
    mock.assert_called_once()


def test_type_encoders():
    """Tests that types which are not natively hashable can be hashed by providing
    a callable that encodes the type.
    """
    mock = MagicMock()

    @cache_reference()
    def call_fail(handle: Handle):
        pass

    @cache_reference(type_encoders={Handle: lambda h: h.name})
    def call_success(handle: Handle):
        mock(handle)
        return handle

    handle = Handle("a")
    with pytest.raises(TypeError):
        call_fail(handle)
    result_1 = call_success(handle)
    result_2 = call_success(Handle("a"))

    assert result_1 is result_2 is handle
    mock.assert_called_once_with(handle)


def test_clear_references():
    """Test clearing drops every cached object."""

    @cache_reference()
    def call():
        return Handle("x")

    first = call()
    clear_references()
    assert get_references() == ()
    assert call() is not first


def test_concurrent_calls_are_serialized():
    """Tests that concurrent calls to a cached function are serialized."""
    mock = MagicMock(return_value=lambda: str(10))  # Ensure we create a new object

    @cache_reference()
    def call_mock():
        time.sleep(0.1)
        return mock()()

    with concurrent.futures.ThreadPoolExecutor(max_workers=2) as executor:
        futs = (executor.submit(call_mock), executor.submit(call_mock))
        concurrent.futures.wait(futs)

    result_1 = futs[0].result()
    result_2 = futs[1].result()
    assert result_1 == result_2 and id(result_1) == id(result_2)
    mock.assert_called_once()
