from __future__ import annotations

import functools
import hashlib
import inspect
import logging
import threading
from typing import Any, TypeVar, TYPE_CHECKING

from radt._hashing import UnhashableTypeError, update_hash


__all__ = ("cache_reference", "get_references", "clear_references")

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping
    from typing_extensions import ParamSpec

    P = ParamSpec("P")
    R = TypeVar("R")

_LOGGER = logging.getLogger("radt.ref")

_lock = threading.Lock()
_ref_storage: dict[str, Any] = {}


def _make_call_key(
    func: Callable[..., Any],
    type_encoders: Mapping[type, Callable[[Any], Any]] | None,
    args: tuple[Any, ...],
    kwargs: dict[str, Any],
) -> str:
    """Key a call by the function's qualified name and its bound arguments.

    Arguments whose name starts with ``_`` are left out of the key.
    """
    hasher = hashlib.new("md5")
    update_hash((func.__module__, func.__qualname__), hasher)
    bound = inspect.signature(func).bind(*args, **kwargs)
    bound.apply_defaults()
    for name, value in bound.arguments.items():
        if name.startswith("_"):
            continue
        try:
            update_hash((name, value), hasher, type_encoders)
        except UnhashableTypeError as e:
            raise TypeError(
                f"Cannot key argument '{name}' of '{func.__qualname__}'. Prefix "
                "the parameter name with '_' or pass a type encoder."
            ) from e
    return hasher.hexdigest()


def cache_reference(
    type_encoders: Mapping[type, Callable[[Any], Any]] | None = None
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """Cache a reference to the return object of the decorated callable.

    Objects are shared across all threads in the process, so they must be
    safe for concurrent reads. Frozen encoders are the typical use: loading
    the same checkpoint twice returns the very same immutable module.

    Calls are serialized with a :class:`threading.Lock` so that duplicate
    objects are never created.

    Args:
        type_encoders: A mapping of types to callables that transform them
            into (eventually) a hashable type
    """

    def wraps(func: Callable[P, R]) -> Callable[P, R]:
        lock = threading.Lock()

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> R:
            with lock:
                key = _make_call_key(func, type_encoders, args, kwargs)
                try:
                    with _lock:
                        ref = _ref_storage[key]
                except KeyError:
                    _LOGGER.debug("Reference miss: %s", func.__qualname__)
                else:
                    _LOGGER.debug("Reference hit: %s", func.__qualname__)
                    return ref

                ref = func(*args, **kwargs)
                with _lock:
                    _ref_storage[key] = ref
                return ref

        return wrapper

    return wraps


def get_references() -> tuple[Any, ...]:
    """Return all cached references."""
    with _lock:
        return tuple(_ref_storage.values())


def clear_references() -> None:
    """Drop all cached references."""
    with _lock:
        _ref_storage.clear()
