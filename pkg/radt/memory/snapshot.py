"""Index snapshots in the ``radt-idx-1`` layout.

* ``index.json``: ``{"format_version", "dim", "context", "entries": [...]}``
  with one ``{"task_id", "episode_id", "episode_return", "offset",
  "past_len"}`` object per entry, in storage order;
* ``keys.bin``: the keys as raw little-endian float32, row after row;
* ``values.jsonl``: one value sub-trajectory per line,
  ``{"states", "actions", "rewards", "rtg"}``.
"""
from __future__ import annotations

import json
import logging
from typing import TYPE_CHECKING

import numpy as np

from radt.datagen.records import Segment
from radt.exceptions import ArtifactError, IndexFormatError
from radt.memory.index import IndexEntry, VectorIndex
from radt.storage import Storage, as_storage


__all__ = ("INDEX_FORMAT_VERSION", "save_index", "load_index")

if TYPE_CHECKING:
    from radt._util import PathLikeStr

_LOGGER = logging.getLogger("radt.memory.snapshot")

INDEX_FORMAT_VERSION = "radt-idx-1"
_LE_F32 = np.dtype("<f4")


def save_index(index: VectorIndex, target: Storage | PathLikeStr) -> None:
    storage = as_storage(target)
    entries = index.entries
    meta = {
        "format_version": INDEX_FORMAT_VERSION,
        "dim": index.dim,
        "context": index.context,
        "entries": [
            {
                "task_id": e.task_id,
                "episode_id": e.episode_id,
                "episode_return": e.episode_return,
                "offset": e.offset,
                "past_len": e.past_len,
            }
            for e in entries
        ],
    }
    storage.write("keys.bin", index.keys.astype(_LE_F32).tobytes())
    storage.write(
        "values.jsonl",
        "".join(json.dumps(e.value.to_dict(), separators=(",", ":")) + "\n" for e in entries),
    )
    storage.write("index.json", json.dumps(meta, sort_keys=True))
    _LOGGER.debug("Saved index snapshot with %d entries to %r", len(entries), storage)


def load_index(source: Storage | PathLikeStr) -> VectorIndex:
    """Load a snapshot written by :func:`save_index`.

    Raises:
        IndexFormatError: If a file is missing, the version does not match or
            the files disagree on the number of entries
    """
    storage = as_storage(source)
    try:
        meta = json.loads(storage.read("index.json"))
        raw_keys = storage.read("keys.bin")
        lines = storage.read("values.jsonl").decode("utf-8").splitlines()
    except ArtifactError as e:
        raise IndexFormatError(f"Incomplete index snapshot in {storage!r}") from e
    except json.JSONDecodeError as e:
        raise IndexFormatError("index.json is not valid JSON") from e

    if meta.get("format_version") != INDEX_FORMAT_VERSION:
        raise IndexFormatError(
            f"Format version {meta.get('format_version')!r} != expected {INDEX_FORMAT_VERSION!r}"
        )
    dim, n = int(meta["dim"]), len(meta["entries"])
    if len(raw_keys) != n * dim * 4 or len(lines) != n:
        raise IndexFormatError(
            f"Snapshot holds {n} entries but {len(raw_keys) // max(dim * 4, 1)} keys "
            f"and {len(lines)} values"
        )
    keys = np.frombuffer(raw_keys, dtype=_LE_F32).astype(np.float32).reshape(n, dim)

    index = VectorIndex(dim, int(meta["context"]))
    try:
        index.add(
            IndexEntry(
                key=keys[i].copy(),
                value=Segment.from_dict(json.loads(line)),
                task_id=int(m["task_id"]),
                episode_id=int(m["episode_id"]),
                episode_return=float(m["episode_return"]),
                offset=int(m["offset"]),
                past_len=int(m["past_len"]),
            )
            for i, (m, line) in enumerate(zip(meta["entries"], lines))
        )
    except (KeyError, TypeError, ValueError) as e:
        raise IndexFormatError("Malformed index entry") from e
    return index
