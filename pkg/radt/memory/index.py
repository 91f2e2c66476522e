"""The external memory: a flat vector index over sub-trajectories.

An episode of ``H`` steps contributes ``ceil(H / C)`` entries. The entry at
chunk start ``t`` has the key ``g(tau[t:t+C])`` and the value
``tau[t:t+2C]``: the keyed steps followed by their continuation, clipped at
the end of the episode.
"""
from __future__ import annotations

import logging
import math
import threading
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from radt.datagen.records import EpisodeRecord, Segment
from radt.exceptions import ShapeMismatchError


__all__ = (
    "IndexEntry",
    "Candidates",
    "VectorIndex",
    "chunk_episode",
    "build_index",
    "add_episode",
    "search_topl",
    "similarity_cutoff",
    "deduplicate",
    "expected_entries",
    "episode_uid",
)

if TYPE_CHECKING:
    from radt.embed import EmbeddingModel

_LOGGER = logging.getLogger("radt.memory")

EMBED_BATCH = 256


@dataclass(frozen=True, eq=False)
class IndexEntry:
    key: np.ndarray
    value: Segment
    task_id: int
    episode_id: int
    episode_return: float
    offset: int
    past_len: int

    @property
    def past(self) -> Segment:
        """The keyed half of the value."""
        return self.value[: self.past_len]


@dataclass(frozen=True)
class Candidates:
    """Ranked entry positions with their similarity and, after reweighting,
    their final score.
    """

    indices: np.ndarray
    sims: np.ndarray
    scores: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    @classmethod
    def empty(cls) -> Candidates:
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))


def episode_uid(task_id: np.ndarray | int, episode_id: np.ndarray | int) -> np.ndarray:
    # (task_id, episode_id) packed into one int64 so exclusion is a single comparison.
    return (np.asarray(task_id, dtype=np.int64) << 32) + np.asarray(episode_id, dtype=np.int64)


class VectorIndex:
    """Append-only store of :class:`IndexEntry` with exact cosine search.

    Reads may run concurrently; appends take an internal lock.
    """

    def __init__(self, dim: int, context: int) -> None:
        self.dim = dim
        self.context = context
        self._entries: list[IndexEntry] = []
        self._lock = threading.RLock()
        self._cache: dict[str, np.ndarray] | None = None

    def __repr__(self) -> str:
        return f"VectorIndex(dim={self.dim}, context={self.context}, entries={len(self)})"

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> IndexEntry:
        return self._entries[i]

    def __iter__(self) -> Iterator[IndexEntry]:
        return iter(list(self._entries))

    @property
    def entries(self) -> list[IndexEntry]:
        return list(self._entries)

    def add(self, entries: Iterable[IndexEntry]) -> None:
        entries = list(entries)
        for e in entries:
            if e.key.shape != (self.dim,):
                raise ShapeMismatchError("index key", (self.dim,), e.key.shape)
        with self._lock:
            self._entries.extend(entries)
            self._cache = None

    def _arrays(self) -> dict[str, np.ndarray]:
        with self._lock:
            if self._cache is None:
                es = self._entries
                keys = (
                    np.stack([e.key for e in es]).astype(np.float32)
                    if es
                    else np.empty((0, self.dim), dtype=np.float32)
                )
                k64 = keys.astype(np.float64)
                norms = np.linalg.norm(k64, axis=1)
                unit = np.divide(k64, norms[:, None], out=np.zeros_like(k64), where=norms[:, None] > 0)
                task = np.array([e.task_id for e in es], dtype=np.int64)
                episode = np.array([e.episode_id for e in es], dtype=np.int64)
                self._cache = {
                    "keys": keys,
                    "unit": unit,
                    "task_id": task,
                    "episode_id": episode,
                    "uid": episode_uid(task, episode),
                    "episode_return": np.array([e.episode_return for e in es], dtype=np.float64),
                    "offset": np.array([e.offset for e in es], dtype=np.int64),
                }
            return self._cache

    @property
    def keys(self) -> np.ndarray:
        return self._arrays()["keys"]

    @property
    def task_ids(self) -> np.ndarray:
        return self._arrays()["task_id"]

    @property
    def episode_ids(self) -> np.ndarray:
        return self._arrays()["episode_id"]

    @property
    def episode_uids(self) -> np.ndarray:
        return self._arrays()["uid"]

    @property
    def returns(self) -> np.ndarray:
        return self._arrays()["episode_return"]

    @property
    def offsets(self) -> np.ndarray:
        return self._arrays()["offset"]

    def similarities(self, q: np.ndarray) -> np.ndarray:
        """Cosine similarity of ``q`` to every key, in float64. Zero vectors
        have similarity 0 to everything.
        """
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ShapeMismatchError("query", (self.dim,), q.shape)
        norm = np.linalg.norm(q)
        if norm == 0:
            return np.zeros(len(self), dtype=np.float64)
        return self._arrays()["unit"] @ (q / norm)

    def rank(self, positions: np.ndarray, primary: np.ndarray) -> np.ndarray:
        """Order ``positions`` by descending ``primary``, then higher episode
        return, lower episode id, lower offset, lower task id.
        """
        arr = self._arrays()
        order = np.lexsort(
            (
                arr["task_id"][positions],
                arr["offset"][positions],
                arr["episode_id"][positions],
                -arr["episode_return"][positions],
                -primary,
            )
        )
        return order

    def search_topl(
        self, q: np.ndarray, l: int, exclude_episode: tuple[int, int] | None = None
    ) -> Candidates:
        """Exact top-``l`` entries by cosine similarity.

        Entries of ``exclude_episode`` (a ``(task_id, episode_id)`` pair) are
        removed before ranking. An index with nothing left returns no
        candidates.
        """
        if len(self) == 0 or l <= 0:
            return Candidates.empty()
        sims = self.similarities(q)
        valid = np.arange(len(self))
        if exclude_episode is not None:
            valid = valid[self.episode_uids != episode_uid(*exclude_episode)]
        if valid.size == 0:
            return Candidates.empty()

        if valid.size > l:
            # Keep every entry tied with the l-th best so the tie-break stays exact.
            kth = np.partition(sims[valid], valid.size - l)[valid.size - l]
            valid = valid[sims[valid] >= kth]
        order = self.rank(valid, sims[valid])[:l]
        picked = valid[order]
        return Candidates(picked.astype(np.int64), sims[picked])


def chunk_episode(record: EpisodeRecord, context: int) -> list[tuple[int, Segment, Segment]]:
    """``(offset, key segment, value segment)`` for every chunk of an episode."""
    out = []
    for t in range(0, len(record), context):
        out.append((t, record.segment(t, t + context), record.segment(t, t + 2 * context)))
    return out


def _entries_for(
    records: Sequence[EpisodeRecord], g: EmbeddingModel, context: int
) -> list[IndexEntry]:
    pending = [(rec, t, key_seg, value) for rec in records for t, key_seg, value in chunk_episode(rec, context)]
    entries: list[IndexEntry] = []
    for start in range(0, len(pending), EMBED_BATCH):
        block = pending[start : start + EMBED_BATCH]
        keys = g.embed_batch([p[2] for p in block])
        for (rec, t, key_seg, value), key in zip(block, keys):
            entries.append(
                IndexEntry(
                    key=key,
                    value=value,
                    task_id=rec.task_id,
                    episode_id=rec.episode_id,
                    episode_return=float(rec.total_return),
                    offset=t,
                    past_len=len(key_seg),
                )
            )
    return entries


def build_index(
    dataset: Mapping[int, Sequence[EpisodeRecord]] | Iterable[EpisodeRecord],
    g: EmbeddingModel,
    context: int,
) -> VectorIndex:
    """Index every episode of ``dataset`` (a per-task mapping or a flat
    iterable of records).
    """
    if isinstance(dataset, Mapping):
        records = [rec for task_id in sorted(dataset) for rec in dataset[task_id]]
    else:
        records = list(dataset)
    index = VectorIndex(g.dim, context)
    index.add(_entries_for(records, g, context))
    _LOGGER.info("Built index with %d entries from %d episode(s)", len(index), len(records))
    return index


def add_episode(index: VectorIndex, record: EpisodeRecord, g: EmbeddingModel) -> VectorIndex:
    """Append the chunks of a completed episode."""
    entries = _entries_for([record], g, index.context)
    index.add(entries)
    _LOGGER.debug(
        "Added task=%d episode=%d (%d entries, index size %d)",
        record.task_id,
        record.episode_id,
        len(entries),
        len(index),
    )
    return index


def expected_entries(lengths: Iterable[int], context: int) -> int:
    return sum(math.ceil(n / context) for n in lengths)


def search_topl(
    index: VectorIndex, q: np.ndarray, l: int, exclude_episode: tuple[int, int] | None = None
) -> Candidates:
    return index.search_topl(q, l, exclude_episode)


def similarity_cutoff(candidates: Candidates, threshold: float | None, l: int) -> Candidates:
    """Drop candidates more similar than ``threshold`` to the query, then keep
    the first ``l``. ``threshold=None`` only truncates.
    """
    keep = np.ones(len(candidates), dtype=bool)
    if threshold is not None:
        keep = candidates.sims <= threshold
    idx = np.flatnonzero(keep)[:l]
    scores = None if candidates.scores is None else candidates.scores[idx]
    return Candidates(candidates.indices[idx], candidates.sims[idx], scores)


def deduplicate(index: VectorIndex, threshold: float = 0.98, block: int = 512) -> VectorIndex:
    """Greedy scan in storage order: an entry is dropped when an earlier kept
    entry of a different episode has cosine similarity above ``threshold``.

    Returns a new index; running it again removes nothing.
    """
    n = len(index)
    if n == 0:
        return VectorIndex(index.dim, index.context)
    arr = index._arrays()
    unit, uid = arr["unit"], arr["uid"]
    kept: list[int] = []
    for start in range(0, n, block):
        stop = min(start + block, n)
        rows = np.arange(start, stop)
        dominated = np.zeros(stop - start, dtype=bool)
        if kept:
            kept_arr = np.asarray(kept)
            sims = unit[rows] @ unit[kept_arr].T
            cross = uid[rows][:, None] != uid[kept_arr][None, :]
            dominated = ((sims > threshold) & cross).any(axis=1)
        inner = unit[rows] @ unit[rows].T
        inner_cross = uid[rows][:, None] != uid[rows][None, :]
        kept_in_block = np.zeros(stop - start, dtype=bool)
        for j in range(stop - start):
            if dominated[j]:
                continue
            if np.any(kept_in_block[:j] & inner_cross[j, :j] & (inner[j, :j] > threshold)):
                continue
            kept_in_block[j] = True
        kept.extend(rows[kept_in_block].tolist())

    out = VectorIndex(index.dim, index.context)
    out.add(index[i] for i in kept)
    _LOGGER.debug("Deduplication kept %d of %d entries", len(out), n)
    return out
