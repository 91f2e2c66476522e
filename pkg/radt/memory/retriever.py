from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from radt.memory.config import RetrievalConfig, SamplingMode
from radt.memory.index import IndexEntry, VectorIndex, episode_uid, similarity_cutoff
from radt.memory.query import regularize_query
from radt.memory.reweight import reweight_select


__all__ = ("RetrievalRequest", "Retriever")

if TYPE_CHECKING:
    from radt.datagen.records import Segment
    from radt.embed import EmbeddingModel

_LOGGER = logging.getLogger("radt.memory.retriever")


@dataclass(frozen=True)
class RetrievalRequest:
    """One query: the sub-trajectory and the episode it comes from.

    ``episode_id=None`` marks an ongoing episode that is not in the index.
    """

    query: Segment
    task_id: int
    episode_id: int | None = None

    @property
    def exclude(self) -> tuple[int, int] | None:
        return None if self.episode_id is None else (self.task_id, self.episode_id)


class Retriever:
    """Turns queries into retrieved index entries.

    Training: random same-task fallback for short queries, query dropout and
    blending, similarity cut-off over ``2 * top_l`` candidates, and
    reweighting with ``config.train_mode``. Inference: random fallback from
    the whole index, plain top-``l`` search and ``config.eval_mode``
    reweighting.
    """

    def __init__(
        self,
        index: VectorIndex,
        embedder: EmbeddingModel,
        config: RetrievalConfig,
        training: bool,
    ) -> None:
        self.index = index
        self.embedder = embedder
        self.config = config
        self.training = training
        self.calls = 0

    def __repr__(self) -> str:
        return f"Retriever(index={self.index!r}, training={self.training})"

    def _random_entry(
        self, request: RetrievalRequest, rng: np.random.Generator, same_task: bool
    ) -> IndexEntry | None:
        if len(self.index) == 0:
            return None
        pool = np.ones(len(self.index), dtype=bool)
        if same_task:
            pool &= self.index.task_ids == request.task_id
        if request.exclude is not None:
            pool &= self.index.episode_uids != episode_uid(*request.exclude)
        choices = np.flatnonzero(pool)
        if choices.size == 0:
            return None
        return self.index[int(choices[rng.integers(choices.size)])]

    def _search(self, request: RetrievalRequest, q: np.ndarray) -> IndexEntry | None:
        cfg = self.config
        if self.training:
            fetch = cfg.top_m if cfg.cutoff is not None else cfg.top_l
            candidates = self.index.search_topl(q, fetch, request.exclude)
            candidates = similarity_cutoff(candidates, cfg.cutoff, cfg.top_l)
            mode = cfg.train_mode
        else:
            candidates = self.index.search_topl(q, cfg.top_l, request.exclude)
            mode = cfg.eval_mode
        selected = reweight_select(self.index, candidates, mode, cfg.alpha, cfg.top_k, request.task_id)
        if len(selected) == 0:
            return None
        return self.index[int(selected.indices[0])]

    def fallback(self, request: RetrievalRequest, rng: np.random.Generator) -> IndexEntry | None:
        """Context for a query too short to search with: a random same-task
        entry while training, a random entry of the whole index otherwise.
        """
        self.calls += 1
        return self._random_entry(request, rng, same_task=self.training)

    def lookup(
        self, request: RetrievalRequest, q: np.ndarray, rng: np.random.Generator
    ) -> IndexEntry | None:
        """Search with an already embedded query."""
        self.calls += 1
        q = regularize_query(q, self.training, self.config, self.index, rng)
        return self._search(request, q)

    def retrieve(
        self, requests: Sequence[RetrievalRequest], rng: np.random.Generator
    ) -> list[IndexEntry | None]:
        """Retrieve one entry per request; ``None`` means empty context."""
        cfg = self.config
        out: list[IndexEntry | None] = [None] * len(requests)
        if len(self.index) == 0:
            self.calls += len(requests)
            _LOGGER.debug("Index is empty, %d request(s) get no context", len(requests))
            return out

        to_search = []
        for i, req in enumerate(requests):
            if self.training and cfg.sampling is not SamplingMode.RETRIEVAL:
                self.calls += 1
                out[i] = self._random_entry(req, rng, cfg.sampling is SamplingMode.SAME_TASK)
            elif len(req.query) < cfg.min_len:
                out[i] = self.fallback(req, rng)
            else:
                to_search.append(i)

        if to_search:
            dropout = cfg.query_dropout if self.training else 0.0
            queries = self.embedder.embed_batch(
                [requests[i].query for i in to_search], dropout, rng
            )
            for i, q in zip(to_search, queries):
                out[i] = self.lookup(requests[i], q, rng)
        return out
