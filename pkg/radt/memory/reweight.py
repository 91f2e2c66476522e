from __future__ import annotations

import logging

import numpy as np

from radt.memory.config import UtilityMode
from radt.memory.index import Candidates, VectorIndex


__all__ = ("minmax", "utility_scores", "reweight_select")

_LOGGER = logging.getLogger("radt.memory")


def minmax(x: np.ndarray) -> np.ndarray:
    """Scale to ``[0, 1]`` over the given values; all-equal input maps to 0.5."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.full_like(x, 0.5)
    return (x - lo) / (hi - lo)


def utility_scores(
    index: VectorIndex,
    candidates: Candidates,
    mode: UtilityMode | str,
    query_task: int | None = None,
) -> np.ndarray:
    mode = UtilityMode(mode)
    idx = candidates.indices
    if mode is UtilityMode.TASK:
        if query_task is None:
            raise ValueError("Task reweighting needs the task of the query")
        return (index.task_ids[idx] == query_task).astype(np.float64)
    if mode is UtilityMode.RETURN:
        return minmax(index.returns[idx])
    return minmax(index.episode_ids[idx])


def reweight_select(
    index: VectorIndex,
    candidates: Candidates,
    mode: UtilityMode | str,
    alpha: float,
    k: int,
    query_task: int | None = None,
) -> Candidates:
    """Top-``k`` candidates by ``s_rel + alpha * s_u``.

    ``s_rel`` is the similarity min-max normalized over ``candidates``. Ties go
    to the higher episode return, then the lower episode id, then the lower
    offset.
    """
    if len(candidates) == 0:
        return candidates
    s_rel = minmax(candidates.sims)
    s_u = utility_scores(index, candidates, mode, query_task)
    score = s_rel + alpha * s_u
    order = index.rank(candidates.indices, score)[:k]
    return Candidates(candidates.indices[order], candidates.sims[order], score[order])
