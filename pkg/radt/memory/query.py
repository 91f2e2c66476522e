from __future__ import annotations

import numpy as np

from radt.memory.config import RetrievalConfig
from radt.memory.index import VectorIndex


__all__ = ("regularize_query",)


def regularize_query(
    q: np.ndarray,
    training: bool,
    config: RetrievalConfig,
    index: VectorIndex,
    rng: np.random.Generator,
) -> np.ndarray:
    """Blend a training query with a uniformly drawn stored key:
    ``a * q + (1 - a) * k_rand`` with ``a = config.query_blend``.

    Query dropout is not applied here; it acts on the input tokens while the
    query is embedded. Inference queries, disabled blending and an empty index
    return ``q`` unchanged.
    """
    if not training or config.query_blend is None or len(index) == 0:
        return q
    a = config.query_blend
    k_rand = index.keys[int(rng.integers(len(index)))].astype(np.float64)
    blended = a * np.asarray(q, dtype=np.float64) + (1.0 - a) * k_rand
    return blended.astype(np.float32)
