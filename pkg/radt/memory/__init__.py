from .config import RetrievalConfig, SamplingMode, UtilityMode
from .index import (
    Candidates,
    IndexEntry,
    VectorIndex,
    add_episode,
    build_index,
    chunk_episode,
    deduplicate,
    episode_uid,
    expected_entries,
    search_topl,
    similarity_cutoff,
)
from .query import regularize_query
from .retriever import RetrievalRequest, Retriever
from .reweight import minmax, reweight_select, utility_scores
from .snapshot import INDEX_FORMAT_VERSION, load_index, save_index


__all__ = (
    "INDEX_FORMAT_VERSION",
    "Candidates",
    "IndexEntry",
    "RetrievalConfig",
    "RetrievalRequest",
    "Retriever",
    "SamplingMode",
    "UtilityMode",
    "VectorIndex",
    "add_episode",
    "build_index",
    "chunk_episode",
    "deduplicate",
    "episode_uid",
    "expected_entries",
    "load_index",
    "minmax",
    "regularize_query",
    "reweight_select",
    "save_index",
    "search_topl",
    "similarity_cutoff",
    "utility_scores",
)
