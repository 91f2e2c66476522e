import numpy as np
import pytest

from radt.datagen import EpisodeRecord, Segment
from radt.embed import EmbeddingModel, EncoderConfig, build_random_encoder
from radt.exceptions import ConfigError, IndexFormatError
from radt.memory import (
    Candidates,
    IndexEntry,
    RetrievalConfig,
    RetrievalRequest,
    Retriever,
    SamplingMode,
    VectorIndex,
    add_episode,
    build_index,
    chunk_episode,
    deduplicate,
    expected_entries,
    load_index,
    minmax,
    regularize_query,
    reweight_select,
    save_index,
    search_topl,
    similarity_cutoff,
)
from radt.storage import MemoryStorage


def _value(n=2):
    return Segment(np.zeros((n, 2)), np.zeros(n), np.zeros(n), np.zeros(n))


def _entry(key, task_id=0, episode_id=0, episode_return=0.0, offset=0):
    return IndexEntry(
        key=np.asarray(key, dtype=np.float32),
        value=_value(),
        task_id=task_id,
        episode_id=episode_id,
        episode_return=float(episode_return),
        offset=offset,
        past_len=1,
    )


def _random_index(rng, n=200, dim=8, quantized=False):
    index = VectorIndex(dim, 4)
    index.add(
        _entry(
            rng.integers(-1, 2, size=dim) if quantized else rng.normal(size=dim),
            task_id=int(rng.integers(5)),
            episode_id=int(rng.integers(10)),
            episode_return=float(rng.integers(5)),
            offset=4 * int(rng.integers(3)),
        )
        for _ in range(n)
    )
    return index


def _embedder():
    encoder = build_random_encoder(EncoderConfig(vocab=32, hidden=16, n_layers=1, n_heads=2))
    return EmbeddingModel.domain_agnostic(encoder, 3, 3, 9)


def test_similarities_are_cosines():
    """Test index similarities against a naive cosine."""
    rng = np.random.default_rng(0)
    index = _random_index(rng, n=20)
    q = rng.normal(size=8)
    naive = [
        float(np.dot(e.key, q) / (np.linalg.norm(e.key) * np.linalg.norm(q))) for e in index
    ]
    assert np.allclose(index.similarities(q), naive, atol=1e-6)
    assert index.similarities(np.zeros(8)).tolist() == [0.0] * 20


@pytest.mark.parametrize("instance", range(100))
def test_search_cutoff_reweight_matches_brute_force(instance):
    """Test search, cut-off and reweighting against an oracle that scores every entry."""
    rng = np.random.default_rng(instance)
    n = (1, 17, 250, 2_000, 10_000)[instance % 5]
    mode = ("task", "return")[instance % 2]
    alpha = (0.0, 0.5, 1.0, 2.0)[(instance // 2) % 4]
    threshold = (None, 0.5, 0.9)[instance % 3]
    l = (1, 5, 50)[(instance // 5) % 3]
    index = _random_index(rng, n=n, dim=16, quantized=instance % 4 == 0)
    task, episode = index.task_ids, index.episode_ids
    returns, offsets = index.returns, index.offsets

    def tie_key(i):
        return (-returns[i], episode[i], offsets[i], task[i])

    def scaled(values):
        lo, hi = min(values), max(values)
        return [0.5 if hi == lo else (v - lo) / (hi - lo) for v in values]

    q = rng.integers(-1, 2, size=16) if instance % 4 == 0 else rng.normal(size=16)
    q_task = int(rng.integers(5))
    exclude = (q_task, int(rng.integers(10)))
    sims = index.similarities(q)

    pool = [i for i in range(n) if (task[i], episode[i]) != exclude]
    ranked = sorted(pool, key=lambda i: (-sims[i], *tie_key(i)))[: 2 * l]
    kept = [i for i in ranked if threshold is None or sims[i] <= threshold][:l]

    candidates = similarity_cutoff(search_topl(index, q, 2 * l, exclude), threshold, l)
    assert candidates.indices.tolist() == kept
    selected = reweight_select(index, candidates, mode, alpha, len(kept), q_task)
    if not kept:
        assert len(selected) == 0
        return
    s_rel = scaled([float(sims[i]) for i in kept])
    if mode == "task":
        s_u = [1.0 if task[i] == q_task else 0.0 for i in kept]
    else:
        s_u = scaled([float(returns[i]) for i in kept])
    score = {i: r + alpha * u for i, r, u in zip(kept, s_rel, s_u)}
    expected = sorted(kept, key=lambda i: (-score[i], *tie_key(i)))
    assert selected.indices.tolist() == expected
    assert reweight_select(index, candidates, mode, alpha, 1, q_task).indices.tolist() == expected[:1]


def test_reweighting_is_monotone_in_alpha():
    """Test raising alpha never pushes the highest-return candidate down."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        index = VectorIndex(16, 4)
        index.add(
            _entry(rng.normal(size=16), int(rng.integers(5)), i, float(r), 0)
            for i, r in enumerate(rng.permutation(60))
        )
        candidates = search_topl(index, rng.normal(size=16), 20)
        best = int(candidates.indices[np.argmax(index.returns[candidates.indices])])
        ranks = []
        for alpha in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 1e3):
            order = reweight_select(index, candidates, "return", alpha, len(candidates)).indices.tolist()
            ranks.append(order.index(best))
        assert ranks == sorted(ranks, reverse=True)
        assert ranks[-1] == 0


def test_task_reweighting_dominance():
    """Test same-task candidates outrank cross-task ones at alpha 1, up to the
    boundary tie of relevance 0 against relevance 1.
    """
    rng = np.random.default_rng(11)
    for _ in range(50):
        index = _random_index(rng, n=300, dim=16)
        candidates = search_topl(index, rng.normal(size=16), 30)
        q_task = int(rng.integers(5))
        rel = dict(zip(candidates.indices.tolist(), minmax(candidates.sims)))
        order = reweight_select(index, candidates, "task", 1.0, len(candidates), q_task).indices.tolist()
        same = [index.task_ids[i] == q_task for i in order]
        for a in range(len(order)):
            for b in range(a):
                if same[a] and not same[b]:
                    assert rel[order[a]] == 0.0 and rel[order[b]] == 1.0


def test_search_tie_break():
    """Test equal similarities rank by return, then episode id, then offset."""
    index = VectorIndex(2, 4)
    index.add(
        [
            _entry([1, 0], 0, 2, 5.0, 0),
            _entry([1, 0], 0, 1, 5.0, 4),
            _entry([1, 0], 0, 1, 5.0, 0),
            _entry([1, 0], 1, 0, 3.0, 0),
        ]
    )
    assert search_topl(index, np.array([1.0, 0.0]), 4).indices.tolist() == [2, 1, 0, 3]
    assert search_topl(index, np.array([1.0, 0.0]), 1).indices.tolist() == [2]


def test_search_tie_break_across_tasks():
    """Test entries of different tasks that agree on return, episode and offset rank by task id."""
    index = VectorIndex(2, 4)
    index.add(
        [
            _entry([1, 0], 3, 0, 5.0, 0),
            _entry([1, 0], 1, 0, 5.0, 0),
            _entry([1, 0], 2, 0, 6.0, 0),
            _entry([1, 0], 0, 1, 5.0, 0),
        ]
    )
    assert search_topl(index, np.array([1.0, 0.0]), 4).indices.tolist() == [2, 1, 0, 3]


def test_search_excludes_episode():
    """Test entries of the excluded episode never come back."""
    index = VectorIndex(2, 4)
    index.add([_entry([1, 0], 0, 0), _entry([0.9, 0.1], 0, 1), _entry([0, 1], 1, 0)])
    found = search_topl(index, np.array([1.0, 0.0]), 3, exclude_episode=(0, 0))
    assert found.indices.tolist() == [1, 2]
    only = VectorIndex(2, 4)
    only.add([_entry([1, 0], 0, 0)])
    assert len(search_topl(only, np.array([1.0, 0.0]), 3, exclude_episode=(0, 0))) == 0
    assert len(search_topl(VectorIndex(2, 4), np.array([1.0, 0.0]), 3)) == 0


def test_similarity_cutoff_without_threshold():
    """Test a disabled cut-off only truncates."""
    c = Candidates(np.arange(5), np.array([0.99, 0.9, 0.8, 0.7, 0.6]))
    assert similarity_cutoff(c, None, 3).indices.tolist() == [0, 1, 2]
    assert similarity_cutoff(c, 0.85, 3).indices.tolist() == [2, 3, 4]


def test_minmax():
    """Test min-max scaling and its degenerate cases."""
    assert minmax(np.array([1.0, 3.0, 2.0])).tolist() == [0.0, 1.0, 0.5]
    assert minmax(np.array([4.0, 4.0])).tolist() == [0.5, 0.5]
    assert minmax(np.array([])).size == 0


def test_reweight_return_mode():
    """Test return reweighting can overrule a small similarity gap."""
    index = VectorIndex(2, 4)
    index.add([_entry([1, 0.1], 0, 0, 0.0), _entry([1, 0.2], 0, 1, 50.0)])
    candidates = search_topl(index, np.array([1.0, 0.1]), 2)
    assert reweight_select(index, candidates, "return", 0.0, 1).indices.tolist() == [0]
    assert reweight_select(index, candidates, "return", 2.0, 1).indices.tolist() == [1]
    with pytest.raises(ValueError):
        reweight_select(index, candidates, "task", 1.0, 1)


def test_deduplicate():
    """Test near-duplicates of other episodes are dropped and reruns change nothing."""
    index = VectorIndex(2, 4)
    index.add(
        [
            _entry([1, 0], 0, 0),
            _entry([1, 0], 0, 0, offset=4),
            _entry([1, 0.01], 0, 1),
            _entry([0, 1], 1, 0),
        ]
    )
    kept = deduplicate(index, 0.98)
    assert [(e.episode_id, e.offset, e.task_id) for e in kept] == [(0, 0, 0), (0, 4, 0), (0, 0, 1)]
    assert len(deduplicate(kept, 0.98)) == len(kept)
    assert [e.key.tolist() for e in deduplicate(index, 0.98, block=1)] == [
        e.key.tolist() for e in kept
    ]


def test_deduplicate_random_is_idempotent():
    """Test deduplication leaves no close cross-episode pair and is idempotent."""
    rng = np.random.default_rng(2)
    base = rng.normal(size=(20, 4))
    index = VectorIndex(4, 4)
    index.add(
        _entry(base[i % 20] + 1e-3 * rng.normal(size=4), episode_id=i) for i in range(100)
    )
    kept = deduplicate(index, 0.98, block=16)
    keys = kept.keys.astype(np.float64)
    unit = keys / np.linalg.norm(keys, axis=1, keepdims=True)
    sims = unit @ unit.T
    np.fill_diagonal(sims, 0.0)
    assert sims.max() <= 0.98
    assert len(deduplicate(kept, 0.98)) == len(kept)


def test_chunking():
    """Test keys cover C steps and values their 2C-step continuation."""
    record = EpisodeRecord(0, 0, states=[[0, 0]] * 9, actions=list(range(5)) + [0] * 4, rewards=[0] * 9)
    chunks = chunk_episode(record, 4)
    assert [(t, len(k), len(v)) for t, k, v in chunks] == [(0, 4, 8), (4, 4, 5), (8, 1, 1)]
    assert chunks[0][2] == record.segment(0, 8)
    assert expected_entries([9, 4, 1], 4) == 3 + 1 + 1


def test_build_and_grow_index(small_dataset):
    """Test the index holds one entry per chunk and grows with new episodes."""
    records, _ = small_dataset
    g = _embedder()
    index = build_index(records, g, 4)
    lengths = [len(r) for stream in records.values() for r in stream]
    assert len(index) == expected_entries(lengths, 4)
    first = index[0]
    assert (first.task_id, first.episode_id, first.offset, first.past_len) == (0, 0, 0, 4)
    assert first.past == records[0][0].segment(0, 4)
    assert np.allclose(first.key, g.embed_batch([records[0][0].segment(0, 4)])[0], atol=1e-5)

    before = len(index)
    add_episode(index, records[1][0], g)
    assert len(index) == before + 3
    assert len(index.keys) == len(index)


def test_snapshot_round_trip(small_dataset, tmp_path):
    """Test an index snapshot restores keys, values and metadata."""
    records, _ = small_dataset
    index = build_index({0: records[0]}, _embedder(), 4)
    for target in (MemoryStorage(), tmp_path / "idx"):
        save_index(index, target)
        loaded = load_index(target)
        assert len(loaded) == len(index) and loaded.context == 4
        assert np.array_equal(loaded.keys, index.keys)
        assert all(a.value == b.value for a, b in zip(loaded, index))
        assert loaded.offsets.tolist() == index.offsets.tolist()


def test_snapshot_errors():
    """Test broken snapshots are rejected."""
    index = VectorIndex(2, 4)
    index.add([_entry([1, 0]), _entry([0, 1], episode_id=1)])
    storage = MemoryStorage()
    save_index(index, storage)
    storage.write("keys.bin", storage.read("keys.bin")[:-4])
    with pytest.raises(IndexFormatError):
        load_index(storage)

    save_index(index, storage)
    storage.write("index.json", storage.read("index.json").replace(b"radt-idx-1", b"radt-idx-0"))
    with pytest.raises(IndexFormatError):
        load_index(storage)

    storage.delete("values.jsonl")
    with pytest.raises(IndexFormatError):
        load_index(storage)


def test_regularize_query():
    """Test blending pulls training queries towards a stored key."""
    index = VectorIndex(2, 4)
    index.add([_entry([0, 1])])
    q = np.array([1.0, 0.0], dtype=np.float32)
    rng = np.random.default_rng(0)
    blend = RetrievalConfig(query_blend=0.25)
    assert np.allclose(regularize_query(q, True, blend, index, rng), [0.25, 0.75])
    assert regularize_query(q, False, blend, index, rng) is q
    assert regularize_query(q, True, RetrievalConfig(), index, rng) is q


def test_retrieval_config_validation():
    """Test retrieval settings are validated."""
    with pytest.raises(ConfigError):
        RetrievalConfig(top_k=2)
    with pytest.raises(ConfigError):
        RetrievalConfig(cadence=0)
    with pytest.raises(ConfigError):
        RetrievalConfig.from_dict({"top_q": 3})
    cfg = RetrievalConfig(sampling="uniform")
    assert cfg.sampling is SamplingMode.UNIFORM
    assert RetrievalConfig.from_dict(cfg.to_dict()) == cfg


def test_retriever_empty_index(make_record):
    """Test an empty index gives empty contexts and still counts calls."""
    retriever = Retriever(VectorIndex(16, 4), _embedder(), RetrievalConfig(context=4), training=False)
    request = RetrievalRequest(make_record(0, 0, 4).segment(), task_id=0)
    assert retriever.retrieve([request, request], np.random.default_rng(0)) == [None, None]
    assert retriever.calls == 2


def test_retriever_fallback_for_short_queries(small_dataset):
    """Test short queries draw a random same-task entry while training."""
    records, _ = small_dataset
    index = build_index(records, _embedder(), 4)
    config = RetrievalConfig(context=4, min_len=3)
    train = Retriever(index, _embedder(), config, training=True)
    rng = np.random.default_rng(0)
    for _ in range(20):
        request = RetrievalRequest(records[2][4].segment(0, 2), task_id=2, episode_id=4)
        entry = train.retrieve([request], rng)[0]
        assert entry.task_id == 2 and entry.episode_id != 4
    evaluation = Retriever(index, _embedder(), config, training=False)
    tasks = {
        evaluation.retrieve([RetrievalRequest(records[2][4].segment(0, 2), task_id=2)], rng)[0].task_id
        for _ in range(50)
    }
    assert len(tasks) > 1


def test_retriever_search(small_dataset):
    """Test searched contexts never come from the query's own episode."""
    records, _ = small_dataset
    g = _embedder()
    index = build_index(records, g, 4)
    config = RetrievalConfig(context=4, min_len=2, cutoff=None, query_dropout=0.0, top_l=5)
    retriever = Retriever(index, g, config, training=True)
    requests = [
        RetrievalRequest(records[t][e].segment(0, 4), task_id=t, episode_id=e)
        for t in range(3)
        for e in (3, 7)
    ]
    found = retriever.retrieve(requests, np.random.default_rng(0))
    assert retriever.calls == len(requests)
    for request, entry in zip(requests, found):
        assert entry is not None
        assert (entry.task_id, entry.episode_id) != (request.task_id, request.episode_id)


def test_retriever_sampling_modes(small_dataset):
    """Test random context sampling respects the task restriction."""
    records, _ = small_dataset
    g = _embedder()
    index = build_index(records, g, 4)
    request = RetrievalRequest(records[1][0].segment(0, 4), task_id=1, episode_id=0)
    rng = np.random.default_rng(0)
    same = Retriever(index, g, RetrievalConfig(context=4, sampling="same_task"), training=True)
    assert {same.retrieve([request], rng)[0].task_id for _ in range(20)} == {1}
    uniform = Retriever(index, g, RetrievalConfig(context=4, sampling="uniform"), training=True)
    assert len({uniform.retrieve([request], rng)[0].task_id for _ in range(50)}) > 1
