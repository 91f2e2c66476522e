"""In-context evaluation.

Every task starts with an empty index. A trial is one full episode; after it
the episode is stored in the task's own index, so later trials can retrieve
from earlier ones. Tasks of one seed run in lockstep so that every
environment step is a single batched forward pass.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import torch

from radt._util import SEED_PURPOSE_EVAL, make_rng
from radt.datagen import EpisodeRecord, Segment
from radt.envs import GridEnv, GridTask
from radt.exceptions import ConfigError, InvariantViolation
from radt.harness.metrics import TrialCurve
from radt.memory import (
    IndexEntry,
    RetrievalRequest,
    Retriever,
    VectorIndex,
    add_episode,
    deduplicate,
)
from radt.policy import (
    ad_eval_context,
    check_rtg_stream,
    decrement_rtg,
    sample_target_return,
    select_action,
    tokenize,
)


__all__ = ("EvalOutcome", "run_trials", "icl_evaluate")

if TYPE_CHECKING:
    from radt.embed import EmbeddingModel
    from radt.harness.config import ExperimentConfig
    from radt.policy import PolicyModel

_LOGGER = logging.getLogger("radt.harness.evaluate")


@dataclass
class EvalOutcome:
    """Returns of one seed plus per-(task, trial) bookkeeping.

    ``retrieval_calls`` and ``index_sizes`` are ``(n_tasks, trials)``; index
    sizes are counted after the trial's episode was stored.
    ``attention_sample`` is the last input and retrieved value seen on the
    first task, if anything was retrieved.
    """

    curve: TrialCurve
    retrieval_calls: np.ndarray
    index_sizes: np.ndarray
    attention_sample: tuple[Segment, Segment] | None = None


class _Episode:
    """Step buffers of one ongoing episode."""

    __slots__ = ("states", "actions", "rewards", "rtg")

    def __init__(self, obs: tuple[int, int], rtg: float) -> None:
        self.states = [obs]
        self.actions: list[int] = []
        self.rewards: list[int] = []
        self.rtg = [rtg]

    def completed(self, last: int | None = None) -> Segment:
        """The finished steps, or only the ``last`` of them."""
        t = len(self.actions)
        start = 0 if last is None else max(0, t - last)
        return Segment(
            np.asarray(self.states[start:t], dtype=np.int64).reshape(-1, 2),
            np.asarray(self.actions[start:t], dtype=np.int64),
            np.asarray(self.rewards[start:t], dtype=np.int64),
            np.asarray(self.rtg[start:t], dtype=np.float64),
        )

    def policy_input(self, last: int | None = None) -> Segment:
        """Finished steps plus the current state; its action and reward are
        placeholders the policy cannot attend to.
        """
        t = len(self.actions)
        start = 0 if last is None else max(0, t + 1 - last)
        return Segment(
            np.asarray(self.states[start:], dtype=np.int64).reshape(-1, 2),
            np.asarray(self.actions[start:] + [0], dtype=np.int64),
            np.asarray(self.rewards[start:] + [0], dtype=np.int64),
            np.asarray(self.rtg[start:], dtype=np.float64),
        )


def _check_fidelity(entry: IndexEntry | None, task_id: int) -> None:
    if entry is not None and entry.task_id != task_id:
        raise InvariantViolation(
            f"Evaluation of task {task_id} retrieved a trajectory of task {entry.task_id}"
        )


def run_trials(
    model: PolicyModel,
    tasks: Sequence[GridTask],
    config: ExperimentConfig,
    seed: int,
    trials: int | None = None,
    embedder: EmbeddingModel | None = None,
    task_ids: Sequence[int] | None = None,
    method: str | None = None,
    retrieval: bool = True,
    stream: int = 0,
) -> EvalOutcome:
    """Play ``trials`` consecutive episodes on every task.

    Args:
        model: Policy in any mode; it is switched to inference mode
        tasks: Tasks sharing one grid size and episode length
        config: Experiment settings (retrieval, decoding, target returns)
        seed: Root of the per-task sampling streams
        trials: Episodes per task (default ``config.evaluation.trials``)
        embedder: Retrieval embedding, required for models with
            cross-attention
        task_ids: Ids used for results and index entries (default
            ``0..len(tasks)-1``)
        method: Name recorded in the curve (default ``config.name``)
        retrieval: ``False`` keeps the retrieved context empty throughout
        stream: Extra label of the sampling streams, to keep periodic
            evaluations during training apart from the final one

    Raises:
        InvariantViolation: If a task retrieves a trajectory of another task
            or a return-to-go stream breaks the decrement rule
    """
    if not tasks:
        raise ConfigError("Evaluation needs at least one task")
    trials = trials or config.evaluation.trials
    task_ids = list(task_ids) if task_ids is not None else list(range(len(tasks)))
    pcfg = model.config
    first = tasks[0]
    if any((t.width, t.height, t.episode_len) != (first.width, first.height, first.episode_len) for t in tasks):
        raise ConfigError("Tasks evaluated together must share grid size and episode length")
    retrieves = pcfg.cross_attention
    is_ad = not pcfg.use_rtg
    if retrieves and embedder is None:
        raise ConfigError("A retrieval-augmented policy needs an embedding model")

    n, C, L = len(tasks), config.retrieval.context, first.episode_len
    ecfg = config.evaluation
    rngs = [make_rng(seed, SEED_PURPOSE_EVAL, tid, stream) for tid in task_ids]
    envs = [GridEnv(task) for task in tasks]
    retrievers = (
        [Retriever(VectorIndex(embedder.dim, C), embedder, config.retrieval, training=False) for _ in tasks]
        if retrieves
        else []
    )
    returns = np.zeros((n, trials), dtype=np.float64)
    calls = np.zeros((n, trials), dtype=np.int64)
    sizes = np.zeros((n, trials), dtype=np.int64)
    previous: list[list[Segment]] = [[] for _ in tasks]
    attention_sample: tuple[Segment, Segment] | None = None

    was_training = model.training
    model.eval()
    try:
        for trial in range(trials):
            episodes = []
            for i, env in enumerate(envs):
                obs = env.reset()
                rtg0 = 0.0 if is_ad else sample_target_return(
                    first.kind, first.width, first.height, rngs[i], ecfg.target_return
                )
                episodes.append(_Episode(obs, rtg0))
            contexts: list[IndexEntry | None] = [None] * n
            calls_before = [r.calls for r in retrievers]

            for t in range(L):
                if retrieves and retrieval and t % config.retrieval.cadence == 0:
                    contexts = _retrieve_step(retrievers, episodes, task_ids, rngs, C)

                if is_ad:
                    inputs = [ad_eval_context(previous[i], ep.policy_input()) for i, ep in enumerate(episodes)]
                else:
                    inputs = [ep.policy_input(C) for ep in episodes]
                batch = tokenize(inputs, pcfg.context, pcfg.width, use_rtg=pcfg.use_rtg)
                ctx_batch = None
                if retrieves:
                    values = [e.value if e is not None else Segment.empty() for e in contexts]
                    ctx_batch = tokenize(values, 2 * C, pcfg.width, use_rtg=True)
                with torch.no_grad():
                    logits = model(batch, ctx_batch)
                last = torch.tensor([len(s) - 1 for s in inputs])
                logits = logits[torch.arange(n), last].double().numpy()

                for i, (env, ep) in enumerate(zip(envs, episodes)):
                    action = select_action(logits[i], rngs[i], ecfg.decode, ecfg.temperature)
                    result = env.step(action)
                    ep.actions.append(action)
                    ep.rewards.append(result.reward)
                    if t + 1 < L:
                        ep.states.append(result.obs)
                        ep.rtg.append(decrement_rtg(ep.rtg[-1], result.reward))
                if retrieves and contexts[0] is not None:
                    attention_sample = (inputs[0], contexts[0].value)

            for i, ep in enumerate(episodes):
                if not is_ad:
                    check_rtg_stream(np.asarray(ep.rtg), np.asarray(ep.rewards))
                record = EpisodeRecord(
                    task_id=task_ids[i],
                    episode_id=trial,
                    states=np.asarray(ep.states, dtype=np.int64),
                    actions=np.asarray(ep.actions, dtype=np.int64),
                    rewards=np.asarray(ep.rewards, dtype=np.int64),
                )
                returns[i, trial] = record.total_return
                if is_ad:
                    previous[i] = [record.segment()]
                if retrieves:
                    r = retrievers[i]
                    add_episode(r.index, record, embedder)
                    if ecfg.dedup:
                        r.index = deduplicate(r.index, config.retrieval.dedup_threshold)
                    calls[i, trial] = r.calls - calls_before[i]
                    sizes[i, trial] = len(r.index)
            _LOGGER.info(
                "seed=%d trial %d/%d: mean return %.2f over %d task(s)",
                seed,
                trial + 1,
                trials,
                float(returns[:, trial].mean()),
                n,
            )
    finally:
        model.train(was_training)

    curve = TrialCurve(method or config.name, [seed], task_ids, returns[None, :, :])
    return EvalOutcome(curve, calls, sizes, attention_sample)


def _retrieve_step(
    retrievers: Sequence[Retriever],
    episodes: Sequence[_Episode],
    task_ids: Sequence[int],
    rngs: Sequence[np.random.Generator],
    context: int,
) -> list[IndexEntry | None]:
    """One retrieval for every task; query embeddings are computed in one batch."""
    out: list[IndexEntry | None] = [None] * len(retrievers)
    requests = [RetrievalRequest(ep.completed(context), tid) for ep, tid in zip(episodes, task_ids)]
    searchable = []
    for i, (r, req) in enumerate(zip(retrievers, requests)):
        if len(r.index) == 0 or len(req.query) < r.config.min_len:
            out[i] = r.fallback(req, rngs[i])
        else:
            searchable.append(i)
    if searchable:
        embedder = retrievers[searchable[0]].embedder
        queries = embedder.embed_batch([requests[i].query for i in searchable])
        for i, q in zip(searchable, queries):
            out[i] = retrievers[i].lookup(requests[i], q, rngs[i])
    for entry, tid in zip(out, task_ids):
        _check_fidelity(entry, tid)
    return out


def icl_evaluate(
    model: PolicyModel,
    tasks: Sequence[GridTask],
    config: ExperimentConfig,
    seed: int,
    trials: int | None = None,
    embedder: EmbeddingModel | None = None,
    task_ids: Sequence[int] | None = None,
) -> TrialCurve:
    """In-context learning curve of one seed over ``tasks``."""
    return run_trials(model, tasks, config, seed, trials, embedder, task_ids).curve
