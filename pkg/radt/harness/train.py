from __future__ import annotations

import csv
import io
import logging
import math
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import torch

from radt._hashing import digest
from radt._util import SEED_PURPOSE_ENCODER, SEED_PURPOSE_TRAIN, derive_seed, make_rng
from radt.datagen import EpisodeRecord, Segment, read_dataset
from radt.embed import (
    EmbeddingModel,
    EmbeddingVariant,
    EncoderConfig,
    FrozenEncoder,
    FrozenPolicyEncoder,
    build_random_encoder,
    load_frozen_encoder,
)
from radt.embed.encoder import POLICY_KIND
from radt.exceptions import CheckpointFormatError, ConfigError, TrainingDivergedError
from radt.harness.config import ExperimentConfig, Method
from radt.harness.evaluate import run_trials
from radt.memory import (
    RetrievalRequest,
    Retriever,
    SamplingMode,
    build_index,
    deduplicate,
)
from radt.nncore import OptimState, adamw_step, load_checkpoint, save_checkpoint
from radt.policy import (
    PolicyConfig,
    PolicyModel,
    TokenizedBatch,
    ad_build_pair,
    ad_sequence,
    dt_forward_loss,
    radt_forward_loss,
    tokenize,
)
from radt.storage import FileStorage


__all__ = (
    "CHECKPOINT_NAME",
    "TrainResult",
    "BatchSampler",
    "train",
    "load_policy",
    "build_embedder",
)

if TYPE_CHECKING:
    from radt._util import PathLikeStr

_LOGGER = logging.getLogger("radt.harness.train")

CHECKPOINT_NAME = "policy.ckpt"
LOSS_LOG_NAME = "loss.csv"
EVAL_LOG_NAME = "evaluations.csv"

# Dropout draws from the process-wide torch RNG; one seeded training loop at a
# time may own it.
_TORCH_RNG_LOCK = threading.RLock()


@dataclass
class TrainResult:
    checkpoint: Path
    digest: str
    losses: list[tuple[int, float]] = field(default_factory=list)
    evaluations: list[tuple[int, float]] = field(default_factory=list)
    reused: bool = False


class BatchSampler:
    """Draws training batches from per-task episode streams.

    Decision Transformer batches are sub-trajectories ending at a uniformly
    drawn step of a uniformly drawn episode. With a retriever every input
    also gets a retrieved context, queried with the input itself and never
    from the input's own episode. Algorithm Distillation batches are pairs of
    episodes ``k`` apart in a task's stream, loss on the later one only.
    """

    def __init__(
        self,
        records: Mapping[int, Sequence[EpisodeRecord]],
        policy: PolicyConfig,
        method: Method,
        ad_k: int = 100,
        retriever: Retriever | None = None,
    ) -> None:
        self.records = {tid: list(stream) for tid, stream in records.items() if stream}
        if not self.records:
            raise ConfigError("The training dataset holds no episodes")
        self.task_ids = sorted(self.records)
        self.policy = policy
        self.method = method
        self.ad_k = ad_k
        self.retriever = retriever
        if method.retrieves and retriever is None:
            raise ConfigError(f"Method '{method.value}' needs a retriever")

    def _task(self, rng: np.random.Generator) -> int:
        return self.task_ids[int(rng.integers(len(self.task_ids)))]

    def _ad_batch(self, batch_size: int, rng: np.random.Generator) -> TokenizedBatch:
        seqs, starts = [], []
        for _ in range(batch_size):
            tid = self._task(rng)
            seq, loss_from = ad_sequence(*ad_build_pair(self.records[tid], self.ad_k, rng))
            seqs.append(seq)
            starts.append(loss_from)
        return tokenize(seqs, self.policy.context, self.policy.width, use_rtg=False, loss_from=starts)

    def sample(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[TokenizedBatch, TokenizedBatch | None]:
        """One batch of inputs and, for retrieval-augmented methods, their
        retrieved contexts.
        """
        if self.method is Method.AD:
            return self._ad_batch(batch_size, rng), None

        C = self.policy.context
        segments: list[Segment] = []
        requests: list[RetrievalRequest] = []
        for _ in range(batch_size):
            tid = self._task(rng)
            stream = self.records[tid]
            record = stream[int(rng.integers(len(stream)))]
            end = int(rng.integers(1, len(record) + 1))
            seg = record.segment(max(0, end - C), end)
            segments.append(seg)
            requests.append(RetrievalRequest(seg, tid, record.episode_id))
        batch = tokenize(segments, C, self.policy.width, use_rtg=True)
        if self.retriever is None:
            return batch, None
        entries = self.retriever.retrieve(requests, rng)
        values = [e.value if e is not None else Segment.empty() for e in entries]
        return batch, tokenize(values, 2 * C, self.policy.width, use_rtg=True)


def _encoder_config(config: ExperimentConfig) -> ExperimentConfig:
    """The plain Decision Transformer experiment that provides a
    domain-specific embedding.
    """
    return replace(
        config,
        name=f"{config.name}-encoder",
        method=Method.DT,
        retrieval=replace(config.retrieval, sampling=SamplingMode.RETRIEVAL),
    )


def build_embedder(
    config: ExperimentConfig,
    seed: int,
    records: Mapping[int, Sequence[EpisodeRecord]] | None = None,
) -> EmbeddingModel:
    """The embedding model ``g`` an RA-DT run of ``seed`` retrieves with.

    A domain-specific embedding without ``encoder_path`` comes from the
    Decision Transformer of the same experiment and seed, trained first when
    its checkpoint does not exist yet.
    """
    ecfg = config.embedding
    if ecfg.variant is EmbeddingVariant.DOMAIN_SPECIFIC:
        path = ecfg.encoder_path
        if path is None:
            path = train(_encoder_config(config), seed, records).checkpoint
        encoder = load_frozen_encoder(path)
        if not isinstance(encoder, FrozenPolicyEncoder):
            raise ConfigError(f"'{path}' is not a Decision Transformer checkpoint")
        return EmbeddingModel.domain_specific(encoder, ecfg.aggregation)

    if ecfg.encoder_path is not None:
        encoder = load_frozen_encoder(ecfg.encoder_path)
        if not isinstance(encoder, FrozenEncoder):
            raise ConfigError(f"'{ecfg.encoder_path}' is not a frozen encoder checkpoint")
    else:
        encoder = build_random_encoder(
            EncoderConfig(
                vocab=ecfg.vocab,
                hidden=ecfg.hidden,
                n_layers=ecfg.n_layers,
                n_heads=ecfg.n_heads,
                seed=derive_seed(ecfg.encoder_seed, SEED_PURPOSE_ENCODER),
            )
        )
    env = config.env
    return EmbeddingModel.domain_agnostic(
        encoder,
        env.width,
        env.height,
        env.episode_length,
        beta=ecfg.beta,
        seed=ecfg.projection_seed,
        aggregation=ecfg.aggregation,
    )


def load_policy(path: PathLikeStr) -> PolicyModel:
    """Load a trained policy checkpoint in inference mode.

    Raises:
        ArtifactError: If the file does not exist
        CheckpointFormatError: If it is not a policy checkpoint
    """
    ckpt = load_checkpoint(path)
    if ckpt.config.get("kind") != POLICY_KIND:
        raise CheckpointFormatError(f"'{path}' is not a policy checkpoint (kind={ckpt.config.get('kind')!r})")
    try:
        with torch.device("meta"):
            model = PolicyModel(PolicyConfig.from_dict(ckpt.config["policy"]))
        model.load_state_dict(ckpt.tensors, assign=True)
    except (KeyError, TypeError, RuntimeError) as e:
        raise CheckpointFormatError(f"'{path}' does not match its recorded architecture") from e
    return model.eval()


def _csv(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def train(
    config: ExperimentConfig,
    seed: int,
    records: Mapping[int, Sequence[EpisodeRecord]] | None = None,
    force: bool = False,
) -> TrainResult:
    """Train one policy for ``seed`` and write its checkpoint and loss log.

    A checkpoint that already exists for the same training settings is
    reused unless ``force`` is set.

    Raises:
        TrainingDivergedError: If the loss stops being finite
        ConfigError: If the configuration cannot be trained
    """
    run_dir = config.run_dir(seed)
    path = run_dir / CHECKPOINT_NAME
    if path.is_file() and not force:
        ckpt = load_checkpoint(path)
        _LOGGER.info("Reusing trained %s policy for seed %d from %s", config.method.value, seed, path)
        return TrainResult(path, ckpt.digest(), reused=True)

    if records is None:
        config.check_paths()
        records, _ = read_dataset(config.dataset.path)
    policy_cfg = config.policy_config()
    tcfg = config.train
    rng = make_rng(seed, SEED_PURPOSE_TRAIN)

    retriever = None
    embedder = None
    if config.method.retrieves:
        embedder = build_embedder(config, seed, records)
        index = build_index(records, embedder, config.retrieval.context)
        if config.retrieval.dedup:
            index = deduplicate(index, config.retrieval.dedup_threshold)
        retriever = Retriever(index, embedder, config.retrieval, training=True)
    sampler = BatchSampler(records, policy_cfg, config.method, config.ad_k, retriever)

    eval_tasks = config.tasks() if tcfg.eval_trials > 0 else []
    eval_ids = config.task_ids() if eval_tasks else []
    losses: list[tuple[int, float]] = []
    evaluations: list[tuple[int, float]] = []
    _LOGGER.info(
        "Training %s (%s) seed=%d for %d steps, batch %d",
        config.name,
        config.method.value,
        seed,
        tcfg.steps,
        tcfg.batch_size,
    )
    with _TORCH_RNG_LOCK, torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, SEED_PURPOSE_TRAIN, 1))
        init = torch.Generator().manual_seed(derive_seed(seed, SEED_PURPOSE_TRAIN, 2))
        model = PolicyModel(policy_cfg, generator=init)
        model.train()
        state = OptimState.create(model, config.optim_config())
        for step in range(1, tcfg.steps + 1):
            batch, context = sampler.sample(tcfg.batch_size, rng)
            if config.method.retrieves:
                loss, _ = radt_forward_loss(model, batch, context)
            else:
                loss, _ = dt_forward_loss(model, batch)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(step, value)
            state.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            norm = adamw_step(model, state)

            if step == 1 or step % tcfg.log_every == 0 or step == tcfg.steps:
                losses.append((step, value))
                _LOGGER.info("step %d: loss %.4f, grad norm %.3f, lr %.2e", step, value, norm, state.lr)
            if eval_tasks and step % tcfg.eval_every == 0:
                outcome = run_trials(
                    model,
                    eval_tasks,
                    config,
                    seed,
                    trials=tcfg.eval_trials,
                    embedder=embedder,
                    task_ids=eval_ids,
                    stream=step,
                )
                evaluations.append((step, outcome.curve.final_mean()))
                _LOGGER.info("step %d: mean return %.2f after %d trial(s)", step, evaluations[-1][1], tcfg.eval_trials)
        torch_rng = torch.get_rng_state()

    tensors = model.state_dict()
    save_checkpoint(
        path,
        tensors,
        {
            "kind": POLICY_KIND,
            "policy": policy_cfg.to_dict(),
            "method": config.method.value,
            "seed": seed,
            "steps": tcfg.steps,
            "experiment": config.to_dict(),
        },
        {"numpy": rng.bit_generator.state, "torch": torch_rng},
    )
    storage = FileStorage(run_dir)
    storage.write(LOSS_LOG_NAME, _csv(("step", "loss"), [(s, repr(v)) for s, v in losses]))
    if evaluations:
        storage.write(EVAL_LOG_NAME, _csv(("step", "mean_return"), [(s, repr(v)) for s, v in evaluations]))
    result = TrainResult(path, digest(sorted(tensors.items())), losses, evaluations)
    _LOGGER.info("Saved checkpoint %s (digest %s)", path, result.digest)
    return result
