"""Experiment configuration.

An experiment is one JSON document with the sections ``env``, ``dataset``,
``policy``, ``retrieval``, ``embedding``, ``optim``, ``train`` and
``evaluation`` plus the top-level keys ``name``, ``method``, ``seeds``,
``output_dir`` and ``ad_k``. Missing keys take the value of the preset the
document is loaded on top of; unknown keys are rejected.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, TYPE_CHECKING

from radt._hashing import digest
from radt._util import SEED_PURPOSE_SPLIT, derive_seed
from radt.datagen import QLearningConfig
from radt.embed import Aggregation, EmbeddingVariant
from radt.envs import GridTask, TaskKind, task_split
from radt.exceptions import ConfigError
from radt.memory import RetrievalConfig, SamplingMode
from radt.nncore import OptimConfig
from radt.policy import MAX_AD_EPISODES, DecodeMode, PolicyConfig


__all__ = (
    "Method",
    "EnvConfig",
    "DatasetConfig",
    "ArchitectureConfig",
    "EmbeddingConfig",
    "TrainConfig",
    "EvalConfig",
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "load_config",
)

if TYPE_CHECKING:
    from radt._util import PathLikeStr

_LOGGER = logging.getLogger("radt.harness.config")


class Method(str, Enum):
    DT = "dt"
    AD = "ad"
    RADT = "radt"
    RADT_SAMPLING = "radt_sampling"

    @property
    def retrieves(self) -> bool:
        return self in (Method.RADT, Method.RADT_SAMPLING)


def _check_keys(cls: type, data: dict[str, Any], section: str) -> None:
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"Unknown option(s) in '{section}': {sorted(unknown)}")


def _build(cls: type, data: Any, section: str) -> Any:
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"Section '{section}' must be a JSON object")
    _check_keys(cls, data, section)
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid section '{section}': {e}") from e


@dataclass(frozen=True)
class EnvConfig:
    kind: TaskKind = TaskKind.DARK_ROOM
    width: int = 10
    height: int = 10
    n_train: int = 80
    n_eval: int = 20
    split_seed: int = 0
    episode_len: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"Grid must be at least 1x1, got {self.width}x{self.height}")
        if self.n_train < 1 or self.n_eval < 0:
            raise ConfigError("Need at least one training task and n_eval >= 0")

    @property
    def episode_length(self) -> int:
        return self.episode_len or self.width * self.height

    def split(self) -> tuple[list[GridTask], list[GridTask]]:
        return task_split(
            self.kind,
            self.width,
            self.height,
            self.n_train,
            self.n_eval,
            derive_seed(self.split_seed, SEED_PURPOSE_SPLIT),
            self.episode_length,
        )

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), "kind": self.kind.value}


@dataclass(frozen=True)
class DatasetConfig:
    path: str = "data/dark_room_10x10"
    transitions_per_task: int = 20_000
    seed: int = 0
    q_learning: QLearningConfig = field(default_factory=QLearningConfig)

    def __post_init__(self) -> None:
        if isinstance(self.q_learning, dict):
            q = dict(self.q_learning)
            q.pop("name", None)
            object.__setattr__(self, "q_learning", _build(QLearningConfig, q, "dataset.q_learning"))
        if self.transitions_per_task < 1:
            raise ConfigError("transitions_per_task must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": self.path,
            "transitions_per_task": self.transitions_per_task,
            "seed": self.seed,
            "q_learning": asdict(self.q_learning),
        }


@dataclass(frozen=True)
class ArchitectureConfig:
    """Transformer size; grid dimensions and the layout follow from ``env``
    and ``method``.
    """

    context: int = 50
    n_layers: int = 2
    n_heads: int = 4
    hidden: int = 64
    dropout: float = 0.2
    mlp_ratio: int = 4

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EmbeddingConfig:
    """The retrieval embedding ``g``.

    ``domain_specific`` uses a trained Decision Transformer: the one at
    ``encoder_path`` or, when unset, the DT trained by the same experiment
    for the same seed. ``domain_agnostic`` uses a frozen encoder, loaded from
    ``encoder_path`` or built at random from ``encoder_seed`` and the sizes
    given here.
    """

    variant: EmbeddingVariant = EmbeddingVariant.DOMAIN_SPECIFIC
    encoder_path: str | None = None
    aggregation: Aggregation = Aggregation.STATE
    beta: float = 10.0
    projection_seed: int = 0
    encoder_seed: int = 0
    vocab: int = 512
    hidden: int = 64
    n_layers: int = 2
    n_heads: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", EmbeddingVariant(self.variant))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), "variant": self.variant.value, "aggregation": self.aggregation.value}


@dataclass(frozen=True)
class TrainConfig:
    """Gradient steps and logging. ``eval_trials=0`` turns periodic
    evaluation off.
    """

    steps: int = 20_000
    batch_size: int = 64
    log_every: int = 100
    eval_every: int = 5_000
    eval_trials: int = 5

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if self.log_every < 1 or self.eval_every < 1 or self.eval_trials < 0:
            raise ConfigError("log_every and eval_every must be positive, eval_trials >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EvalConfig:
    trials: int = 40
    split: str = "eval"
    decode: DecodeMode = DecodeMode.SAMPLE
    temperature: float = 1.0
    dedup: bool = False
    target_return: tuple[float, float] | None = None
    workers: int = 1
    export_attention: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "decode", DecodeMode(self.decode))
        if self.target_return is not None:
            if len(self.target_return) != 2:
                raise ConfigError("target_return must be [mean, std]")
            object.__setattr__(self, "target_return", tuple(float(v) for v in self.target_return))
        if self.split not in ("eval", "train"):
            raise ConfigError(f"split must be 'eval' or 'train', got {self.split!r}")
        if self.trials < 1 or self.workers < 1:
            raise ConfigError("trials and workers must be positive")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["decode"] = self.decode.value
        data["target_return"] = list(self.target_return) if self.target_return else None
        return data


_SECTIONS: dict[str, type] = {
    "env": EnvConfig,
    "dataset": DatasetConfig,
    "policy": ArchitectureConfig,
    "retrieval": RetrievalConfig,
    "embedding": EmbeddingConfig,
    "optim": OptimConfig,
    "train": TrainConfig,
    "evaluation": EvalConfig,
}

# Options that only change how a trained policy is evaluated.
_EVAL_ONLY_RETRIEVAL = ("cadence", "eval_mode")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "radt"
    method: Method = Method.RADT
    seeds: tuple[int, ...] = (0, 1, 2)
    output_dir: str = "runs"
    ad_k: int = 100
    env: EnvConfig = field(default_factory=EnvConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    policy: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for name, cls in _SECTIONS.items():
            object.__setattr__(self, name, _build(cls, getattr(self, name), name))

        if not self.seeds:
            raise ConfigError("At least one seed is required")
        if len(set(self.seeds)) != len(self.seeds) or min(self.seeds) < 0:
            raise ConfigError(f"Seeds must be distinct and non-negative, got {list(self.seeds)}")
        if self.ad_k < 1:
            raise ConfigError(f"ad_k must be at least 1, got {self.ad_k}")
        if self.retrieval.context != self.policy.context:
            raise ConfigError(
                f"retrieval.context ({self.retrieval.context}) must equal "
                f"policy.context ({self.policy.context})"
            )
        sampling = self.retrieval.sampling
        if self.method is Method.RADT and sampling is not SamplingMode.RETRIEVAL:
            raise ConfigError("Method 'radt' retrieves by search; use 'radt_sampling' for random contexts")
        if self.method is Method.RADT_SAMPLING and sampling is SamplingMode.RETRIEVAL:
            raise ConfigError("Method 'radt_sampling' needs retrieval.sampling 'same_task' or 'uniform'")

    def policy_config(self, method: Method | str | None = None) -> PolicyConfig:
        """Full architecture for ``method`` (default: this experiment's)."""
        method = Method(method or self.method)
        arch = self.policy
        episode_len = self.env.episode_length
        return PolicyConfig(
            width=self.env.width,
            height=self.env.height,
            episode_len=episode_len,
            context=MAX_AD_EPISODES * episode_len if method is Method.AD else arch.context,
            n_layers=arch.n_layers,
            n_heads=arch.n_heads,
            hidden=arch.hidden,
            dropout=arch.dropout,
            mlp_ratio=arch.mlp_ratio,
            cross_attention=method.retrieves,
            use_rtg=method is not Method.AD,
        )

    def optim_config(self) -> OptimConfig:
        """The optimizer settings with the schedule stretched over ``train.steps``."""
        return replace(self.optim, total_steps=self.train.steps)

    def tasks(self, split: str | None = None) -> list[GridTask]:
        train, held_out = self.env.split()
        return train if (split or self.evaluation.split) == "train" else held_out

    def task_ids(self, split: str | None = None) -> list[int]:
        """Ids of the tasks of ``split``; held-out tasks are numbered after
        the training tasks.
        """
        n = len(self.tasks(split))
        if (split or self.evaluation.split) == "train":
            return list(range(n))
        return list(range(self.env.n_train, self.env.n_train + n))

    def training_key(self, seed: int) -> str:
        """Digest of everything that determines the trained weights for ``seed``."""
        retrieval = self.retrieval.to_dict()
        for name in _EVAL_ONLY_RETRIEVAL:
            retrieval.pop(name)
        train = self.train.to_dict()
        train.pop("eval_every")
        train.pop("eval_trials")
        train.pop("log_every")
        payload: dict[str, Any] = {
            "method": self.method.value,
            "seed": seed,
            "env": self.env.to_dict(),
            "dataset": self.dataset.to_dict(),
            "policy": self.policy.to_dict(),
            "optim": self.optim_config().to_dict(),
            "train": train,
        }
        if self.method.retrieves:
            payload["retrieval"] = retrieval
            payload["embedding"] = self.embedding.to_dict()
        if self.method is Method.AD:
            payload["ad_k"] = self.ad_k
        return digest(json.dumps(payload, sort_keys=True))

    def run_dir(self, seed: int) -> Path:
        """Directory of the trained artifacts for ``seed``. Configurations that
        train identically share it.
        """
        return Path(self.output_dir) / "checkpoints" / self.training_key(seed)[:16] / f"seed_{seed}"

    @property
    def results_dir(self) -> Path:
        return Path(self.output_dir) / "results"

    def check_paths(self) -> None:
        """Raise :class:`ConfigError` when a referenced input does not exist."""
        if not Path(self.dataset.path).is_dir():
            raise ConfigError(f"Dataset directory '{self.dataset.path}' does not exist, run 'radt generate'")
        path = self.embedding.encoder_path
        if self.method.retrieves and path is not None and not Path(path).is_file():
            raise ConfigError(f"Encoder checkpoint '{path}' does not exist")

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Apply command-line overrides; ``None`` values are ignored.

        Recognised keys: ``name``, ``seed``, ``method``, ``trials``,
        ``cadence``, ``alpha``, ``decode``, ``temperature``, ``workers``,
        ``output_dir``.
        """
        o = {k: v for k, v in overrides.items() if v is not None}
        config = self
        top: dict[str, Any] = {}
        if "name" in o:
            top["name"] = o.pop("name")
        if "seed" in o:
            top["seeds"] = (int(o.pop("seed")),)
        if "method" in o:
            top["method"] = Method(o.pop("method"))
            if top["method"] is Method.RADT_SAMPLING and self.retrieval.sampling is SamplingMode.RETRIEVAL:
                top["retrieval"] = replace(self.retrieval, sampling=SamplingMode.SAME_TASK)
            elif top["method"] is Method.RADT:
                top["retrieval"] = replace(self.retrieval, sampling=SamplingMode.RETRIEVAL)
        if "output_dir" in o:
            top["output_dir"] = str(o.pop("output_dir"))
        if top:
            config = replace(config, **top)

        retrieval = {k: o.pop(k) for k in ("cadence", "alpha") if k in o}
        if retrieval:
            config = replace(config, retrieval=replace(config.retrieval, **retrieval))
        evaluation = {k: o.pop(k) for k in ("trials", "decode", "temperature", "workers") if k in o}
        if evaluation:
            config = replace(config, evaluation=replace(config.evaluation, **evaluation))
        if o:
            raise ConfigError(f"Unknown override(s): {sorted(o)}")
        return config

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "method": self.method.value,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "ad_k": self.ad_k,
            **{name: getattr(self, name).to_dict() for name in _SECTIONS},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        _check_keys(cls, data, "experiment")
        data = dict(data)
        for name, section in _SECTIONS.items():
            if name in data:
                data[name] = _build(section, data[name], name)
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid experiment configuration: {e}") from e


def _desk() -> dict[str, Any]:
    return ExperimentConfig(
        optim=OptimConfig(lr=3e-4, min_lr=1e-6, warmup_steps=1_000),
    ).to_dict()


def _full() -> dict[str, Any]:
    return ExperimentConfig(
        dataset=DatasetConfig(transitions_per_task=100_000),
        policy=ArchitectureConfig(n_layers=4, n_heads=8, hidden=512),
        optim=OptimConfig(lr=1e-4, warmup_steps=4_000),
        train=TrainConfig(steps=100_000, batch_size=128, eval_every=25_000, eval_trials=40),
    ).to_dict()


PRESETS = {"desk": _desk, "full": _full}


def _merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def preset(name: str) -> dict[str, Any]:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"Unknown preset {name!r}, expected one of {sorted(PRESETS)}") from None


def load_config(path: PathLikeStr | None = None, base: str = "desk") -> ExperimentConfig:
    """Load a JSON experiment document on top of the ``base`` preset.

    Raises:
        ConfigError: If the file is missing, not JSON, or holds invalid options
    """
    data = preset(base)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config file '{path}'") from e
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file '{path}' is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"Config file '{path}' must hold a JSON object")
        ctx = doc.get("policy", {}).get("context") if isinstance(doc.get("policy"), dict) else None
        if ctx is not None and isinstance(doc.setdefault("retrieval", {}), dict):
            doc["retrieval"].setdefault("context", ctx)
        data = _merge(data, doc)
    config = ExperimentConfig.from_dict(data)
    if base == "full":
        _LOGGER.warning("The full preset trains for %d steps per seed and runs for a long time", config.train.steps)
    return config
