from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any

from radt.exceptions import ConfigError


__all__ = ("UtilityMode", "SamplingMode", "RetrievalConfig")


class UtilityMode(str, Enum):
    """Utility term of the reweighting score.

    ``task``: 1 for candidates of the query's task, else 0. ``return``:
    normalized total return of the source episode. ``position``: normalized
    position of the source episode in its stream.
    """

    TASK = "task"
    RETURN = "return"
    POSITION = "position"


class SamplingMode(str, Enum):
    """How training contexts are chosen: by search, or drawn at random from
    the same task or from the whole index.
    """

    RETRIEVAL = "retrieval"
    SAME_TASK = "same_task"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class RetrievalConfig:
    """Retrieval hyperparameters.

    ``cutoff=None`` disables the similarity cut-off and ``query_blend=None``
    disables query blending. The cut-off, query dropout and blending only act
    during training.
    """

    context: int = 50
    top_l: int = 50
    top_k: int = 1
    alpha: float = 1.0
    cutoff: float | None = 0.98
    query_dropout: float = 0.2
    query_blend: float | None = None
    min_len: int = 10
    cadence: int = 1
    dedup: bool = True
    dedup_threshold: float = 0.98
    train_mode: UtilityMode = UtilityMode.TASK
    eval_mode: UtilityMode = UtilityMode.RETURN
    sampling: SamplingMode = SamplingMode.RETRIEVAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_mode", UtilityMode(self.train_mode))
        object.__setattr__(self, "eval_mode", UtilityMode(self.eval_mode))
        object.__setattr__(self, "sampling", SamplingMode(self.sampling))
        if self.context < 1:
            raise ConfigError(f"context must be at least 1 step, got {self.context}")
        if not 1 <= self.top_k <= self.top_l:
            raise ConfigError(f"Need 1 <= top_k <= top_l, got top_k={self.top_k}, top_l={self.top_l}")
        if self.top_k != 1:
            raise ConfigError("Only a single retrieved trajectory per query is supported (top_k=1)")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if not 0.0 <= self.query_dropout <= 1.0:
            raise ConfigError(f"query_dropout must be in [0, 1], got {self.query_dropout}")
        if self.query_blend is not None and not 0.0 <= self.query_blend <= 1.0:
            raise ConfigError(f"query_blend must be in [0, 1], got {self.query_blend}")
        if self.cadence < 1 or self.min_len < 0:
            raise ConfigError("cadence must be >= 1 and min_len >= 0")

    @property
    def top_m(self) -> int:
        """Candidates fetched before the similarity cut-off."""
        return 2 * self.top_l

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for name in ("train_mode", "eval_mode", "sampling"):
            data[name] = data[name].value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RetrievalConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown retrieval option(s): {sorted(unknown)}")
        return cls(**data)
