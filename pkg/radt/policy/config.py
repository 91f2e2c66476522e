from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

from radt.exceptions import ConfigError


__all__ = ("PolicyConfig",)


@dataclass(frozen=True)
class PolicyConfig:
    """Architecture of a sequence policy.

    ``context`` is the input length in environment steps. Retrieved values
    span twice that. ``use_rtg=False`` drops the return-to-go token, which is
    the layout of the Algorithm Distillation baseline.
    """

    width: int = 10
    height: int = 10
    episode_len: int = 100
    context: int = 50
    n_layers: int = 2
    n_heads: int = 4
    hidden: int = 64
    dropout: float = 0.2
    mlp_ratio: int = 4
    cross_attention: bool = False
    use_rtg: bool = True

    def __post_init__(self) -> None:
        if self.hidden % self.n_heads != 0:
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by n_heads ({self.n_heads})")
        if self.context < 1:
            raise ConfigError(f"context must be at least 1 step, got {self.context}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be at least 1, got {self.n_layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.width < 1 or self.height < 1 or self.episode_len < 1:
            raise ConfigError("Grid dimensions and episode_len must be positive")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def tokens_per_step(self) -> int:
        return 4 if self.use_rtg else 3

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PolicyConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown policy option(s): {sorted(unknown)}")
        return cls(**data)
