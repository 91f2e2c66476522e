from __future__ import annotations

import logging
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from radt.envs import TaskKind
from radt.exceptions import ConfigError, InvariantViolation


__all__ = (
    "DecodeMode",
    "TARGET_RETURNS",
    "select_action",
    "target_return_distribution",
    "sample_target_return",
    "decrement_rtg",
    "check_rtg_stream",
)

if TYPE_CHECKING:
    import torch

_LOGGER = logging.getLogger("radt.policy.decode")


class DecodeMode(str, Enum):
    SAMPLE = "sample"
    ARGMAX = "argmax"


# (width, height) -> (mean, std) of the return-to-go target per episode.
TARGET_RETURNS: dict[tuple[int, int], tuple[float, float]] = {
    (10, 10): (90.0, 5.0),
    (20, 20): (370.0, 10.0),
    (40, 20): (500.0, 10.0),
}


def select_action(
    logits: np.ndarray | torch.Tensor,
    rng: np.random.Generator | None = None,
    mode: DecodeMode | str = DecodeMode.SAMPLE,
    temperature: float = 1.0,
) -> int:
    """Pick an action from one row of logits.

    ``sample`` draws from ``softmax(logits / temperature)`` using ``rng``;
    ``argmax`` ignores ``rng`` and returns the lowest index among the maxima.
    """
    logits = np.asarray(
        logits.detach().cpu().numpy() if hasattr(logits, "detach") else logits,
        dtype=np.float64,
    ).reshape(-1)
    mode = DecodeMode(mode)
    if mode is DecodeMode.ARGMAX:
        return int(np.argmax(logits))
    if rng is None:
        raise ValueError("Sampling needs a random generator")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = logits / temperature
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(p.shape[0], p=p))


def target_return_distribution(
    kind: TaskKind | str,
    width: int,
    height: int,
    override: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """Mean and standard deviation of the return-to-go target.

    Both environment families share the table; an explicit ``override`` wins.

    Raises:
        ConfigError: If the grid size has no tabulated target and no override
            is given
    """
    TaskKind(kind)
    if override is not None:
        return float(override[0]), float(override[1])
    try:
        return TARGET_RETURNS[(width, height)]
    except KeyError:
        raise ConfigError(
            f"No target return known for a {width}x{height} grid, set "
            "'evaluation.target_return' explicitly"
        ) from None


def sample_target_return(
    kind: TaskKind | str,
    width: int,
    height: int,
    rng: np.random.Generator,
    override: tuple[float, float] | None = None,
) -> float:
    """Draw the initial return-to-go of one evaluation episode."""
    mean, std = target_return_distribution(kind, width, height, override)
    return float(rng.normal(mean, std))


def decrement_rtg(rtg: float, reward: int) -> float:
    """Next return-to-go after observing ``reward``, floored at zero."""
    return max(rtg - reward, 0.0)


def check_rtg_stream(rtg: np.ndarray, rewards: np.ndarray) -> None:
    """Verify ``rtg[t + 1] == max(rtg[t] - rewards[t], 0)`` along a rollout.

    Raises:
        InvariantViolation: At the first step that breaks the rule
    """
    for t in range(len(rtg) - 1):
        expected = max(rtg[t] - rewards[t], 0.0)
        if rtg[t + 1] != expected:
            raise InvariantViolation(
                f"Return-to-go at step {t + 1} is {rtg[t + 1]}, expected {expected}"
            )
