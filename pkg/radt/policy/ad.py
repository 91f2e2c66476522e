from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from radt.datagen.records import EpisodeRecord, Segment
from radt.exceptions import ConfigError, InvariantViolation, StreamTooShortError


__all__ = ("MAX_AD_EPISODES", "ad_build_pair", "ad_sequence", "ad_eval_context")

# Episodes an Algorithm Distillation policy may see at once.
MAX_AD_EPISODES = 2


def ad_build_pair(
    stream: Sequence[EpisodeRecord], k: int, rng: np.random.Generator
) -> tuple[EpisodeRecord, EpisodeRecord]:
    """Draw episode ``i`` uniformly and pair it with episode ``i + k``.

    Raises:
        ConfigError: If ``k < 1``
        StreamTooShortError: If the stream has at most ``k`` episodes
    """
    if k < 1:
        raise ConfigError(f"AD needs k >= 1, got {k}")
    if len(stream) <= k:
        raise StreamTooShortError(len(stream), k)
    i = int(rng.integers(len(stream) - k))
    return stream[i], stream[i + k]


def _concat(parts: Sequence[Segment]) -> Segment:
    return Segment(
        states=np.concatenate([p.states for p in parts]),
        actions=np.concatenate([p.actions for p in parts]),
        rewards=np.concatenate([p.rewards for p in parts]),
        rtg=np.concatenate([p.rtg for p in parts]),
    )


def ad_sequence(context: EpisodeRecord, target: EpisodeRecord) -> tuple[Segment, int]:
    """One causal training sequence: the context episode, then the target.

    Returns:
        The concatenated segment and the first step whose action is a
        training target
    """
    return _concat([context.segment(), target.segment()]), len(context)


def ad_eval_context(previous: Sequence[Segment], current: Segment) -> Segment:
    """Input of an AD policy at evaluation: the last completed episode and the
    ongoing one, whole episodes only.

    Raises:
        InvariantViolation: If more than two episodes would be in context
    """
    parts = [*previous[-(MAX_AD_EPISODES - 1) :], current] if previous else [current]
    if len(parts) > MAX_AD_EPISODES:
        raise InvariantViolation(f"AD context holds {len(parts)} episodes")
    return _concat(parts)
