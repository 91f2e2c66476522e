from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from radt.envs import GridTask


__all__ = ("FORMAT_VERSION", "Segment", "EpisodeRecord", "DatasetManifest", "compute_rtg")

FORMAT_VERSION = "radt-ds-1"


def compute_rtg(rewards: Any) -> np.ndarray:
    """Returns-to-go of a reward sequence: ``R[t] = r[t] + R[t + 1]``.

    Raises:
        ValueError: If ``rewards`` is empty
    """
    rewards = np.asarray(rewards, dtype=np.int64)
    if rewards.ndim != 1 or rewards.size == 0:
        raise ValueError("compute_rtg needs a non-empty 1-D reward sequence")
    return np.cumsum(rewards[::-1])[::-1].copy()


@dataclass(frozen=True, eq=False)
class Segment:
    """A contiguous slice of an episode.

    ``rtg`` holds the returns-to-go the policy was (or would have been)
    conditioned on; it is float because evaluation targets are sampled.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    rtg: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "actions", np.asarray(self.actions, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "rtg", np.asarray(self.rtg, dtype=np.float64).reshape(-1))
        n = self.actions.shape[0]
        if not (self.states.shape[0] == self.rewards.shape[0] == self.rtg.shape[0] == n):
            raise ValueError(
                f"Misaligned segment: {self.states.shape[0]} states, {n} actions, "
                f"{self.rewards.shape[0]} rewards, {self.rtg.shape[0]} returns-to-go"
            )

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.rtg, other.rtg)
        )

    def __getitem__(self, item: slice) -> Segment:
        if not isinstance(item, slice):
            raise TypeError("Segments only support slicing")
        return Segment(self.states[item], self.actions[item], self.rewards[item], self.rtg[item])

    @classmethod
    def empty(cls) -> Segment:
        return cls(np.empty((0, 2)), np.empty(0), np.empty(0), np.empty(0))

    def to_dict(self) -> dict[str, Any]:
        return {
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "rtg": self.rtg.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Segment:
        return cls(data["states"], data["actions"], data["rewards"], data["rtg"])


@dataclass(eq=False)
class EpisodeRecord:
    """One task-tagged episode. Returns-to-go are derived, never stored."""

    task_id: int
    episode_id: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    total_return: int | None = None

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.int64).reshape(-1, 2)
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        self.rewards = np.asarray(self.rewards, dtype=np.int64).reshape(-1)
        if self.total_return is None:
            self.total_return = int(self.rewards.sum())

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EpisodeRecord):
            return NotImplemented
        return (
            self.task_id == other.task_id
            and self.episode_id == other.episode_id
            and self.total_return == other.total_return
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
        )

    @property
    def rtg(self) -> np.ndarray:
        return compute_rtg(self.rewards)

    def segment(self, start: int = 0, stop: int | None = None) -> Segment:
        """Slice ``[start, stop)`` with returns-to-go of the whole episode."""
        rtg = self.rtg.astype(np.float64)
        return Segment(
            self.states[start:stop], self.actions[start:stop], self.rewards[start:stop], rtg[start:stop]
        )

    def validation_error(self, task: GridTask | None = None) -> str | None:
        """Return a description of the first broken invariant, if any."""
        n = len(self)
        if self.states.shape[0] != n or self.rewards.shape[0] != n:
            return (
                f"length mismatch: {self.states.shape[0]} states, {n} actions, "
                f"{self.rewards.shape[0]} rewards"
            )
        if n == 0:
            return "episode has no steps"
        if int(self.rewards.sum()) != self.total_return:
            return f"total_return {self.total_return} != sum of rewards {int(self.rewards.sum())}"
        if np.any((self.actions < 0) | (self.actions > 4)):
            return "action outside 0..4"
        if np.any((self.rewards < 0) | (self.rewards > 1)):
            return "reward outside {0, 1}"
        if task is not None:
            if n > task.episode_len:
                return f"episode longer than episode_len {task.episode_len}"
            xs, ys = self.states[:, 0], self.states[:, 1]
            if np.any((xs < 0) | (xs >= task.width) | (ys < 0) | (ys >= task.height)):
                return "state outside the grid"
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "episode_id": self.episode_id,
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "total_return": self.total_return,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EpisodeRecord:
        return cls(
            task_id=int(data["task_id"]),
            episode_id=int(data["episode_id"]),
            states=np.asarray(data["states"], dtype=np.int64).reshape(-1, 2),
            actions=data["actions"],
            rewards=data["rewards"],
            total_return=int(data["total_return"]),
        )


@dataclass
class DatasetManifest:
    """Describes a dataset directory: the task of every ``task_id``, the
    per-task transition budget, the generator and its seed, and the files.
    """

    tasks: dict[int, GridTask]
    transitions_per_task: int
    generator: dict[str, Any]
    files: dict[int, str] = field(default_factory=dict)
    format_version: str = FORMAT_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "transitions_per_task": self.transitions_per_task,
            "generator": self.generator,
            "tasks": {str(k): t.to_dict() for k, t in sorted(self.tasks.items())},
            "files": {str(k): f for k, f in sorted(self.files.items())},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DatasetManifest:
        return cls(
            tasks={int(k): GridTask.from_dict(v) for k, v in data["tasks"].items()},
            transitions_per_task=int(data["transitions_per_task"]),
            generator=dict(data["generator"]),
            files={int(k): str(v) for k, v in data.get("files", {}).items()},
            format_version=str(data["format_version"]),
        )
