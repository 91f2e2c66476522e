"""Dark-Room and Dark Key-Door grid-worlds.

Coordinates are ``(x, y)`` with the origin in the top-left corner and ``y``
growing downward. The action integers below are part of the on-disk dataset
contract and must never be renumbered.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, NamedTuple

from radt.exceptions import EpisodeExhaustedError, InvalidTaskError


__all__ = (
    "Action",
    "TaskKind",
    "GridTask",
    "EnvState",
    "StepResult",
    "GridEnv",
    "N_ACTIONS",
    "START",
)

Cell = tuple[int, int]

START: Cell = (0, 0)


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


N_ACTIONS = len(Action)

_DELTAS: dict[int, Cell] = {
    Action.UP: (0, -1),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
    Action.STAY: (0, 0),
}


class TaskKind(str, Enum):
    DARK_ROOM = "dark_room"
    DARK_KEY_DOOR = "dark_key_door"


def _in_grid(cell: Cell, width: int, height: int) -> bool:
    return 0 <= cell[0] < width and 0 <= cell[1] < height


@dataclass(frozen=True)
class GridTask:
    """One grid-world task: a goal (the door for key-door tasks), an optional
    key cell and the episode length.

    ``episode_len`` defaults to the number of grid cells.
    """

    kind: TaskKind
    width: int
    height: int
    goal: Cell
    key: Cell | None = None
    episode_len: int = field(default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        if self.key is not None:
            object.__setattr__(self, "key", tuple(int(v) for v in self.key))
        if self.episode_len == 0:
            object.__setattr__(self, "episode_len", self.width * self.height)

        if self.width < 1 or self.height < 1:
            raise InvalidTaskError(f"Grid must be at least 1x1, got {self.width}x{self.height}")
        if len(self.goal) != 2 or not _in_grid(self.goal, self.width, self.height):
            raise InvalidTaskError(f"Goal {self.goal} lies outside the {self.width}x{self.height} grid")
        if self.kind is TaskKind.DARK_KEY_DOOR:
            if self.key is None:
                raise InvalidTaskError("Key-door tasks need a key cell")
            if len(self.key) != 2 or not _in_grid(self.key, self.width, self.height):
                raise InvalidTaskError(f"Key {self.key} lies outside the {self.width}x{self.height} grid")
            if self.key == self.goal:
                raise InvalidTaskError("Key and door must be on different cells")
        elif self.key is not None:
            raise InvalidTaskError("Dark-Room tasks have no key")
        if self.episode_len < 1:
            raise InvalidTaskError(f"episode_len must be positive, got {self.episode_len}")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "width": self.width,
            "height": self.height,
            "goal": list(self.goal),
            "key": list(self.key) if self.key is not None else None,
            "episode_len": self.episode_len,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GridTask:
        try:
            return cls(
                kind=TaskKind(data["kind"]),
                width=int(data["width"]),
                height=int(data["height"]),
                goal=tuple(data["goal"]),
                key=tuple(data["key"]) if data.get("key") is not None else None,
                episode_len=int(data["episode_len"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidTaskError(f"Malformed task description: {data!r}") from e

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> GridTask:
        return cls.from_dict(json.loads(text))


@dataclass
class EnvState:
    pos: Cell
    has_key: bool
    t: int


class StepResult(NamedTuple):
    obs: Cell
    reward: int
    done: bool


class GridEnv:
    """A single Dark-Room or Dark Key-Door episode runner.

    The agent only observes its own ``(x, y)`` position; the goal, the key and
    whether the key was picked up stay hidden. Rewards are computed after the
    move: +1 on every step that ends on the goal (on the door once the key is
    held) and +1 once for picking up the key.

    Instances are not thread-safe; give every worker its own environment.
    """

    __slots__ = ("task", "_state", "_done")

    def __init__(self, task: GridTask) -> None:
        self.task = task
        self._state = EnvState(pos=START, has_key=False, t=0)
        self._done = False

    def __repr__(self) -> str:
        return f"GridEnv(task={self.task!r}, state={self._state!r})"

    @property
    def state(self) -> EnvState:
        return EnvState(self._state.pos, self._state.has_key, self._state.t)

    @property
    def done(self) -> bool:
        return self._done

    def reset(self) -> Cell:
        """Start a new episode in the top-left corner."""
        self._state = EnvState(pos=START, has_key=False, t=0)
        self._done = False
        return START

    def step(self, action: int) -> StepResult:
        """Apply ``action`` and return the next observation, reward and done flag.

        Raises:
            EpisodeExhaustedError: If the episode already ended
            ValueError: If ``action`` is not one of the five action integers
        """
        if self._done:
            raise EpisodeExhaustedError()
        try:
            dx, dy = _DELTAS[int(action)]
        except KeyError:
            raise ValueError(f"Invalid action {action!r}") from None

        task = self.task
        state = self._state
        x = min(max(state.pos[0] + dx, 0), task.width - 1)
        y = min(max(state.pos[1] + dy, 0), task.height - 1)
        pos = (x, y)

        reward = 0
        if task.kind is TaskKind.DARK_ROOM:
            if pos == task.goal:
                reward = 1
        else:
            if not state.has_key and pos == task.key:
                state.has_key = True
                reward = 1
            elif state.has_key and pos == task.goal:
                reward = 1

        state.pos = pos
        state.t += 1
        self._done = state.t >= task.episode_len
        return StepResult(obs=pos, reward=reward, done=self._done)
