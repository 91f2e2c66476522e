from __future__ import annotations

import logging
from collections import deque

import numpy as np

from radt.envs.grid import START, Cell, GridTask, TaskKind
from radt.exceptions import InsufficientTasksError, UnreachableGoalError


__all__ = ("task_split", "optimal_return", "bfs_distance")

_LOGGER = logging.getLogger("radt.envs")


def bfs_distance(width: int, height: int, source: Cell, target: Cell) -> int:
    """Shortest number of moves between two cells of an open grid.

    Raises:
        UnreachableGoalError: If ``target`` cannot be reached from ``source``
    """
    if source == target:
        return 0
    seen = {source}
    frontier: deque[tuple[Cell, int]] = deque([(source, 0)])
    while frontier:
        (x, y), dist = frontier.popleft()
        for dx, dy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            nxt = (x + dx, y + dy)
            if not (0 <= nxt[0] < width and 0 <= nxt[1] < height) or nxt in seen:
                continue
            if nxt == target:
                return dist + 1
            seen.add(nxt)
            frontier.append((nxt, dist + 1))
    raise UnreachableGoalError(f"{target} is unreachable from {source}")


def _rewarded_steps(episode_len: int, arrival: int) -> int:
    # Steps are numbered 1..episode_len and a reward is paid on every step
    # that ends on the target, so the earliest rewarded step is max(arrival, 1).
    return max(0, episode_len - max(arrival, 1) + 1)


def optimal_return(task: GridTask) -> int:
    """Highest achievable episode return for ``task``.

    Dark-Room: walk the shortest path to the goal and stay. Key-door: walk to
    the key (+1 once), then to the door and stay there.
    """
    if task.kind is TaskKind.DARK_ROOM:
        dist = bfs_distance(task.width, task.height, START, task.goal)
        return _rewarded_steps(task.episode_len, dist)

    assert task.key is not None
    to_key = bfs_distance(task.width, task.height, START, task.key)
    to_door = bfs_distance(task.width, task.height, task.key, task.goal)
    # The key is picked up by moving onto it, so a key on the start cell is
    # collected on the first step by a move that stays in place.
    pickup = max(to_key, 1)
    if pickup > task.episode_len:
        return 0
    return 1 + _rewarded_steps(task.episode_len, pickup + to_door)


def _decode_cell(index: int, width: int) -> Cell:
    return (int(index % width), int(index // width))


def task_split(
    kind: TaskKind | str,
    width: int,
    height: int,
    n_train: int,
    n_eval: int,
    seed: int,
    episode_len: int | None = None,
) -> tuple[list[GridTask], list[GridTask]]:
    """Draw disjoint training and evaluation tasks.

    Goals (and keys) are never placed on the start cell, except when the
    request needs every cell of a Dark-Room grid as a goal, as in the usual
    80/20 split of a 10x10 room.

    Raises:
        InsufficientTasksError: If fewer than ``n_train + n_eval`` distinct
            tasks exist
    """
    kind = TaskKind(kind)
    n_cells = width * height
    requested = n_train + n_eval
    rng = np.random.default_rng(seed)
    episode_len = episode_len or n_cells

    if kind is TaskKind.DARK_ROOM:
        cells = [c for c in range(n_cells)]
        if requested < n_cells:
            cells = cells[1:]
        elif requested == n_cells:
            _LOGGER.info(
                "Split uses every cell of the %dx%d grid, including the start cell",
                width,
                height,
            )
        else:
            raise InsufficientTasksError(kind.value, n_cells, requested)
        order = rng.permutation(len(cells))[:requested]
        tasks = [
            GridTask(
                kind=kind,
                width=width,
                height=height,
                goal=_decode_cell(cells[i], width),
                episode_len=episode_len,
            )
            for i in order
        ]
    else:
        # Ordered (key, door) pairs over the non-start cells, key != door.
        free = n_cells - 1
        n_pairs = free * (free - 1)
        if requested > n_pairs:
            raise InsufficientTasksError(kind.value, max(n_pairs, 0), requested)
        picks = rng.choice(n_pairs, size=requested, replace=False)
        tasks = []
        for pick in picks:
            key_idx, door_off = divmod(int(pick), free - 1)
            door_idx = door_off if door_off < key_idx else door_off + 1
            tasks.append(
                GridTask(
                    kind=kind,
                    width=width,
                    height=height,
                    key=_decode_cell(key_idx + 1, width),
                    goal=_decode_cell(door_idx + 1, width),
                    episode_len=episode_len,
                )
            )

    return tasks[:n_train], tasks[n_train:]
