from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from radt._util import SEED_PURPOSE_COLLECT, derive_seed
from radt.datagen.records import DatasetManifest, EpisodeRecord
from radt.envs import N_ACTIONS, GridEnv, GridTask, TaskKind
from radt.exceptions import ConfigError
from radt.parallel import run_jobs


__all__ = ("QLearningConfig", "collect_task", "collect_dataset")

_LOGGER = logging.getLogger("radt.datagen.collect")


@dataclass(frozen=True)
class QLearningConfig:
    """Hyperparameters of the tabular Q-learning source algorithm.

    Exploration decays linearly from ``eps_start`` to ``eps_end`` over the
    first ``eps_decay_fraction`` of the transition budget and stays at
    ``eps_end`` afterwards.
    """

    learning_rate: float = 0.1
    discount: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError(f"discount must be in [0, 1], got {self.discount}")
        for name in ("eps_start", "eps_end", "eps_decay_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")

    def epsilon(self, step: int, budget: int) -> float:
        horizon = self.eps_decay_fraction * budget
        if horizon <= 0 or step >= horizon:
            return self.eps_end
        frac = step / horizon
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def to_dict(self) -> dict[str, Any]:
        return {"name": "q_learning", **asdict(self)}


def _state_index(task: GridTask, pos: tuple[int, int], has_key: bool) -> int:
    # Privileged state: position plus the hidden key flag for key-door tasks.
    cell = pos[1] * task.width + pos[0]
    return cell + (task.n_cells if has_key else 0)


def _greedy(q_row: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(q_row == q_row.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def collect_task(
    task: GridTask,
    budget: int,
    seed: int,
    task_id: int = 0,
    config: QLearningConfig | None = None,
) -> Iterator[EpisodeRecord]:
    """Run tabular Q-learning on ``task`` and yield every episode it plays.

    The stream totals exactly ``budget`` transitions; the last episode is
    truncated when the budget is not a multiple of the episode length. Early
    episodes are close to random, later ones close to greedy, giving the
    learning-curve mixture the in-context learners are trained on.

    Raises:
        ConfigError: If ``budget`` is smaller than one episode
    """
    if budget < task.episode_len:
        raise ConfigError(
            f"budget {budget} is smaller than one episode ({task.episode_len} steps)"
        )
    config = config or QLearningConfig()
    rng = np.random.default_rng(seed)
    n_states = task.n_cells * (2 if task.kind is TaskKind.DARK_KEY_DOOR else 1)
    q = np.zeros((n_states, N_ACTIONS), dtype=np.float64)
    env = GridEnv(task)

    step = 0
    episode_id = 0
    while step < budget:
        length = min(task.episode_len, budget - step)
        states = np.empty((length, 2), dtype=np.int64)
        actions = np.empty(length, dtype=np.int64)
        rewards = np.empty(length, dtype=np.int64)

        pos = env.reset()
        s = _state_index(task, pos, False)
        for t in range(length):
            if rng.random() < config.epsilon(step, budget):
                action = int(rng.integers(N_ACTIONS))
            else:
                action = _greedy(q[s], rng)
            result = env.step(action)
            s_next = _state_index(task, result.obs, env.state.has_key)
            # Time-limit ends are truncations, so the target always bootstraps.
            target = result.reward + config.discount * q[s_next].max()
            q[s, action] += config.learning_rate * (target - q[s, action])

            states[t] = pos
            actions[t] = action
            rewards[t] = result.reward
            pos, s = result.obs, s_next
            step += 1

        record = EpisodeRecord(
            task_id=task_id,
            episode_id=episode_id,
            states=states,
            actions=actions,
            rewards=rewards,
        )
        _LOGGER.debug(
            "task=%d episode=%d return=%d eps=%.3f",
            task_id,
            episode_id,
            record.total_return,
            config.epsilon(step, budget),
        )
        yield record
        episode_id += 1


def collect_dataset(
    tasks: Sequence[GridTask],
    budget: int,
    seed: int,
    config: QLearningConfig | None = None,
    workers: int = 1,
) -> tuple[dict[int, list[EpisodeRecord]], DatasetManifest]:
    """Collect one episode stream per task, ``task_id`` being the task's
    position in ``tasks``.

    Every task draws from its own seed derived from ``seed``, so the result
    does not depend on ``workers``.
    """
    config = config or QLearningConfig()

    def _job(task_id: int) -> Callable[[], list[EpisodeRecord]]:
        task_seed = derive_seed(seed, SEED_PURPOSE_COLLECT, task_id)
        return lambda: list(collect_task(tasks[task_id], budget, task_seed, task_id, config))

    records = run_jobs({task_id: _job(task_id) for task_id in range(len(tasks))}, workers)
    manifest = DatasetManifest(
        tasks=dict(enumerate(tasks)),
        transitions_per_task=budget,
        generator={**config.to_dict(), "seed": seed},
    )
    _LOGGER.info(
        "Collected %d task stream(s), %d transitions each", len(records), budget
    )
    return records, manifest
