import numpy as np
import pytest

from radt.datagen import EpisodeRecord, collect_dataset
from radt.envs import GridTask, TaskKind
from radt.ref import clear_references


@pytest.fixture(autouse=True)
def _fresh_references():
    clear_references()
    yield
    clear_references()


@pytest.fixture
def small_tasks():
    """Three 3x3 Dark-Room tasks with 9-step episodes."""
    return [
        GridTask(TaskKind.DARK_ROOM, 3, 3, goal=goal)
        for goal in ((2, 2), (0, 2), (2, 0))
    ]


@pytest.fixture
def small_dataset(small_tasks):
    """Ten episodes per task collected by Q-learning."""
    records, manifest = collect_dataset(small_tasks, budget=90, seed=0)
    return records, manifest


def _make_record(task_id, episode_id, n, width=3, seed=0):
    rng = np.random.default_rng(seed + 1000 * task_id + episode_id)
    return EpisodeRecord(
        task_id=task_id,
        episode_id=episode_id,
        states=rng.integers(width, size=(n, 2)),
        actions=rng.integers(5, size=n),
        rewards=rng.integers(2, size=n),
    )


@pytest.fixture
def make_record():
    """Factory of random valid episodes of ``n`` steps on a ``width`` x ``width`` grid."""
    return _make_record
