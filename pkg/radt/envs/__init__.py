from .grid import (
    N_ACTIONS,
    START,
    Action,
    EnvState,
    GridEnv,
    GridTask,
    StepResult,
    TaskKind,
)
from .tasks import bfs_distance, optimal_return, task_split


__all__ = (
    "N_ACTIONS",
    "START",
    "Action",
    "EnvState",
    "GridEnv",
    "GridTask",
    "StepResult",
    "TaskKind",
    "bfs_distance",
    "optimal_return",
    "task_split",
)
