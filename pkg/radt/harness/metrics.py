from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from radt._util import SEED_PURPOSE_BOOTSTRAP, make_rng


__all__ = ("bootstrap_ci", "bootstrap_means", "TrialCurve")

_LOGGER = logging.getLogger("radt.harness.metrics")


def _as_scores(scores: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[None, :]
    if scores.ndim != 2 or scores.size == 0:
        raise ValueError(f"Need a non-empty (n_seeds, n_tasks) array, got shape {scores.shape}")
    return scores


def bootstrap_means(
    scores: np.ndarray | Sequence[Sequence[float]],
    resamples: int = 2000,
    seed: int = 0,
) -> np.ndarray:
    """Means of ``resamples`` stratified bootstrap samples of ``scores``.

    Every resample draws, within each seed, as many tasks as there are with
    replacement and averages over all draws.
    """
    scores = _as_scores(scores)
    if resamples < 1:
        raise ValueError("Need resamples >= 1")
    n_seeds, n_tasks = scores.shape
    rng = make_rng(seed, SEED_PURPOSE_BOOTSTRAP)
    picks = rng.integers(n_tasks, size=(resamples, n_seeds, n_tasks))
    rows = np.arange(n_seeds)[None, :, None]
    return scores[rows, picks].mean(axis=(1, 2))


def bootstrap_ci(
    scores: np.ndarray | Sequence[Sequence[float]],
    resamples: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Stratified percentile bootstrap over tasks.

    The bounds are the raw percentiles of :func:`bootstrap_means` and need not
    contain the mean for skewed scores. Scores without spread give
    ``(mean, mean, mean)``.

    Args:
        scores: ``(n_seeds, n_tasks)`` per-task scores of every seed
        resamples: Number of bootstrap samples
        level: Coverage of the interval
        seed: Seed of the resampling stream

    Returns:
        ``(mean, lo, hi)``

    Raises:
        ValueError: If ``scores`` is empty or not two-dimensional
    """
    scores = _as_scores(scores)
    if resamples < 1 or not 0.0 < level < 1.0:
        raise ValueError("Need resamples >= 1 and 0 < level < 1")

    mean = float(scores.mean())
    if np.ptp(scores) == 0.0:
        return mean, mean, mean
    samples = bootstrap_means(scores, resamples, seed)
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(samples, [tail, 100.0 - tail])
    return mean, float(lo), float(hi)


@dataclass
class TrialCurve:
    """Episode returns of one method, ``returns[seed, task, trial]``.

    Trials are numbered from 1 in exports; array positions start at 0.
    """

    method: str
    seeds: list[int]
    task_ids: list[int]
    returns: np.ndarray

    def __post_init__(self) -> None:
        self.returns = np.asarray(self.returns, dtype=np.float64)
        expected = (len(self.seeds), len(self.task_ids))
        if self.returns.ndim != 3 or self.returns.shape[:2] != expected:
            raise ValueError(
                f"returns must have shape (seeds, tasks, trials) = {expected + ('*',)}, "
                f"got {self.returns.shape}"
            )
        if np.any(self.returns < 0):
            raise ValueError("Episode returns are never negative")

    @property
    def n_trials(self) -> int:
        return int(self.returns.shape[2])

    def trial_means(self) -> np.ndarray:
        """Mean return over tasks and seeds for every trial."""
        return self.returns.mean(axis=(0, 1))

    def final_mean(self) -> float:
        return float(self.trial_means()[-1])

    def scores(self, trial: int) -> np.ndarray:
        """``(n_seeds, n_tasks)`` returns of 1-based ``trial``."""
        if not 1 <= trial <= self.n_trials:
            raise IndexError(f"Trial {trial} outside 1..{self.n_trials}")
        return self.returns[:, :, trial - 1]

    def ci(self, trial: int, resamples: int = 2000, level: float = 0.95, seed: int = 0) -> tuple[float, float, float]:
        return bootstrap_ci(self.scores(trial), resamples, level, seed)

    @classmethod
    def merge(cls, curves: Sequence[TrialCurve]) -> TrialCurve:
        """Stack single-seed curves of one method, ordered by seed."""
        if not curves:
            raise ValueError("Nothing to merge")
        curves = sorted(curves, key=lambda c: c.seeds[0])
        first = curves[0]
        for c in curves[1:]:
            if c.method != first.method or c.task_ids != first.task_ids or c.n_trials != first.n_trials:
                raise ValueError(f"Cannot merge curves of '{first.method}' and '{c.method}' with different shapes")
        return cls(
            method=first.method,
            seeds=[s for c in curves for s in c.seeds],
            task_ids=list(first.task_ids),
            returns=np.concatenate([c.returns for c in curves], axis=0),
        )
