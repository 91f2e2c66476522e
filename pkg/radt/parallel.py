"""Fan independent jobs out to worker threads.

Jobs are keyed; results come back as a dict in sorted key order no matter
which worker finished first, so the number of workers never changes what a
run produces.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Hashable, Mapping
from typing import Any, TypeVar

import anyio
from anyio.to_thread import run_sync


__all__ = ("run_jobs", "run_jobs_async")

_LOGGER = logging.getLogger("radt.parallel")

K = TypeVar("K", bound=Hashable)
R = TypeVar("R")


async def run_jobs_async(
    jobs: Mapping[K, Callable[[], R]], workers: int = 1
) -> dict[K, R]:
    """Run every job in a worker thread, at most ``workers`` at a time.

    If several jobs fail, the error of the job with the smallest key is
    raised so failures are as reproducible as results.
    """
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    limiter = anyio.CapacityLimiter(workers)
    results: dict[Any, Any] = {}
    errors: dict[Any, BaseException] = {}

    async def _run(key: K, job: Callable[[], R]) -> None:
        try:
            results[key] = await run_sync(job, limiter=limiter)
        except Exception as e:
            errors[key] = e

    async with anyio.create_task_group() as tg:
        for key, job in jobs.items():
            tg.start_soon(_run, key, job)

    if errors:
        first = sorted(errors)[0]
        _LOGGER.debug("%d of %d job(s) failed", len(errors), len(jobs))
        raise errors[first]
    return {key: results[key] for key in sorted(results)}


def run_jobs(jobs: Mapping[K, Callable[[], R]], workers: int = 1) -> dict[K, R]:
    """Blocking facade over :func:`run_jobs_async`.

    With a single worker the jobs run inline in key order.
    """
    if workers == 1:
        return {key: jobs[key]() for key in sorted(jobs)}
    return anyio.run(run_jobs_async, jobs, workers)
