"""Experiment stages: dataset generation, training every seed, evaluation and
result export.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from contextlib import nullcontext
from typing import TYPE_CHECKING

from radt.datagen import EpisodeRecord, collect_dataset, read_dataset, write_dataset
from radt.harness.evaluate import EvalOutcome, run_trials
from radt.harness.export import export_attention, export_results
from radt.harness.metrics import TrialCurve
from radt.harness.train import TrainResult, build_embedder, load_policy, train
from radt.parallel import run_jobs
from radt.storage import FileStorage


__all__ = ("generate", "train_seeds", "evaluate_seeds", "run_experiment")

if TYPE_CHECKING:
    from radt.datagen import DatasetManifest
    from radt.harness.config import ExperimentConfig
    from radt.harness.timing import StageTimer

_LOGGER = logging.getLogger("radt.harness.pipeline")


def _stage(timer: StageTimer | None, name: str):
    return timer.stage(name) if timer is not None else nullcontext()


def generate(config: ExperimentConfig, workers: int = 1, timer: StageTimer | None = None) -> DatasetManifest:
    """Collect the training-task dataset and write it to ``dataset.path``."""
    train_tasks, _ = config.env.split()
    ds = config.dataset
    _LOGGER.info(
        "Generating %d task stream(s) of %d transitions into %s",
        len(train_tasks),
        ds.transitions_per_task,
        ds.path,
    )
    with _stage(timer, "generate"):
        records, manifest = collect_dataset(
            train_tasks, ds.transitions_per_task, ds.seed, ds.q_learning, workers
        )
        return write_dataset(records, manifest, ds.path)


def train_seeds(
    config: ExperimentConfig,
    records: Mapping[int, Sequence[EpisodeRecord]] | None = None,
    timer: StageTimer | None = None,
) -> dict[int, TrainResult]:
    """Train one policy per seed, one after another."""
    if records is None:
        config.check_paths()
        records, _ = read_dataset(config.dataset.path)
    results = {}
    with _stage(timer, "train"):
        for seed in config.seeds:
            results[seed] = train(config, seed, records)
    return results


def evaluate_seeds(
    config: ExperimentConfig,
    checkpoints: Mapping[int, TrainResult],
    timer: StageTimer | None = None,
) -> dict[int, EvalOutcome]:
    """Evaluate the policy of every seed; seeds run on up to
    ``evaluation.workers`` threads.
    """
    tasks = config.tasks()
    task_ids = config.task_ids()

    def _job(seed: int) -> Callable[[], EvalOutcome]:
        def run() -> EvalOutcome:
            model = load_policy(checkpoints[seed].checkpoint)
            embedder = build_embedder(config, seed) if config.method.retrieves else None
            return run_trials(model, tasks, config, seed, embedder=embedder, task_ids=task_ids)

        return run

    with _stage(timer, "evaluate"):
        return run_jobs({seed: _job(seed) for seed in config.seeds}, config.evaluation.workers)


def run_experiment(
    config: ExperimentConfig,
    records: Mapping[int, Sequence[EpisodeRecord]] | None = None,
    timer: StageTimer | None = None,
) -> TrialCurve:
    """Train (or reuse) every seed, evaluate, and export the results under
    ``output_dir/results/<name>``.
    """
    checkpoints = train_seeds(config, records, timer)
    outcomes = evaluate_seeds(config, checkpoints, timer)
    curve = TrialCurve.merge([outcomes[seed].curve for seed in config.seeds])
    means = curve.trial_means()
    _LOGGER.info(
        "%s: trial 1 mean %.2f, trial %d mean %.2f",
        config.name,
        float(means[0]),
        curve.n_trials,
        float(means[-1]),
    )
    with _stage(timer, "export"):
        results = FileStorage(config.results_dir)
        results.write(f"{config.name}.config.json", config.to_json() + "\n")
        export_results([curve], results, name=config.name)
        if config.evaluation.export_attention and config.method.retrieves:
            seed = config.seeds[0]
            attention_sample = outcomes[seed].attention_sample
            if attention_sample is None:
                _LOGGER.warning("Nothing was retrieved on the first task, no attention map to export")
            else:
                model = load_policy(checkpoints[seed].checkpoint)
                inputs, value = attention_sample
                export_attention(model, inputs, value, config.results_dir / f"{config.name}.attention")
    return curve
