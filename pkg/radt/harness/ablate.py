from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import replace
from typing import TYPE_CHECKING

from radt.datagen import read_dataset
from radt.exceptions import ConfigError
from radt.harness.config import ExperimentConfig, Method
from radt.harness.export import export_results
from radt.harness.pipeline import run_experiment
from radt.memory import SamplingMode


__all__ = ("ABLATIONS", "ablation_variants", "run_ablation")

if TYPE_CHECKING:
    from radt.datagen import EpisodeRecord
    from radt.harness.metrics import TrialCurve
    from radt.harness.timing import StageTimer

_LOGGER = logging.getLogger("radt.harness.ablate")

ALPHAS = (0.0, 0.25, 0.5, 1.0, 2.0)
CADENCES = (1, 5, 25, 50)


def _alpha(base: ExperimentConfig) -> list[ExperimentConfig]:
    return [
        replace(base, name=f"{base.name}-alpha-{a:g}", retrieval=replace(base.retrieval, alpha=a))
        for a in ALPHAS
    ]


def _cadence(base: ExperimentConfig) -> list[ExperimentConfig]:
    # Cadence only acts at evaluation, so all variants share one trained policy.
    return [
        replace(base, name=f"{base.name}-cadence-{t}", retrieval=replace(base.retrieval, cadence=t))
        for t in CADENCES
    ]


def _regularizers(base: ExperimentConfig) -> list[ExperimentConfig]:
    r = base.retrieval
    return [
        replace(base, name=f"{base.name}-all"),
        replace(base, name=f"{base.name}-no-dedup", retrieval=replace(r, dedup=False)),
        replace(base, name=f"{base.name}-no-cutoff", retrieval=replace(r, cutoff=None)),
        replace(base, name=f"{base.name}-no-dropout", retrieval=replace(r, query_dropout=0.0)),
    ]


def _sampling(base: ExperimentConfig) -> list[ExperimentConfig]:
    r = base.retrieval
    return [
        replace(
            base,
            name=f"{base.name}-retrieval",
            method=Method.RADT,
            retrieval=replace(r, sampling=SamplingMode.RETRIEVAL),
        ),
        replace(
            base,
            name=f"{base.name}-same-task",
            method=Method.RADT_SAMPLING,
            retrieval=replace(r, sampling=SamplingMode.SAME_TASK),
        ),
        replace(
            base,
            name=f"{base.name}-uniform",
            method=Method.RADT_SAMPLING,
            retrieval=replace(r, sampling=SamplingMode.UNIFORM),
        ),
    ]


ABLATIONS: Mapping[str, Callable[[ExperimentConfig], list[ExperimentConfig]]] = {
    "reweighting-alpha": _alpha,
    "cadence": _cadence,
    "regularizers": _regularizers,
    "sampling": _sampling,
}


def ablation_variants(base: ExperimentConfig, name: str) -> list[ExperimentConfig]:
    """Configurations of the ``name`` ablation around a retrieval-augmented
    ``base`` experiment.

    Raises:
        ConfigError: For an unknown ablation or a base without retrieval
    """
    try:
        build = ABLATIONS[name]
    except KeyError:
        raise ConfigError(f"Unknown ablation {name!r}, expected one of {sorted(ABLATIONS)}") from None
    if not base.method.retrieves:
        raise ConfigError(f"Ablation {name!r} needs a retrieval-augmented base, got '{base.method.value}'")
    return build(base)


def run_ablation(
    base: ExperimentConfig,
    name: str,
    records: Mapping[int, Sequence[EpisodeRecord]] | None = None,
    timer: StageTimer | None = None,
) -> dict[str, TrialCurve]:
    """Run every variant and export them together as ``ablation-<name>``."""
    variants = ablation_variants(base, name)
    if records is None:
        base.check_paths()
        records, _ = read_dataset(base.dataset.path)
    curves = {}
    for config in variants:
        _LOGGER.info("Ablation %s: running %s", name, config.name)
        curves[config.name] = run_experiment(config, records, timer)
    export_results(list(curves.values()), base.results_dir, name=f"ablation-{name}")
    return curves
