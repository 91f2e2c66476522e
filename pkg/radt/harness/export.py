"""Result and diagnostic files.

* ``<name>.csv``: one row per episode, columns ``method, task, seed, trial,
  return``; trials count from 1.
* ``<name>.json``: per method the seeds, tasks and, for every trial, the mean
  return with its stratified bootstrap interval.
* ``attention/layer_<i>.csv``: head-averaged cross-attention weights of
  layer ``i``, one row per input token and one column per context token.

Every writer produces the same bytes for the same input.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Sequence
from typing import TYPE_CHECKING

import numpy as np
import torch

from radt.exceptions import ArtifactError
from radt.harness.metrics import TrialCurve
from radt.policy import tokenize
from radt.storage import Storage, as_storage


__all__ = ("RESULTS_HEADER", "summarize", "export_results", "read_results", "export_attention")

if TYPE_CHECKING:
    from radt._util import PathLikeStr
    from radt.datagen import Segment
    from radt.policy import PolicyModel

_LOGGER = logging.getLogger("radt.harness.export")

RESULTS_HEADER = ("method", "task", "seed", "trial", "return")


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def summarize(
    curve: TrialCurve, resamples: int = 2000, level: float = 0.95, seed: int = 0
) -> dict[str, object]:
    trials = []
    for trial in range(1, curve.n_trials + 1):
        mean, lo, hi = curve.ci(trial, resamples, level, seed)
        trials.append({"trial": trial, "mean": mean, "lo": lo, "hi": hi})
    return {
        "seeds": list(curve.seeds),
        "tasks": list(curve.task_ids),
        "level": level,
        "resamples": resamples,
        "trials": trials,
    }


def export_results(
    curves: Sequence[TrialCurve],
    target: Storage | PathLikeStr,
    name: str = "results",
    resamples: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> None:
    """Write ``<name>.csv`` and ``<name>.json`` for ``curves``."""
    storage = as_storage(target)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    for curve in curves:
        for s, seed_value in enumerate(curve.seeds):
            for j, task_id in enumerate(curve.task_ids):
                for trial in range(curve.n_trials):
                    writer.writerow(
                        (curve.method, task_id, seed_value, trial + 1, _fmt(curve.returns[s, j, trial]))
                    )
    summary = {c.method: summarize(c, resamples, level, seed) for c in curves}
    storage.write(f"{name}.csv", buf.getvalue())
    storage.write(f"{name}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _LOGGER.info("Exported %d curve(s) to %r as '%s'", len(curves), storage, name)


def read_results(source: Storage | PathLikeStr, name: str = "results") -> dict[str, TrialCurve]:
    """Rebuild the curves of a results CSV written by :func:`export_results`.

    Raises:
        ArtifactError: If the file is missing or rows are missing or malformed
    """
    storage = as_storage(source)
    text = storage.read(f"{name}.csv").decode("utf-8")
    rows = list(csv.DictReader(io.StringIO(text)))
    grouped: dict[str, dict[tuple[int, int, int], float]] = {}
    try:
        for row in rows:
            key = (int(row["seed"]), int(row["task"]), int(row["trial"]))
            grouped.setdefault(row["method"], {})[key] = float(row["return"])
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"Malformed results file '{name}.csv' in {storage!r}") from e

    curves = {}
    for method, values in grouped.items():
        seeds = sorted({k[0] for k in values})
        tasks = sorted({k[1] for k in values})
        n_trials = max(k[2] for k in values)
        returns = np.full((len(seeds), len(tasks), n_trials), np.nan)
        for (s, t, trial), v in values.items():
            returns[seeds.index(s), tasks.index(t), trial - 1] = v
        if np.isnan(returns).any():
            raise ArtifactError(f"Results of '{method}' in '{name}.csv' are incomplete")
        curves[method] = TrialCurve(method, seeds, tasks, returns)
    return curves


def export_attention(
    model: PolicyModel,
    episode: Segment,
    context: Segment,
    target: Storage | PathLikeStr,
) -> list[np.ndarray]:
    """Write the cross-attention of ``model`` from ``episode`` onto a
    retrieved ``context``, one CSV matrix per layer.

    Returns:
        The ``(input tokens, context tokens)`` matrices that were written
    """
    cfg = model.config
    if not cfg.cross_attention:
        raise ValueError("Attention export needs a retrieval-augmented policy")
    if len(context) == 0:
        raise ValueError("Attention export needs a non-empty retrieved context")
    batch = tokenize([episode[-cfg.context :]], cfg.context, cfg.width, use_rtg=cfg.use_rtg)
    ctx = tokenize([context], 2 * cfg.context, cfg.width, use_rtg=True)

    was_training = model.training
    model.eval()
    model.capture_attention(True)
    try:
        with torch.no_grad():
            model(batch, ctx)
        maps = model.attention_maps()
    finally:
        model.capture_attention(False)
        model.train(was_training)

    n_in = int(batch.token_mask[0].sum())
    n_ctx = int(ctx.token_mask[0].sum())
    storage = as_storage(target)
    matrices = []
    for layer, weights in enumerate(maps.cross_weights):
        m = weights[0, :n_in, :n_ctx].double().numpy()
        matrices.append(m)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows([[repr(float(v)) for v in row] for row in m])
        storage.write(f"layer_{layer}.csv", buf.getvalue())
    _LOGGER.info("Exported cross-attention of %d layer(s) to %r", len(matrices), storage)
    return matrices
