"""Aggregate exported results into one summary with the ordering checks used
to judge a desk-scale run.
"""
from __future__ import annotations

import json
import logging
from typing import Any, TYPE_CHECKING

from radt.exceptions import ArtifactError
from radt.harness.export import read_results
from radt.storage import as_storage


__all__ = ("SUMMARY_NAME", "run_role", "check_gates", "report")

if TYPE_CHECKING:
    from radt._util import PathLikeStr
    from radt.harness.metrics import TrialCurve
    from radt.storage import Storage

_LOGGER = logging.getLogger("radt.harness.report")

SUMMARY_NAME = "summary.json"
_CONFIG_SUFFIX = ".config.json"


def run_role(config: dict[str, Any]) -> str | None:
    """Classify an exported run by the settings the checks compare on.

    Runs with any retrieval regulariser switched off or an evaluation
    cadence other than 1 have no role.
    """
    method = config["method"]
    if method in ("dt", "ad"):
        return method
    r = config["retrieval"]
    if r["cadence"] != 1 or not r["dedup"] or r["cutoff"] is None or r["query_dropout"] == 0:
        return None
    if method == "radt_sampling":
        return f"sampling:{r['sampling']}"
    return f"radt:{config['embedding']['variant']}:alpha={float(r['alpha']):g}"


def _gain(curve: TrialCurve) -> float:
    means = curve.trial_means()
    return float(means[-1] - means[0])


def check_gates(by_role: dict[str, TrialCurve]) -> dict[str, dict[str, Any]]:
    """Evaluate every ordering check whose runs are present."""
    gates: dict[str, dict[str, Any]] = {}
    radt = by_role.get("radt:domain_specific:alpha=1")
    dt = by_role.get("dt")
    if radt is not None and dt is not None:
        gates["radt_vs_dt"] = {
            "passed": radt.final_mean() >= 2.0 * dt.final_mean(),
            "radt": radt.final_mean(),
            "dt": dt.final_mean(),
        }
    if radt is not None:
        gates["radt_improves"] = {"passed": _gain(radt) >= 10.0, "gain": _gain(radt)}
    if dt is not None:
        gates["dt_flat"] = {"passed": _gain(dt) < 5.0, "gain": _gain(dt)}

    agnostic = by_role.get("radt:domain_agnostic:alpha=1")
    if radt is not None and agnostic is not None:
        gates["agnostic_parity"] = {
            "passed": agnostic.final_mean() >= 0.7 * radt.final_mean(),
            "domain_agnostic": agnostic.final_mean(),
            "domain_specific": radt.final_mean(),
        }

    same_task = by_role.get("sampling:same_task")
    uniform = by_role.get("sampling:uniform")
    if radt is not None and same_task is not None and uniform is not None:
        gates["retrieval_over_sampling"] = {
            "passed": radt.final_mean() >= same_task.final_mean() >= uniform.final_mean(),
            "retrieval": radt.final_mean(),
            "same_task": same_task.final_mean(),
            "uniform": uniform.final_mean(),
        }

    no_reweighting = by_role.get("radt:domain_specific:alpha=0")
    if radt is not None and no_reweighting is not None:
        gates["reweighting_matters"] = {
            "passed": no_reweighting.final_mean() < radt.final_mean(),
            "alpha_0": no_reweighting.final_mean(),
            "alpha_1": radt.final_mean(),
        }
    return gates


def _load_runs(storage: Storage) -> tuple[dict[str, TrialCurve], dict[str, dict[str, Any]]]:
    curves: dict[str, TrialCurve] = {}
    configs: dict[str, dict[str, Any]] = {}
    for name in sorted(storage.names()):
        if not name.endswith(_CONFIG_SUFFIX):
            continue
        run = name[: -len(_CONFIG_SUFFIX)]
        if not storage.exists(f"{run}.csv"):
            _LOGGER.warning("Run '%s' has a config but no results", run)
            continue
        configs[run] = json.loads(storage.read(name))
        curves.update(read_results(storage, run))
    return curves, configs


def report(results_dir: Storage | PathLikeStr, resamples: int = 2000, level: float = 0.95) -> dict[str, Any]:
    """Summarize every run in ``results_dir`` and write ``summary.json``.

    Raises:
        ArtifactError: If the directory holds no exported runs
    """
    storage = as_storage(results_dir)
    curves, configs = _load_runs(storage)
    if not curves:
        raise ArtifactError(f"No exported runs in {storage!r}")

    runs = {}
    by_role: dict[str, TrialCurve] = {}
    for name in sorted(curves):
        curve = curves[name]
        mean, lo, hi = curve.ci(curve.n_trials, resamples, level)
        runs[name] = {
            "method": configs.get(name, {}).get("method"),
            "seeds": curve.seeds,
            "tasks": len(curve.task_ids),
            "trials": curve.n_trials,
            "first_trial_mean": float(curve.trial_means()[0]),
            "final_trial": {"mean": mean, "lo": lo, "hi": hi},
        }
        role = run_role(configs[name]) if name in configs else None
        if role is not None and role not in by_role:
            by_role[role] = curve

    gates = check_gates(by_role)
    for gate, result in gates.items():
        _LOGGER.info("%s: %s", gate, "passed" if result["passed"] else "FAILED")
    summary = {"runs": runs, "gates": gates}
    storage.write(SUMMARY_NAME, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
