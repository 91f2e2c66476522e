from .ablate import ABLATIONS, ablation_variants, run_ablation
from .config import (
    PRESETS,
    ArchitectureConfig,
    DatasetConfig,
    EmbeddingConfig,
    EnvConfig,
    EvalConfig,
    ExperimentConfig,
    Method,
    TrainConfig,
    load_config,
    preset,
)
from .evaluate import EvalOutcome, icl_evaluate, run_trials
from .export import export_attention, export_results, read_results
from .metrics import TrialCurve, bootstrap_ci, bootstrap_means
from .pipeline import evaluate_seeds, generate, run_experiment, train_seeds
from .report import check_gates, report
from .timing import StageTimer
from .train import BatchSampler, TrainResult, build_embedder, load_policy, train


__all__ = (
    "ABLATIONS",
    "PRESETS",
    "ArchitectureConfig",
    "BatchSampler",
    "DatasetConfig",
    "EmbeddingConfig",
    "EnvConfig",
    "EvalConfig",
    "EvalOutcome",
    "ExperimentConfig",
    "Method",
    "StageTimer",
    "TrainConfig",
    "TrainResult",
    "TrialCurve",
    "ablation_variants",
    "bootstrap_ci",
    "bootstrap_means",
    "build_embedder",
    "check_gates",
    "evaluate_seeds",
    "export_attention",
    "export_results",
    "generate",
    "icl_evaluate",
    "load_config",
    "load_policy",
    "preset",
    "read_results",
    "report",
    "run_ablation",
    "run_experiment",
    "run_trials",
    "train",
    "train_seeds",
)
