import json
import math
from dataclasses import replace
from functools import partial

import numpy as np
import pytest
import torch

from radt.datagen import Segment, read_dataset
from radt.embed import EmbeddingVariant, FrozenPolicyEncoder
from radt.exceptions import ArtifactError, ConfigError, InvariantViolation
from radt.harness import (
    ABLATIONS,
    ArchitectureConfig,
    DatasetConfig,
    EmbeddingConfig,
    EnvConfig,
    EvalConfig,
    ExperimentConfig,
    Method,
    StageTimer,
    TrainConfig,
    TrialCurve,
    ablation_variants,
    bootstrap_ci,
    bootstrap_means,
    build_embedder,
    check_gates,
    evaluate_seeds,
    export_attention,
    export_results,
    generate,
    icl_evaluate,
    load_config,
    load_policy,
    read_results,
    report,
    run_experiment,
    run_trials,
    train,
    train_seeds,
)
from radt.harness.report import SUMMARY_NAME, run_role
from radt.harness.train import CHECKPOINT_NAME, EVAL_LOG_NAME, LOSS_LOG_NAME
from radt.memory import IndexEntry, RetrievalConfig, Retriever, SamplingMode
from radt.nncore import OptimConfig
from radt.parallel import run_jobs
from radt.policy import PolicyConfig, PolicyModel
from radt.storage import MemoryStorage


@pytest.fixture
def tiny_config(tmp_path):
    """A 3x3 Dark-Room experiment that trains in a blink."""
    return ExperimentConfig(
        name="tiny",
        method=Method.DT,
        seeds=(0,),
        output_dir=str(tmp_path / "runs"),
        ad_k=2,
        env=EnvConfig(width=3, height=3, n_train=3, n_eval=2),
        dataset=DatasetConfig(path=str(tmp_path / "data"), transitions_per_task=90),
        policy=ArchitectureConfig(context=4, n_layers=1, n_heads=2, hidden=16, dropout=0.0),
        retrieval=RetrievalConfig(context=4, top_l=5, min_len=2),
        embedding=EmbeddingConfig(
            variant=EmbeddingVariant.DOMAIN_AGNOSTIC, vocab=32, hidden=16, n_layers=1, n_heads=2
        ),
        optim=OptimConfig(lr=1e-3, warmup_steps=2),
        train=TrainConfig(steps=20, batch_size=8, log_every=5, eval_every=10, eval_trials=0),
        evaluation=EvalConfig(trials=3, target_return=(8.0, 1.0)),
    )


@pytest.fixture
def tiny_records(tiny_config):
    generate(tiny_config)
    records, _ = read_dataset(tiny_config.dataset.path)
    return records


def _radt(config, **retrieval):
    return replace(config, method=Method.RADT, retrieval=replace(config.retrieval, **retrieval))


def test_config_round_trip(tiny_config):
    """Test a configuration survives its JSON document."""
    assert ExperimentConfig.from_dict(tiny_config.to_dict()) == tiny_config
    assert ExperimentConfig.from_dict(json.loads(tiny_config.to_json())) == tiny_config


def test_config_rejects_unknown_keys():
    """Test unknown options fail at any level."""
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"nmae": "x"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"policy": {"layers": 2}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"evaluation": {"trials": 0}})


def test_config_validation(tiny_config):
    """Test cross-section invariants."""
    with pytest.raises(ConfigError):
        replace(tiny_config, retrieval=replace(tiny_config.retrieval, context=8))
    with pytest.raises(ConfigError):
        replace(
            tiny_config,
            method=Method.RADT,
            retrieval=replace(tiny_config.retrieval, sampling=SamplingMode.UNIFORM),
        )
    with pytest.raises(ConfigError):
        replace(tiny_config, method=Method.RADT_SAMPLING)
    with pytest.raises(ConfigError):
        replace(tiny_config, seeds=(1, 1))


def test_config_overrides(tiny_config):
    """Test command-line overrides land in the right sections."""
    config = tiny_config.with_overrides(
        seed=3, trials=7, cadence=5, alpha=0.5, method="radt_sampling", decode=None
    )
    assert config.seeds == (3,)
    assert config.evaluation.trials == 7
    assert config.retrieval.cadence == 5 and config.retrieval.alpha == 0.5
    assert config.retrieval.sampling is SamplingMode.SAME_TASK
    assert config.with_overrides(method="radt").retrieval.sampling is SamplingMode.RETRIEVAL
    with pytest.raises(ConfigError):
        tiny_config.with_overrides(colour="red")


def test_training_key(tiny_config):
    """Test only training settings change where a policy is stored."""
    radt = _radt(tiny_config)
    assert radt.training_key(0) == _radt(tiny_config, cadence=5).training_key(0)
    assert radt.training_key(0) == replace(radt, evaluation=replace(radt.evaluation, trials=9)).training_key(0)
    assert radt.training_key(0) != _radt(tiny_config, alpha=0.0).training_key(0)
    assert radt.training_key(0) != radt.training_key(1)
    assert tiny_config.training_key(0) == replace(tiny_config, embedding=EmbeddingConfig()).training_key(0)


def test_policy_layouts(tiny_config):
    """Test the architecture derived per method."""
    ad = tiny_config.policy_config(Method.AD)
    assert ad.context == 18 and not ad.use_rtg and not ad.cross_attention
    radt = tiny_config.policy_config(Method.RADT)
    assert radt.context == 4 and radt.cross_attention and radt.use_rtg
    assert tiny_config.task_ids() == [3, 4]
    assert tiny_config.task_ids("train") == [0, 1, 2]


def test_load_config(tmp_path):
    """Test documents are merged onto presets."""
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"name": "x", "policy": {"context": 20}}))
    config = load_config(path)
    assert config.name == "x"
    assert config.policy.context == config.retrieval.context == 20
    assert config.optim.lr == 3e-4
    assert load_config(base="full").policy.hidden == 512
    with pytest.raises(ConfigError):
        load_config(base="laptop")
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_bootstrap_constant():
    """Test constant scores give a degenerate interval."""
    assert bootstrap_ci(np.full((3, 10), 7.0)) == (7.0, 7.0, 7.0)


def test_bootstrap_bounds_are_raw_percentiles():
    """Test narrow intervals on skewed scores are not stretched to the mean."""
    rng = np.random.default_rng(5)
    outside = 0
    for seed in range(20):
        scores = rng.exponential(size=(2, 9)) ** 3
        mean, lo, hi = bootstrap_ci(scores, resamples=500, level=0.02, seed=seed)
        samples = bootstrap_means(scores, resamples=500, seed=seed)
        expected = np.percentile(samples, [49.0, 51.0])
        assert (lo, hi) == pytest.approx((expected[0], expected[1]), rel=1e-12)
        assert mean == pytest.approx(scores.mean())
        outside += not lo <= mean <= hi
    assert outside > 0
    assert bootstrap_ci([[2.5, 2.5], [2.5, 2.5]], level=0.02) == (2.5, 2.5, 2.5)


def test_bootstrap_is_deterministic():
    """Test the same seed gives the same interval."""
    scores = np.random.default_rng(0).normal(size=(3, 20))
    assert bootstrap_ci(scores, seed=4) == bootstrap_ci(scores, seed=4)
    mean, lo, hi = bootstrap_ci(scores[0])
    assert lo <= mean <= hi
    with pytest.raises(ValueError):
        bootstrap_ci(np.empty((0, 0)))


def test_bootstrap_coverage():
    """Test the interval covers the true mean of normal data most of the time."""
    rng = np.random.default_rng(11)
    hits = 0
    for seed in range(100):
        _, lo, hi = bootstrap_ci(rng.normal(size=(5, 100)), resamples=1000, seed=seed)
        hits += lo <= 0.0 <= hi
    assert hits >= 90


def test_trial_curve():
    """Test merging, trial selection and validation."""
    a = TrialCurve("dt", [1], [3, 4], np.ones((1, 2, 3)))
    b = TrialCurve("dt", [0], [3, 4], np.zeros((1, 2, 3)))
    merged = TrialCurve.merge([a, b])
    assert merged.seeds == [0, 1]
    assert merged.scores(3).tolist() == [[0.0, 0.0], [1.0, 1.0]]
    assert merged.trial_means().tolist() == [0.5, 0.5, 0.5]
    with pytest.raises(IndexError):
        merged.scores(0)
    with pytest.raises(ValueError):
        TrialCurve("dt", [0], [3], -np.ones((1, 1, 2)))
    with pytest.raises(ValueError):
        TrialCurve("dt", [0], [3, 4], np.ones((1, 3, 2)))
    with pytest.raises(ValueError):
        TrialCurve.merge([a, TrialCurve("ad", [0], [3, 4], np.ones((1, 2, 3)))])


def test_export_results():
    """Test one CSV row per episode and byte-identical re-exports."""
    curve = TrialCurve("radt", [0], [3, 4], np.array([[[1, 2, 3], [4, 5, 6.5]]]))
    first, second = MemoryStorage(), MemoryStorage()
    export_results([curve], first, name="run", resamples=100)
    export_results([curve], second, name="run", resamples=100)
    assert first.read("run.csv") == second.read("run.csv")
    assert first.read("run.json") == second.read("run.json")

    lines = first.read("run.csv").decode().splitlines()
    assert lines[0] == "method,task,seed,trial,return"
    assert len(lines) == 7
    assert lines[1] == "radt,3,0,1,1"
    assert lines[-1] == "radt,4,0,3,6.5"
    summary = json.loads(first.read("run.json"))
    assert [t["trial"] for t in summary["radt"]["trials"]] == [1, 2, 3]

    back = read_results(first, "run")["radt"]
    assert back.task_ids == [3, 4] and np.array_equal(back.returns, curve.returns)


def test_read_results_incomplete():
    """Test a results file with a missing episode is rejected."""
    storage = MemoryStorage()
    export_results([TrialCurve("dt", [0], [0, 1], np.ones((1, 2, 2)))], storage, name="run", resamples=10)
    lines = storage.read("run.csv").decode().splitlines()
    storage.write("run.csv", "\n".join(lines[:-1]) + "\n")
    with pytest.raises(ArtifactError):
        read_results(storage, "run")


def test_export_attention(make_record, tmp_path):
    """Test exported cross-attention rows are distributions over the context."""
    config = PolicyConfig(width=3, height=3, episode_len=9, context=4, hidden=16, n_heads=2, dropout=0.0, cross_attention=True)
    torch.manual_seed(0)
    model = PolicyModel(config)
    episode = make_record(0, 0, 9).segment()
    context = make_record(1, 0, 9).segment(0, 6)
    matrices = export_attention(model, episode, context, tmp_path / "attention")
    assert len(matrices) == 2
    assert matrices[0].shape == (16, 24)
    assert np.allclose(matrices[0].sum(axis=1), 1.0)
    assert (tmp_path / "attention" / "layer_1.csv").is_file()
    assert model.training
    with pytest.raises(ValueError):
        export_attention(model, episode, Segment.empty(), tmp_path / "x")
    with pytest.raises(ValueError):
        export_attention(PolicyModel(replace(config, cross_attention=False)), episode, context, tmp_path / "x")


def test_train_is_deterministic(tiny_config, tiny_records):
    """Test training twice gives the same weights and existing runs are reused."""
    first = train(tiny_config, 0, tiny_records)
    assert first.checkpoint == tiny_config.run_dir(0) / CHECKPOINT_NAME
    assert (tiny_config.run_dir(0) / LOSS_LOG_NAME).is_file()
    reused = train(tiny_config, 0, tiny_records)
    assert reused.reused and reused.digest == first.digest
    again = train(tiny_config, 0, tiny_records, force=True)
    assert not again.reused and again.digest == first.digest
    assert again.losses == first.losses
    assert train(tiny_config, 1, tiny_records).digest != first.digest


def test_train_reduces_loss(tiny_config, tiny_records):
    """Test a few dozen steps lower the action loss."""
    config = replace(tiny_config, train=TrainConfig(steps=60, batch_size=16, log_every=20, eval_trials=0))
    result = train(config, 0, tiny_records)
    assert [s for s, _ in result.losses] == [1, 20, 40, 60]
    assert result.losses[0][1] == pytest.approx(math.log(5), abs=0.1)
    assert result.losses[-1][1] < result.losses[0][1]


def test_train_periodic_evaluation(tiny_config, tiny_records):
    """Test evaluations run every eval_every steps and are logged."""
    config = replace(tiny_config, train=TrainConfig(steps=10, batch_size=4, eval_every=5, eval_trials=1))
    result = train(config, 0, tiny_records)
    assert [s for s, _ in result.evaluations] == [5, 10]
    assert (config.run_dir(0) / EVAL_LOG_NAME).is_file()


def test_load_policy(tiny_config, tiny_records):
    """Test a trained checkpoint loads in inference mode."""
    result = train(tiny_config, 0, tiny_records)
    model = load_policy(result.checkpoint)
    assert not model.training
    assert model.config == tiny_config.policy_config()


def test_radt_trains_and_retrieves(tiny_config, tiny_records):
    """Test RA-DT: an empty first-trial index, index growth and retrieval cadence."""
    config = _radt(tiny_config)
    result = train(config, 0, tiny_records)
    model = load_policy(result.checkpoint)
    embedder = build_embedder(config, 0)
    tasks, ids = config.tasks(), config.task_ids()

    with_retrieval = run_trials(model, tasks, config, 0, trials=3, embedder=embedder, task_ids=ids)
    without = run_trials(model, tasks, config, 0, trials=1, embedder=embedder, task_ids=ids, retrieval=False)
    assert np.array_equal(with_retrieval.curve.returns[:, :, 0], without.curve.returns[:, :, 0])
    assert with_retrieval.index_sizes.tolist() == [[3, 6, 9]] * 2
    assert with_retrieval.retrieval_calls.tolist() == [[9, 9, 9]] * 2
    assert with_retrieval.attention_sample is not None

    sparse = run_trials(
        model, tasks, _radt(tiny_config, cadence=2), 0, trials=2, embedder=embedder, task_ids=ids
    )
    assert sparse.retrieval_calls.tolist() == [[5, 5]] * 2

    curve = icl_evaluate(model, tasks, config, 0, trials=2, embedder=embedder, task_ids=ids)
    assert curve.returns.shape == (1, 2, 2)
    assert np.all(curve.returns <= 9)


def test_cross_task_retrieval_is_fatal(tiny_config, tiny_records, monkeypatch):
    """Test evaluation stops when a task is handed another task's trajectory."""
    config = _radt(tiny_config)
    model = load_policy(train(config, 0, tiny_records).checkpoint)
    intruder = IndexEntry(np.zeros(16, dtype=np.float32), Segment.empty(), 99, 0, 0.0, 0, 0)
    monkeypatch.setattr(Retriever, "fallback", lambda self, request, rng: intruder)
    with pytest.raises(InvariantViolation):
        run_trials(model, config.tasks(), config, 0, trials=1, embedder=build_embedder(config, 0))


def test_domain_specific_embedder_trains_encoder(tiny_config, tiny_records):
    """Test a domain-specific embedding reuses a Decision Transformer of the same seed."""
    config = replace(_radt(tiny_config), embedding=EmbeddingConfig())
    embedder = build_embedder(config, 0, tiny_records)
    assert isinstance(embedder.encoder, FrozenPolicyEncoder)
    assert embedder.dim == tiny_config.policy.hidden
    encoder_config = replace(tiny_config, name="tiny-encoder")
    assert (encoder_config.run_dir(0) / CHECKPOINT_NAME).is_file()


def test_algorithm_distillation(tiny_config, tiny_records):
    """Test AD trains on episode pairs and plays across episodes."""
    config = replace(tiny_config, method=Method.AD)
    model = load_policy(train(config, 0, tiny_records).checkpoint)
    outcome = run_trials(model, config.tasks(), config, 0, trials=2, task_ids=config.task_ids())
    assert outcome.curve.returns.shape == (1, 2, 2)
    assert outcome.retrieval_calls.sum() == 0


@pytest.mark.parametrize("method", [Method.DT, Method.RADT])
def test_evaluation_does_not_depend_on_workers(tiny_config, tiny_records, method):
    """Test evaluating seeds in parallel gives the same curves."""
    config = _radt(tiny_config) if method is Method.RADT else tiny_config
    config = replace(config, seeds=(0, 1), evaluation=replace(config.evaluation, trials=2))
    checkpoints = train_seeds(config, tiny_records)
    serial = evaluate_seeds(config, checkpoints)
    parallel = evaluate_seeds(replace(config, evaluation=replace(config.evaluation, workers=2)), checkpoints)
    for seed in (0, 1):
        assert np.array_equal(serial[seed].curve.returns, parallel[seed].curve.returns)
        assert np.array_equal(serial[seed].retrieval_calls, parallel[seed].retrieval_calls)


def test_concurrent_training_is_deterministic(tiny_config, tiny_records):
    """Test seeds trained on worker threads match seeds trained one by one."""
    config = replace(
        _radt(tiny_config),
        seeds=(0, 1, 2),
        policy=replace(tiny_config.policy, dropout=0.1),
        train=replace(tiny_config.train, steps=6),
    )
    serial = {seed: train(config, seed, tiny_records).digest for seed in config.seeds}
    jobs = {seed: partial(train, config, seed, tiny_records, force=True) for seed in config.seeds}
    parallel = run_jobs(jobs, workers=3)
    assert {seed: result.digest for seed, result in parallel.items()} == serial


def test_run_experiment_and_report(tiny_config, tiny_records):
    """Test the end-to-end run exports results the report can read."""
    timer = StageTimer()
    curve = run_experiment(tiny_config, tiny_records, timer)
    assert curve.returns.shape == (1, 2, 3)
    assert {"train", "evaluate", "export"} <= set(timer.totals())
    results = tiny_config.results_dir
    assert (results / "tiny.config.json").is_file()
    assert (results / "tiny.csv").is_file()

    summary = report(results, resamples=100)
    assert summary["runs"]["tiny"]["method"] == "dt"
    assert set(summary["gates"]) == {"dt_flat"}
    assert (results / SUMMARY_NAME).is_file()


def test_report_without_runs(tmp_path):
    """Test reporting an empty directory fails."""
    with pytest.raises(ArtifactError):
        report(tmp_path)


def test_run_roles(tiny_config):
    """Test runs are classified by the settings the checks compare."""
    assert run_role(tiny_config.to_dict()) == "dt"
    radt = _radt(tiny_config)
    assert run_role(radt.to_dict()) == "radt:domain_agnostic:alpha=1"
    assert run_role(_radt(tiny_config, alpha=0.0).to_dict()) == "radt:domain_agnostic:alpha=0"
    assert run_role(_radt(tiny_config, cadence=5).to_dict()) is None
    assert run_role(_radt(tiny_config, dedup=False).to_dict()) is None
    sampling = replace(
        tiny_config,
        method=Method.RADT_SAMPLING,
        retrieval=replace(tiny_config.retrieval, sampling=SamplingMode.UNIFORM),
    )
    assert run_role(sampling.to_dict()) == "sampling:uniform"


def test_check_gates():
    """Test the ordering checks on hand-made curves."""

    def curve(first, last):
        return TrialCurve("m", [0], [0], np.array([[[first, last]]], dtype=np.float64))

    gates = check_gates(
        {
            "dt": curve(10, 12),
            "radt:domain_specific:alpha=1": curve(10, 60),
            "radt:domain_specific:alpha=0": curve(10, 40),
            "radt:domain_agnostic:alpha=1": curve(10, 45),
            "sampling:same_task": curve(10, 30),
            "sampling:uniform": curve(10, 20),
        }
    )
    assert set(gates) == {
        "radt_vs_dt",
        "radt_improves",
        "dt_flat",
        "agnostic_parity",
        "retrieval_over_sampling",
        "reweighting_matters",
    }
    assert all(g["passed"] for g in gates.values())
    assert not check_gates({"dt": curve(0, 20)})["dt_flat"]["passed"]


def test_ablation_variants(tiny_config):
    """Test ablation presets vary one setting around a retrieval base."""
    base = _radt(tiny_config)
    alphas = ablation_variants(base, "reweighting-alpha")
    assert [c.retrieval.alpha for c in alphas] == [0.0, 0.25, 0.5, 1.0, 2.0]
    assert alphas[1].name == "tiny-alpha-0.25"
    cadences = ablation_variants(base, "cadence")
    assert len({c.training_key(0) for c in cadences}) == 1
    sampling = ablation_variants(base, "sampling")
    assert [c.method for c in sampling] == [Method.RADT, Method.RADT_SAMPLING, Method.RADT_SAMPLING]
    regularizers = ablation_variants(base, "regularizers")
    assert [run_role(c.to_dict()) is None for c in regularizers] == [False, True, True, True]
    assert set(ABLATIONS) == {"reweighting-alpha", "cadence", "regularizers", "sampling"}
    with pytest.raises(ConfigError):
        ablation_variants(tiny_config, "cadence")
    with pytest.raises(ConfigError):
        ablation_variants(base, "depth")


def test_stage_timer():
    """Test stage times accumulate per name."""
    timer = StageTimer()
    with timer.stage("a"):
        pass
    with timer.stage("a"):
        pass
    assert set(timer.totals()) == {"a"} and timer.totals()["a"] >= 0.0
