import json

import numpy as np
import pytest

from radt import cli
from radt.exceptions import InvariantViolation
from radt.harness import ExperimentConfig, Method, TrialCurve, export_results
from radt.storage import FileStorage


def test_parser_requires_command():
    """Test a subcommand is mandatory."""
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["ablate"])


def test_generate(tmp_path):
    """Test the generate command writes a dataset."""
    config = tmp_path / "exp.json"
    config.write_text(
        json.dumps(
            {
                "env": {"width": 3, "height": 3, "n_train": 2, "n_eval": 1},
                "dataset": {"path": str(tmp_path / "data"), "transitions_per_task": 18},
            }
        )
    )
    assert cli.main(["generate", "--config", str(config), "--workers", "2"]) == 0
    assert (tmp_path / "data" / "manifest.json").is_file()


def test_errors_exit_with_one(tmp_path):
    """Test library errors are reported with exit code 1."""
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_ERROR
    assert cli.main(["report", "--results-dir", str(tmp_path)]) == cli.EXIT_ERROR
    missing_data = tmp_path / "exp.json"
    missing_data.write_text(json.dumps({"dataset": {"path": str(tmp_path / "nothing")}}))
    assert cli.main(["train", "--config", str(missing_data)]) == cli.EXIT_ERROR


def test_invariant_violation_exit_code(monkeypatch, tmp_path):
    """Test a broken runtime invariant gets its own exit code."""

    def boom(config, timer=None):
        raise InvariantViolation("task 3 retrieved a trajectory of task 1")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["evaluate", "--output-dir", str(tmp_path)]) == cli.EXIT_INVARIANT


def test_report_prints_gates(tmp_path, capsys):
    """Test the report command prints the ordering checks as JSON."""
    config = ExperimentConfig(name="dt", method=Method.DT, seeds=(0,))
    storage = FileStorage(tmp_path)
    storage.write("dt.config.json", config.to_json())
    export_results([TrialCurve("dt", [0], [0, 1], np.ones((1, 2, 3)))], storage, name="dt", resamples=10)
    assert cli.main(["report", "--results-dir", str(tmp_path)]) == 0
    gates = json.loads(capsys.readouterr().out)
    assert gates["dt_flat"]["passed"] is True
