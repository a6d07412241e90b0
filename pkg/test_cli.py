"""Experiment runner, artifacts and command verbs"""

import json
import logging

import numpy as np
import pandas as pd
import pytest

import dbpinn.cli as cli
from dbpinn.config.schema import load_config
from dbpinn.config.settings import get_settings
from dbpinn.core import TrainingAborted
from dbpinn.core.nn import load_checkpoint
from dbpinn.core.trainer import RunRecord


@pytest.fixture
def experiment(tmp_path, tiny_config):
    data = {**tiny_config, "seeds": [0, 1], "methods": ["equal", "db-std"], "output_dir": str(tmp_path / "out")}
    return load_config(data)


def test_run_experiment_writes_every_artifact(experiment, tmp_path):
    summary = cli.run_experiment(experiment)
    out = tmp_path / "out"

    assert list(summary.columns) == cli.SUMMARY_COLUMNS
    assert summary["method"].tolist() == ["equal", "db-std"]
    assert summary["runs"].tolist() == [2, 2]
    assert summary["failed"].tolist() == [0, 0]

    for label in ("equal", "db-std"):
        for seed in (0, 1):
            run_dir = out / label / f"seed_{seed}"
            history = pd.read_csv(run_dir / "history.csv")
            assert history["t"].tolist() == [1, 2, 4, 5]
            params, step = load_checkpoint(run_dir / "checkpoint.bin")
            assert step == 5
            assert len(pd.read_csv(run_dir / "pointwise_error.csv")) == 11 * 11
            outcome = json.loads((run_dir / "run.json").read_text())
            assert outcome["status"] == "ok" and outcome["seed"] == seed

    for name in ("config.json", "summary.csv", "summary.md", "metadata.json"):
        assert (out / name).exists()
    assert "| db-std | 2 | 0 |" in (out / "summary.md").read_text()


def test_summary_matches_recomputation_from_histories(experiment, tmp_path):
    summary = cli.run_experiment(experiment).set_index("method")
    out = tmp_path / "out"
    for label in ("equal", "db-std"):
        finals = [
            pd.read_csv(out / label / f"seed_{s}" / "history.csv", float_precision="round_trip").iloc[-1]
            for s in (0, 1)
        ]
        l2re = np.array([row["l2re"] for row in finals])
        mae = np.array([row["mae"] for row in finals])
        assert summary.loc[label, "l2re_mean"] == pytest.approx(l2re.mean(), rel=1e-12)
        assert summary.loc[label, "l2re_std"] == pytest.approx(l2re.std(ddof=1), rel=1e-12)
        assert summary.loc[label, "mae_mean"] == pytest.approx(mae.mean(), rel=1e-12)
        assert summary.loc[label, "mae_std"] == pytest.approx(mae.std(ddof=1), rel=1e-12)


def test_reruns_are_byte_identical(experiment, tmp_path):
    cli.run_experiment(experiment)
    again = experiment.model_copy(update={"output_dir": str(tmp_path / "again")})
    cli.run_experiment(again)
    first, second = tmp_path / "out", tmp_path / "again"
    for path in sorted(first.rglob("*")):
        # logs/ carries timestamps like metadata.json
        if path.is_dir() or path.name in ("metadata.json", "config.json") or "logs" in path.parts:
            continue
        twin = second / path.relative_to(first)
        assert path.read_bytes() == twin.read_bytes(), path


def test_single_seed_has_zero_std():
    outcomes = [{"method": "db-mean", "problem": "wave", "seed": 0, "status": "ok", "final_l2re": 0.3, "final_mae": 0.1}]
    summary = cli.summarize_outcomes(outcomes)
    assert summary.loc[0, "l2re_std"] == 0.0
    assert summary.loc[0, "mae_std"] == 0.0


def test_two_seed_statistics():
    outcomes = [
        {"method": "db-std", "problem": "wave", "seed": s, "status": "ok", "final_l2re": v, "final_mae": v}
        for s, v in ((0, 0.4), (1, 0.6))
    ]
    row = cli.summarize_outcomes(outcomes).iloc[0]
    assert row["l2re_mean"] == pytest.approx(0.5)
    assert row["l2re_std"] == pytest.approx(0.1414213562373095, rel=1e-12)


def test_failed_runs_are_recorded_and_exit_nonzero(tmp_path, tiny_config, monkeypatch):
    def aborting_train(config):
        record = RunRecord(config=config.model_dump(mode="json"), labels=("bc", "ic_u", "ic_ut"))
        record.diagnostic = "step 1: WeightOverflowError: non-finite weights"
        raise TrainingAborted(record.diagnostic, record)

    monkeypatch.setattr(cli, "train", aborting_train)
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**tiny_config, "output_dir": str(tmp_path / "out")}))

    assert cli.main(["run", str(path)]) == cli.EXIT_FAILED
    out = tmp_path / "out"
    outcome = json.loads((out / "db-mean" / "seed_0" / "run.json").read_text())
    assert outcome["status"] == "failed"
    assert "WeightOverflowError" in outcome["diagnostic"]
    summary = pd.read_csv(out / "summary.csv")
    assert summary.loc[0, "failed"] == 1
    assert "WeightOverflowError" in (out / "summary.md").read_text()


def test_validate_verb(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"problem": "wave", "strategy": "db"}))
    assert cli.main(["validate", str(good)]) == cli.EXIT_OK
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["n_collocation"] == 2000 and echoed["seeds"] == [0]
    assert "seed" not in echoed

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"problem": "wave", "statistic": "median"}))
    assert cli.main(["validate", str(bad)]) == cli.EXIT_CONFIG
    assert "unknown statistic" in capsys.readouterr().err


def test_summarize_verb_rebuilds_the_summary(experiment, tmp_path):
    original = cli.run_experiment(experiment)
    out = tmp_path / "out"
    (out / "summary.csv").unlink()
    assert cli.main(["summarize", str(out)]) == cli.EXIT_OK
    rebuilt = pd.read_csv(out / "summary.csv", float_precision="round_trip")
    pd.testing.assert_frame_equal(rebuilt, original, check_dtype=False)
    assert cli.main(["summarize", str(tmp_path / "nowhere")]) == cli.EXIT_CONFIG


def test_output_dir_environment_override(tmp_path, tiny_config, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**tiny_config, "max_train_steps": 1, "output_dir": str(tmp_path / "from_file")}))
    monkeypatch.setenv("DBPINN_OUTPUT_DIR", str(tmp_path / "from_env"))
    get_settings(refresh=True)
    try:
        assert cli.main(["run", str(path)]) == cli.EXIT_OK
    finally:
        monkeypatch.delenv("DBPINN_OUTPUT_DIR")
        get_settings(refresh=True)
    assert (tmp_path / "from_env" / "summary.csv").exists()
    assert not (tmp_path / "from_file").exists()


def test_experiment_logs_stay_separate(tmp_path, tiny_config):
    first = load_config({**tiny_config, "max_train_steps": 1, "output_dir": str(tmp_path / "a")})
    second = first.model_copy(update={"output_dir": str(tmp_path / "b")})
    cli.run_experiment(first)
    log = tmp_path / "a" / "logs" / "dbpinn_structured.jsonl"
    before = log.read_bytes()
    assert before

    cli.run_experiment(second)
    assert log.read_bytes() == before
    assert (tmp_path / "b" / "logs" / "dbpinn_structured.jsonl").stat().st_size > 0
    assert not [h for h in logging.getLogger("dbpinn").handlers if isinstance(h, logging.FileHandler)]


def test_zero_workers_flag_is_rejected(tmp_path, tiny_config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**tiny_config, "output_dir": str(tmp_path / "out")}))
    assert cli.main(["run", str(path), "--workers", "0"]) == cli.EXIT_CONFIG
    assert not (tmp_path / "out").exists()
