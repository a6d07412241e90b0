"""Config parsing, defaults and validation"""

import json

import pytest

from dbpinn.config.schema import (
    ExperimentConfig,
    MethodSpec,
    TrainConfig,
    load_config,
    parse_config,
    serialize_config,
)
from dbpinn.config.settings import get_settings
from dbpinn.core import ConfigurationError


def _write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


def test_minimal_config_gets_documented_defaults(tmp_path):
    config = parse_config(_write(tmp_path, {"problem": "wave", "strategy": "db"}))
    assert config.layer_sizes == [2, 30, 30, 30, 1]
    assert config.n_collocation == 2000
    assert config.n_condition == 200
    assert config.max_train_steps == 20000
    assert config.learning_rate == 1e-3
    assert config.statistic.value == "mean"
    assert config.update_rule == "welford" and config.alpha is None
    assert config.weight_update_stride == 1
    assert config.eval_resolution == 101
    assert config.seeds == [0]
    assert [m.label for m in config.methods] == ["db-mean"]


def test_gw_defaults_to_ema():
    config = load_config({"problem": "helmholtz", "strategy": "gw", "statistic": "std"})
    assert config.update_rule == "ema" and config.alpha == 0.1
    assert config.method.label == "gw-std"


def test_unknown_statistic_names_the_key():
    with pytest.raises(ConfigurationError, match="statistic: unknown statistic 'median'"):
        load_config({"problem": "wave", "strategy": "db", "statistic": "median"})


@pytest.mark.parametrize(
    "data, key",
    [
        ({"problem": "burgers"}, "problem"),
        ({"problem": "wave", "strategy": "softadapt"}, "strategy"),
        ({"problem": "wave", "colour": "red"}, "colour"),
        ({"problem": "wave", "update_rule": "ema", "alpha": 1.5}, "alpha"),
        ({"problem": "wave", "update_rule": "welford", "alpha": 0.5}, "alpha"),
        ({"problem": "wave", "max_train_steps": 0}, "max_train_steps"),
        ({"problem": "wave", "n_collocation": -5}, "n_collocation"),
        ({"problem": "wave", "layer_sizes": [3, 10, 1]}, "layer_sizes"),
        ({"problem": "wave", "condition_counts": {"bc_x": 10}}, "condition_counts"),
        ({"problem": "wave", "seeds": []}, "seeds"),
        ({"problem": "wave", "seeds": [1, 1]}, "seeds"),
        ({"problem": "wave", "methods": ["db-median"]}, "methods"),
        ({"problem": "wave", "strategy": "db_no_balance", "update_rule": "ema"}, "update_rule"),
        ({"strategy": "db"}, "problem"),
        ({"problem": "wave", "seed": 3}, "seed"),
    ],
)
def test_invalid_configs_name_the_key(data, key):
    with pytest.raises(ConfigurationError) as excinfo:
        load_config(data)
    assert str(excinfo.value).startswith(key)


def test_malformed_and_missing_files(tmp_path):
    with pytest.raises(ConfigurationError, match="malformed JSON"):
        parse_config(_write(tmp_path, "{not json"))
    with pytest.raises(ConfigurationError, match="cannot read"):
        parse_config(tmp_path / "missing.json")
    with pytest.raises(ConfigurationError, match="JSON object"):
        parse_config(_write(tmp_path, "[1, 2]"))


def test_round_trip(tmp_path):
    data = {
        "problem": "klein-gordon",
        "base_seed": 3,
        "repeats": 2,
        "methods": ["equal", "gw-kurtosis", "db-mean-ema0.5", {"strategy": "db_avg", "statistic": "std"}],
    }
    first = parse_config(_write(tmp_path, data))
    second = parse_config(_write(tmp_path, serialize_config(first), "echo.json"))
    assert first.model_dump() == second.model_dump()
    assert serialize_config(first) == serialize_config(second)
    assert second.seeds == [3, 4]


@pytest.mark.parametrize(
    "label", ["equal", "gw-std", "gw-std-welford", "db-kurtosis", "db_avg-mean", "db-mean-ema0.5", "db_no_balance-std"]
)
def test_method_labels_round_trip(label):
    assert MethodSpec.from_label(label).label == label


def test_sweep_cells_are_ordered_by_method_then_seed():
    config = load_config({"problem": "wave", "seeds": [5, 6], "methods": ["db-std", "equal"]})
    cells = [(m.label, s, c.seed, c.strategy.value) for m, s, c in config.runs()]
    assert cells == [
        ("db-std", 5, 5, "db"),
        ("db-std", 6, 6, "db"),
        ("equal", 5, 5, "equal"),
        ("equal", 6, 6, "equal"),
    ]
    assert all(isinstance(c, TrainConfig) and not isinstance(c, ExperimentConfig) for _, _, c in config.runs())


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("DBPINN_OUTPUT_DIR", "/tmp/elsewhere")
    monkeypatch.setenv("DBPINN_NUM_THREADS", "2")
    monkeypatch.delenv("DBPINN_WORKERS", raising=False)
    settings = get_settings(refresh=True)
    assert settings.output_dir == "/tmp/elsewhere"
    assert settings.num_threads == 2
    assert settings.workers is None

    monkeypatch.setenv("DBPINN_NUM_THREADS", "many")
    with pytest.raises(ConfigurationError, match="DBPINN_NUM_THREADS"):
        get_settings(refresh=True)
    monkeypatch.delenv("DBPINN_NUM_THREADS")
    monkeypatch.delenv("DBPINN_OUTPUT_DIR")
    assert get_settings(refresh=True).num_threads == 1
