"""Shared pytest fixtures and the --runslow switch"""

import numpy as np
import pytest
import torch

from dbpinn.config.settings import get_settings
from dbpinn.core.autodiff import DTYPE, DualScalar
from dbpinn.core.nn import init_network


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run desk-scale training comparisons"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training runs (use --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_network():
    return init_network([2, 5, 4, 1], seed=7)


@pytest.fixture
def zero_field():
    """A Field that is identically zero"""

    def field(coords):
        return DualScalar.constant(torch.zeros_like(coords[0].value, dtype=DTYPE))

    return field


@pytest.fixture
def tiny_config():
    """A run small enough to finish in a second or two"""
    return {
        "problem": "wave",
        "layer_sizes": [2, 8, 8, 1],
        "n_collocation": 32,
        "n_condition": 8,
        "max_train_steps": 5,
        "eval_resolution": 11,
        "log_stride": 2,
    }


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Tests never see DBPINN_* variables from the calling shell"""
    for name in ("DBPINN_OUTPUT_DIR", "DBPINN_LOG_LEVEL", "DBPINN_NUM_THREADS", "DBPINN_WORKERS"):
        monkeypatch.delenv(name, raising=False)
    get_settings(refresh=True)
    yield
    get_settings(refresh=True)
