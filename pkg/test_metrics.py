"""L2RE / MAE and grid evaluation"""

import math

import numpy as np
import pandas as pd
import pytest

from dbpinn.core import DegenerateReferenceError, UsageError
from dbpinn.core.metrics import build_grid, evaluate, l2re, mae, write_pointwise_csv
from dbpinn.core.pde import get_problem


def test_l2re_examples(rng):
    ref = rng.normal(size=50)
    assert l2re(ref, ref) == 0.0
    assert l2re(np.zeros(50), ref) == pytest.approx(1.0, rel=1e-15)
    assert l2re(1.1 * ref, ref) == pytest.approx(0.1, rel=1e-12)


def test_l2re_scales_with_the_error(rng):
    ref = rng.normal(size=64)
    e = rng.normal(size=64)
    assert l2re(ref + 2 * e, ref) == pytest.approx(2 * l2re(ref + e, ref), rel=1e-12)


def test_mae_examples(rng):
    ref = rng.normal(size=20)
    assert mae(ref, ref) == 0.0
    assert mae(ref + 0.5, ref) == pytest.approx(0.5, rel=1e-14)

    pred = rng.normal(size=20)
    total = 0.0
    for p, r in zip(pred, ref):
        total += abs(p - r)
    assert mae(pred, ref) == pytest.approx(total / 20, rel=1e-13)


def test_metrics_are_permutation_invariant(rng):
    pred, ref = rng.normal(size=30), rng.normal(size=30)
    perm = rng.permutation(30)
    assert l2re(pred[perm], ref[perm]) == pytest.approx(l2re(pred, ref), rel=1e-13)
    assert mae(pred[perm], ref[perm]) == pytest.approx(mae(pred, ref), rel=1e-13)


def test_metric_errors():
    with pytest.raises(DegenerateReferenceError):
        l2re([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(UsageError):
        mae([], [])
    with pytest.raises(UsageError):
        mae([1.0], [1.0, 2.0])


def test_grid_covers_the_domain_inclusively():
    grid = build_grid(get_problem("helmholtz"), resolution=5)
    points = grid.points.numpy()
    assert points.shape == (25, 2)
    assert points[:, 0].min() == -1.0 and points[:, 0].max() == 1.0
    assert points[:, 1].min() == -1.0 and points[:, 1].max() == 1.0
    assert grid.axis_names == ("x", "y")
    with pytest.raises(UsageError):
        build_grid(get_problem("wave"), resolution=1)


@pytest.mark.parametrize("name", ["klein-gordon", "wave", "helmholtz"])
def test_exact_solution_is_a_perfect_predictor(name):
    problem = get_problem(name)
    result = evaluate(problem.exact_solution, problem, resolution=21)
    assert result.l2re < 1e-12
    assert result.mae < 1e-12


def test_zero_network_on_wave_has_unit_error(zero_field):
    result = evaluate(zero_field, get_problem("wave"), resolution=21)
    assert result.l2re == pytest.approx(1.0, rel=1e-15)


def test_zero_network_on_helmholtz_mae_matches_grid_sum(zero_field):
    result = evaluate(zero_field, get_problem("helmholtz"), resolution=101)
    axis = np.linspace(-1.0, 1.0, 101)
    total = 0.0
    for x in axis:
        for y in axis:
            total += abs(math.sin(math.pi * x) * math.sin(4 * math.pi * y))
    assert result.mae == pytest.approx(total / 101**2, rel=1e-10)
    assert result.abs_error.shape == (101 * 101,)


def test_pointwise_csv_columns_and_values(tmp_path, small_network):
    problem = get_problem("klein-gordon")
    result = evaluate(small_network, problem, resolution=7)
    path = write_pointwise_csv(tmp_path / "pointwise_error.csv", result)
    frame = pd.read_csv(path, float_precision="round_trip")
    assert list(frame.columns) == ["x", "t", "prediction", "reference", "abs_error"]
    assert len(frame) == 49
    np.testing.assert_array_equal(frame["abs_error"].to_numpy(), result.abs_error)
    np.testing.assert_array_equal(frame["prediction"].to_numpy(), result.prediction)
