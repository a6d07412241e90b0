"""
Evaluation Metrics
Relative L2 error and mean absolute error of a network against the exact
solution on a uniform grid
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
import torch
from torch import Tensor

from dbpinn.core import DegenerateReferenceError, UsageError
from dbpinn.core.autodiff import DTYPE, Field, eval_with_input_derivs
from dbpinn.core.pde import PdeProblem

ArrayLike = Union[np.ndarray, Tensor]


def _as_array(values: ArrayLike) -> np.ndarray:
    if isinstance(values, Tensor):
        values = values.detach().cpu().numpy()
    return np.asarray(values, dtype=np.float64).reshape(-1)


def _paired(pred: ArrayLike, ref: ArrayLike):
    pred, ref = _as_array(pred), _as_array(ref)
    if pred.shape != ref.shape:
        raise UsageError(f"prediction has {pred.size} values, reference has {ref.size}")
    return pred, ref


def l2re(pred: ArrayLike, ref: ArrayLike) -> float:
    pred, ref = _paired(pred, ref)
    ref_norm = float(np.linalg.norm(ref))
    if ref_norm == 0.0:
        raise DegenerateReferenceError("reference has zero norm")
    return float(np.linalg.norm(pred - ref)) / ref_norm


def mae(pred: ArrayLike, ref: ArrayLike) -> float:
    pred, ref = _paired(pred, ref)
    if pred.size == 0:
        raise UsageError("mae of empty vectors")
    return float(np.mean(np.abs(pred - ref)))


@dataclass(frozen=True)
class EvalGrid:
    """Tensor-product grid covering the domain bounds inclusively, with exact values"""

    points: Tensor
    reference: Tensor
    resolution: int
    axis_names: tuple


def build_grid(problem: PdeProblem, resolution: int = 101) -> EvalGrid:
    if isinstance(resolution, bool) or not isinstance(resolution, (int, np.integer)) or resolution < 2:
        raise UsageError(f"resolution must be an integer >= 2, got {resolution!r}")
    axes = [torch.linspace(lo, hi, int(resolution), dtype=DTYPE) for lo, hi in problem.bounds]
    mesh = torch.meshgrid(*axes, indexing="ij")
    points = torch.stack([m.reshape(-1) for m in mesh], dim=1)
    reference = problem.exact_values(points)
    if not bool(torch.isfinite(reference).all()):
        raise UsageError(f"exact solution of {problem.name} is not finite on the grid")
    return EvalGrid(points, reference, int(resolution), problem.axis_names)


@dataclass(frozen=True)
class EvaluationResult:
    l2re: float
    mae: float
    abs_error: np.ndarray
    prediction: np.ndarray
    grid: EvalGrid

    def to_frame(self) -> pd.DataFrame:
        """Pointwise table: one column per axis, then prediction, reference and |error|"""
        points = self.grid.points.numpy()
        frame = pd.DataFrame({name: points[:, k] for k, name in enumerate(self.grid.axis_names)})
        frame["prediction"] = self.prediction
        frame["reference"] = self.grid.reference.numpy()
        frame["abs_error"] = self.abs_error
        return frame


def predict_values(network: Field, points: Tensor) -> np.ndarray:
    """Value channel of any Field; networks take their no-tape fast path"""
    predict = getattr(network, "predict", None)
    if callable(predict):
        values = predict(points)
    else:
        with torch.no_grad():
            values = eval_with_input_derivs(network, points, 0, order=0).value
    return _as_array(values)


def evaluate(network: Field, problem: PdeProblem, resolution: int = 101, grid: EvalGrid = None) -> EvaluationResult:
    """Metrics and the pointwise |error| field of ``network`` on the evaluation grid"""
    if grid is None:
        grid = build_grid(problem, resolution)
    prediction = predict_values(network, grid.points)
    reference = grid.reference.numpy()
    return EvaluationResult(
        l2re=l2re(prediction, reference),
        mae=mae(prediction, reference),
        abs_error=np.abs(prediction - reference),
        prediction=prediction,
        grid=grid,
    )


def write_pointwise_csv(path: Union[str, Path], result: EvaluationResult) -> Path:
    path = Path(path)
    result.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path


__all__ = [
    "EvalGrid",
    "EvaluationResult",
    "build_grid",
    "l2re",
    "mae",
    "evaluate",
    "predict_values",
    "write_pointwise_csv",
]
