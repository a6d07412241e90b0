"""
PINN Training Loop
Per step: residual and condition losses, one parameter gradient per loss,
a balancer update of the condition weights, and an Adam step on the
weighted gradient sum
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from dbpinn.config.schema import TrainConfig
from dbpinn.config.settings import get_settings
from dbpinn.core import (
    NumericOverflowError,
    TrainingAborted,
    UsageError,
    WeightOverflowError,
)
from dbpinn.core.autodiff import DTYPE, GradientVector, grad_wrt_params
from dbpinn.core.metrics import EvalGrid, EvaluationResult, build_grid, evaluate
from dbpinn.core.nn import NetworkParams, adam_step, init_adam, init_network
from dbpinn.core.pde import condition_loss, default_counts, get_problem, residual_loss, sample_batch
from dbpinn.core.weighting import LossVector, balancer_step, init_balancer
from dbpinn.utils.logger import get_logger

logger = get_logger("dbpinn.trainer")


def history_columns(labels: Sequence[str]) -> List[str]:
    return (
        ["t", "L_r"]
        + [f"L_{label}" for label in labels]
        + [f"lambda_{label}" for label in labels]
        + ["G", "l2re", "mae"]
    )


@dataclass
class RunRecord:
    """Outcome of one training run; ``history`` holds one row per logged step"""

    config: Dict[str, Any]
    labels: Tuple[str, ...]
    history: List[Dict[str, float]] = field(default_factory=list)
    final_l2re: Optional[float] = None
    final_mae: Optional[float] = None
    steps_completed: int = 0
    wall_time: float = 0.0
    network: Optional[NetworkParams] = None
    evaluation: Optional[EvaluationResult] = None
    diagnostic: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.diagnostic is not None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=history_columns(self.labels))


def combined_gradient(
    g_r: GradientVector, g_conditions: Sequence[GradientVector], lambdas: Sequence[float]
) -> GradientVector:
    """g_r + sum_i lambda_i g_i"""
    g_r = torch.as_tensor(g_r, dtype=DTYPE)
    lambdas = [float(v) for v in np.asarray(lambdas, dtype=np.float64).reshape(-1)]
    if len(g_conditions) != len(lambdas):
        raise UsageError(f"{len(g_conditions)} condition gradients but {len(lambdas)} weights")
    total = g_r.clone()
    for i, (lam, g) in enumerate(zip(lambdas, g_conditions)):
        g = torch.as_tensor(g, dtype=DTYPE)
        if g.shape != g_r.shape:
            raise UsageError(
                f"condition {i} gradient has {g.numel()} entries, residual has {g_r.numel()}"
            )
        total = total + lam * g
    return total


def derive_seeds(seed: int) -> Tuple[int, int]:
    """Independent network-initialization and point-sampling seeds from one run seed"""
    network_seed, sampling_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return int(network_seed), int(sampling_seed)


def _configure_torch(seed: int) -> None:
    torch.set_num_threads(get_settings().num_threads)
    torch.use_deterministic_algorithms(True)
    torch.manual_seed(seed)


def _should_log(step: int, config: TrainConfig) -> bool:
    return step == 1 or step % config.log_stride == 0 or step == config.max_train_steps


def train(config: TrainConfig) -> RunRecord:
    """
    Run one seeded training job.

    Raises TrainingAborted on any numeric failure; its ``record`` holds the
    history so far and the parameters from before the failing update.
    """
    _configure_torch(config.seed)
    problem = get_problem(config.problem, config.merge_initial_conditions)
    labels = problem.condition_labels
    method = config.method

    network_seed, sampling_seed = derive_seeds(config.seed)
    params = init_network(config.layer_sizes, network_seed)
    counts = default_counts(problem, config.n_collocation, config.n_condition, config.condition_counts)
    batch = sample_batch(problem, counts, sampling_seed)
    grid: EvalGrid = build_grid(problem, config.eval_resolution)
    adam = init_adam(params.total_count, config.learning_rate)
    state = init_balancer(len(labels), method.strategy, method.statistic, method.rule())

    record = RunRecord(config=config.model_dump(mode="json"), labels=labels, network=params)
    run_id = f"{config.problem}/{method.label}/seed_{config.seed}"
    logger.run_event(run_id, "started", parameters=params.total_count, **counts)
    started = time.perf_counter()

    step = 0
    try:
        for step in range(1, config.max_train_steps + 1):
            l_r = residual_loss(params, problem, batch.collocation)
            l_c = [condition_loss(params, problem, i, pts) for i, pts in enumerate(batch.conditions)]
            losses = LossVector(l_r.item(), [loss.item() for loss in l_c])

            g_r = grad_wrt_params(l_r, params)
            g_c = [grad_wrt_params(loss, params) for loss in l_c]

            if (step - 1) % config.weight_update_stride == 0:
                state = balancer_step(state, losses, g_r, g_c)

            update = combined_gradient(g_r, g_c, state.lambdas)
            params, adam = adam_step(params, update, adam)
            record.network = params
            record.steps_completed = step

            if _should_log(step, config):
                result = evaluate(params, problem, grid=grid)
                row = {"t": step, "L_r": losses.residual}
                row.update({f"L_{label}": float(v) for label, v in zip(labels, losses.conditions)})
                row.update({f"lambda_{label}": float(v) for label, v in zip(labels, state.lambdas)})
                row.update({"G": float(state.aggregated), "l2re": result.l2re, "mae": result.mae})
                record.history.append(row)
                record.evaluation = result
                logger.training_step(
                    step, L_r=losses.residual, G=float(state.aggregated), l2re=result.l2re
                )
    except (NumericOverflowError, WeightOverflowError) as e:
        diagnostic = f"step {step}: {type(e).__name__}: {e}"
        record.diagnostic = diagnostic
        record.wall_time = time.perf_counter() - started
        try:
            record.evaluation = evaluate(record.network, problem, grid=grid)
            record.final_l2re, record.final_mae = record.evaluation.l2re, record.evaluation.mae
        except NumericOverflowError:
            record.evaluation = None
        logger.error("Training aborted", run_id=run_id, diagnostic=diagnostic)
        raise TrainingAborted(diagnostic, record) from e

    record.wall_time = time.perf_counter() - started
    record.final_l2re = record.evaluation.l2re
    record.final_mae = record.evaluation.mae
    logger.run_event(
        run_id, "finished", l2re=record.final_l2re, mae=record.final_mae, wall_time=record.wall_time
    )
    return record


__all__ = ["RunRecord", "combined_gradient", "derive_seeds", "history_columns", "train"]
