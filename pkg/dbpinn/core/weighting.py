"""
Loss Weighting Strategies
Equal weighting, per-condition gradient-statistics weighting, and dual
balancing (one aggregated weight split across conditions by their fitting
difficulty), with Welford and EMA update rules
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Literal, Optional, Sequence, Union

import numpy as np
import torch

from dbpinn.core import (
    ConfigurationError,
    DegenerateStatisticError,
    NumericOverflowError,
    UsageError,
    WeightOverflowError,
)
from dbpinn.utils.logger import get_logger

logger = get_logger("dbpinn.weighting")

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]
Position = Literal["numerator", "denominator"]


class GradStatistic(str, Enum):
    MEAN = "mean"
    STD = "std"
    KURTOSIS = "kurtosis"

    @classmethod
    def parse(cls, name: Union[str, "GradStatistic"]) -> "GradStatistic":
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(
                f"statistic: unknown statistic {name!r}, expected one of {[s.value for s in cls]}"
            )


class Strategy(str, Enum):
    EQUAL = "equal"
    GW = "gw"
    DB = "db"
    DB_AVG = "db_avg"
    DB_NO_BALANCE = "db_no_balance"

    @classmethod
    def parse(cls, name: Union[str, "Strategy"]) -> "Strategy":
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(
                f"strategy: unknown strategy {name!r}, expected one of {[s.value for s in cls]}"
            )

    @property
    def uses_difficulty(self) -> bool:
        return self in (Strategy.DB, Strategy.DB_AVG)


@dataclass(frozen=True)
class UpdateRule:
    """How instantaneous weights are folded into the running weights"""

    kind: Literal["welford", "ema"] = "welford"
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind == "welford":
            if self.alpha is not None:
                raise ConfigurationError("alpha: only the ema update rule takes an alpha")
        elif self.kind == "ema":
            _check_alpha(self.alpha)
        else:
            raise ConfigurationError(
                f"update_rule: unknown update rule {self.kind!r}, expected 'welford' or 'ema'"
            )

    @classmethod
    def welford(cls) -> "UpdateRule":
        return cls("welford")

    @classmethod
    def ema(cls, alpha: float) -> "UpdateRule":
        return cls("ema", alpha)

    def apply(self, prev: ArrayLike, x: ArrayLike, t: int) -> np.ndarray:
        if self.kind == "ema":
            return ema_update(prev, x, self.alpha)
        return welford_update(prev, x, t)

    def __str__(self) -> str:
        return "welford" if self.kind == "welford" else f"ema({self.alpha!r})"


def _check_alpha(alpha) -> float:
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"alpha: must satisfy 0 < alpha <= 1, got {alpha!r}")
    return float(alpha)


def _as_vector(values: ArrayLike, what: str) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    vector = np.asarray(values, dtype=np.float64).reshape(-1)
    if vector.size == 0:
        raise UsageError(f"{what} is empty")
    if not np.all(np.isfinite(vector)):
        index = int(np.flatnonzero(~np.isfinite(vector))[0])
        raise NumericOverflowError(f"non-finite {what} entry at index {index}: {vector[index]}")
    return vector


@dataclass(frozen=True)
class LossVector:
    """Scalar loss values of one step: the residual and the M condition losses"""

    residual: float
    conditions: np.ndarray

    def __post_init__(self):
        conditions = _as_vector(self.conditions, "condition loss")
        residual = float(self.residual)
        if not np.isfinite(residual):
            raise NumericOverflowError(f"non-finite residual loss: {residual}")
        if residual < 0 or np.any(conditions < 0):
            raise UsageError("losses must be nonnegative")
        object.__setattr__(self, "residual", residual)
        object.__setattr__(self, "conditions", conditions)

    @property
    def total(self) -> float:
        return self.residual + float(np.sum(self.conditions))


# ---------- gradient statistics ----------

def grad_stat(g: ArrayLike, stat: Union[GradStatistic, str], position: Position) -> float:
    """
    Summary statistic of a gradient vector.

    mean: max|g| as numerator, mean|g| as denominator.
    std: population standard deviation in both positions.
    kurtosis: m4 / m2**2 (central moments, non-excess) in both positions.
    """
    stat = GradStatistic.parse(stat)
    if position not in ("numerator", "denominator"):
        raise UsageError(f"position must be 'numerator' or 'denominator', got {position!r}")
    g = _as_vector(g, "gradient")

    if stat is GradStatistic.MEAN:
        if position == "numerator":
            return float(np.max(np.abs(g)))
        value = float(np.mean(np.abs(g)))
        if value == 0.0:
            raise DegenerateStatisticError("mean gradient magnitude is zero")
        return value

    if np.all(g == g[0]):
        raise DegenerateStatisticError(f"{stat.value} of a zero-variance gradient")
    centered = g - np.mean(g)
    with np.errstate(over="ignore", invalid="ignore"):
        m2 = float(np.mean(centered**2))
        if m2 == 0.0:
            raise DegenerateStatisticError(f"{stat.value} of a zero-variance gradient")
        if stat is GradStatistic.STD:
            value = float(np.sqrt(m2))
        else:
            value = float(np.mean(centered**4)) / (m2 * m2)
    if not np.isfinite(value):
        raise NumericOverflowError(f"non-finite {stat.value} statistic of a gradient")
    return value


def _ratio_terms(
    g_r: ArrayLike,
    g_conditions: Sequence[ArrayLike],
    lambdas: ArrayLike,
    stat: GradStatistic,
) -> np.ma.MaskedArray:
    """Per-condition ratios stat_num(g_r) / stat_den(lambda_i g_i); degenerate entries masked"""
    stat = GradStatistic.parse(stat)
    lambdas = _as_vector(lambdas, "weight")
    if len(g_conditions) == 0:
        raise UsageError("at least one condition gradient is required")
    if len(g_conditions) != lambdas.size:
        raise UsageError(f"{len(g_conditions)} condition gradients but {lambdas.size} weights")
    if np.any(lambdas < 0):
        raise UsageError("weights must be nonnegative")

    g_r = _as_vector(g_r, "residual gradient")
    conditions = [_as_vector(g, f"condition {i} gradient") for i, g in enumerate(g_conditions)]
    for i, g in enumerate(conditions):
        if g.size != g_r.size:
            raise UsageError(f"condition {i} gradient has {g.size} entries, residual has {g_r.size}")

    m = len(conditions)
    try:
        numerator = grad_stat(g_r, stat, "numerator")
    except DegenerateStatisticError:
        return np.ma.masked_all(m, dtype=np.float64)

    terms = np.zeros(m, dtype=np.float64)
    mask = np.zeros(m, dtype=bool)
    for i, (lam, g) in enumerate(zip(lambdas, conditions)):
        try:
            denominator = grad_stat(lam * g, stat, "denominator")
            with np.errstate(over="ignore"):
                terms[i] = np.float64(numerator) / denominator
        except DegenerateStatisticError:
            mask[i] = True
    return np.ma.MaskedArray(terms, mask=mask)


def gw_weights(
    g_r: ArrayLike,
    g_conditions: Sequence[ArrayLike],
    lambdas: ArrayLike,
    stat: Union[GradStatistic, str],
) -> np.ma.MaskedArray:
    """
    Instantaneous per-condition weights, each the residual-to-condition
    gradient ratio. Conditions whose statistic is degenerate are masked and
    should keep their previous weight.
    """
    weights = _ratio_terms(g_r, g_conditions, lambdas, stat)
    if not np.all(np.isfinite(weights.filled(0.0))):
        raise WeightOverflowError(f"non-finite instantaneous weight: {weights.tolist()}")
    return weights


def aggregated_weight(
    g_r: ArrayLike,
    g_conditions: Sequence[ArrayLike],
    lambdas: ArrayLike,
    stat: Union[GradStatistic, str],
) -> float:
    """Total gradient ratio G summed over conditions; raises if any term is degenerate"""
    terms = _ratio_terms(g_r, g_conditions, lambdas, stat)
    if np.ma.is_masked(terms):
        bad = [int(i) for i in np.flatnonzero(np.ma.getmaskarray(terms))]
        raise DegenerateStatisticError(f"degenerate gradient statistic for conditions {bad}")
    total = float(np.sum(terms.data))
    if not np.isfinite(total):
        raise WeightOverflowError(f"non-finite aggregated weight from terms {terms.data.tolist()}")
    return total


# ---------- intra-balancing ----------

def difficulty_index(losses: ArrayLike, mu: ArrayLike) -> np.ndarray:
    """Current loss over its running mean; an exactly-fit condition (mu == 0) is neutral"""
    losses = _as_vector(losses, "condition loss")
    mu = _as_vector(mu, "running mean")
    if losses.shape != mu.shape:
        raise UsageError(f"{losses.size} losses but {mu.size} running means")
    index = np.ones_like(losses)
    nonzero = mu != 0.0
    index[nonzero] = losses[nonzero] / mu[nonzero]
    return index


def allocate(difficulty: ArrayLike, aggregated: float) -> np.ndarray:
    """Split G proportionally to difficulty"""
    difficulty = _as_vector(difficulty, "difficulty index")
    if np.any(difficulty < 0) or not np.sum(difficulty) > 0:
        raise UsageError(f"difficulty indexes must be nonnegative with a positive sum, got {difficulty.tolist()}")
    return aggregated * (difficulty / np.sum(difficulty))


def allocate_avg(m: int, aggregated: float) -> np.ndarray:
    if m < 1:
        raise UsageError(f"need at least one condition, got {m}")
    return np.full(m, aggregated / m, dtype=np.float64)


# ---------- update rules ----------

def welford_update(prev: ArrayLike, x: ArrayLike, t: int) -> np.ndarray:
    """Running arithmetic mean after the t-th observation (t=1 returns x exactly)"""
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)) or t < 1:
        raise UsageError(f"welford step must be an integer >= 1, got {t!r}")
    prev = np.asarray(prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return (1.0 - 1.0 / t) * prev + (1.0 / t) * x


def ema_update(prev: ArrayLike, x: ArrayLike, alpha: float) -> np.ndarray:
    alpha = _check_alpha(alpha)
    prev = np.asarray(prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return (1.0 - alpha) * prev + alpha * x


# ---------- balancer ----------

@dataclass(frozen=True)
class BalancerState:
    """
    Weights and running statistics carried between optimizer steps.

    ``aggregated`` is the last computed G (0 for equal weighting) and
    ``skipped`` records whether the last step kept the previous weights.
    """

    lambdas: np.ndarray
    mu_loss: np.ndarray
    difficulty: np.ndarray
    t: int
    update_rule: UpdateRule
    strategy: Strategy
    statistic: GradStatistic
    aggregated: float = 0.0
    mu_seeded: bool = False
    skipped: bool = False
    instantaneous: Optional[np.ndarray] = field(default=None)

    @property
    def m(self) -> int:
        return int(self.lambdas.size)


def default_update_rule(strategy: Union[Strategy, str]) -> UpdateRule:
    """gw baselines smooth with EMA(0.1); every other strategy uses Welford"""
    if Strategy.parse(strategy) is Strategy.GW:
        return UpdateRule.ema(0.1)
    return UpdateRule.welford()


def init_balancer(
    m: int,
    strategy: Union[Strategy, str] = Strategy.DB,
    statistic: Union[GradStatistic, str] = GradStatistic.MEAN,
    update_rule: Optional[UpdateRule] = None,
) -> BalancerState:
    if m < 1:
        raise ConfigurationError(f"a balancer needs at least one condition, got {m}")
    strategy = Strategy.parse(strategy)
    statistic = GradStatistic.parse(statistic)
    if update_rule is None:
        update_rule = default_update_rule(strategy)
    if strategy is Strategy.DB_NO_BALANCE and update_rule.kind != "welford":
        raise ConfigurationError("update_rule: db_no_balance always uses the welford rule")
    ones = np.ones(m, dtype=np.float64)
    return BalancerState(
        lambdas=ones.copy(),
        mu_loss=ones.copy(),
        difficulty=ones.copy(),
        t=0,
        update_rule=update_rule,
        strategy=strategy,
        statistic=statistic,
        instantaneous=ones.copy(),
    )


def _checked(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise WeightOverflowError(f"non-finite {what}: {values.tolist()}")
    return values


def balancer_step(
    state: BalancerState,
    losses: LossVector,
    g_r: ArrayLike,
    g_conditions: Sequence[ArrayLike],
) -> BalancerState:
    """
    Advance the weights by one step.

    A degenerate statistic keeps the previous weights (and running means)
    while the step counter still advances. Non-finite weights raise
    WeightOverflowError.
    """
    if losses.conditions.size != state.m or len(g_conditions) != state.m:
        raise UsageError(
            f"balancer has {state.m} conditions, got {losses.conditions.size} losses "
            f"and {len(g_conditions)} gradients"
        )
    t = state.t + 1

    if state.strategy is Strategy.EQUAL:
        return replace(state, t=t, skipped=False)

    if state.strategy in (Strategy.GW, Strategy.DB_NO_BALANCE):
        hat = gw_weights(g_r, g_conditions, state.lambdas, state.statistic)
        mask = np.ma.getmaskarray(hat)
        if mask.all():
            logger.debug("Weight update skipped", step=t, reason="degenerate statistic")
            return replace(state, t=t, skipped=True)
        # masked conditions substitute their previous weight
        filled = np.where(mask, state.lambdas, hat.filled(0.0))
        updated = state.update_rule.apply(state.lambdas, filled, t)
        lambdas = _checked(np.where(mask, state.lambdas, updated), "weights")
        return replace(
            state,
            lambdas=lambdas,
            t=t,
            aggregated=float(np.sum(filled)),
            skipped=bool(mask.any()),
            instantaneous=filled,
        )

    try:
        g = aggregated_weight(g_r, g_conditions, state.lambdas, state.statistic)
    except DegenerateStatisticError as e:
        logger.debug("Weight update skipped", step=t, reason=str(e))
        return replace(state, t=t, skipped=True)

    prev_mu = state.mu_loss if state.mu_seeded else losses.conditions
    mu = welford_update(prev_mu, losses.conditions, t)
    difficulty = difficulty_index(losses.conditions, mu)
    if state.strategy is Strategy.DB and not np.sum(difficulty) > 0:
        logger.debug("Weight update skipped", step=t, reason="every condition loss is zero")
        return replace(state, t=t, skipped=True)
    if state.strategy is Strategy.DB_AVG:
        hat = allocate_avg(state.m, g)
    else:
        hat = allocate(difficulty, g)
    hat = _checked(hat, "instantaneous weights")
    lambdas = _checked(state.update_rule.apply(state.lambdas, hat, t), "weights")

    return replace(
        state,
        lambdas=lambdas,
        mu_loss=mu,
        difficulty=difficulty,
        t=t,
        aggregated=g,
        mu_seeded=True,
        skipped=False,
        instantaneous=hat,
    )


__all__ = [
    "GradStatistic",
    "Strategy",
    "UpdateRule",
    "LossVector",
    "BalancerState",
    "grad_stat",
    "aggregated_weight",
    "gw_weights",
    "difficulty_index",
    "allocate",
    "allocate_avg",
    "welford_update",
    "ema_update",
    "default_update_rule",
    "init_balancer",
    "balancer_step",
]
