"""
Benchmark PDE Problems
Klein-Gordon, Wave and Helmholtz definitions with residual operators,
condition groups, exact solutions, samplers and the PINN loss terms
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import Tensor

from dbpinn.core import ConfigurationError, NumericOverflowError, UsageError
from dbpinn.core.autodiff import DTYPE, DualScalar, Field, as_points, eval_with_input_derivs, field_from
from dbpinn.utils.logger import get_logger

logger = get_logger("dbpinn.pde")

PI = math.pi

# points (N, d) -> values (N,)
Target = Callable[[Tensor], Tensor]
# (rng, count) -> points (count, d)
Sampler = Callable[[np.random.Generator, int], np.ndarray]
# (points, one jet per input axis) -> residual (N,)
Residual = Callable[[Tensor, Sequence[DualScalar]], Tensor]


@dataclass(frozen=True)
class ConditionSpec:
    """
    One condition-fitting loss term.

    ``derivative_flag`` selects the time-derivative channel instead of the
    value. ``rate_target`` is only set for the merged initial condition,
    which penalizes the value against ``target`` and u_t against it.
    """

    label: str
    sampler: Sampler
    target: Target
    derivative_flag: bool = False
    rate_target: Optional[Target] = None


@dataclass(frozen=True)
class PdeProblem:
    name: str
    input_dim: int
    bounds: Tuple[Tuple[float, float], ...]
    axis_names: Tuple[str, ...]
    residual: Residual
    forcing: Target
    conditions: Tuple[ConditionSpec, ...]
    exact_solution: Field
    time_axis: Optional[int] = None

    @property
    def condition_labels(self) -> Tuple[str, ...]:
        return tuple(c.label for c in self.conditions)

    def exact_values(self, points) -> Tensor:
        return eval_with_input_derivs(self.exact_solution, points, 0, order=0).value.detach()


@dataclass(frozen=True)
class SampleBatch:
    collocation: Tensor
    conditions: Tuple[Tensor, ...]
    labels: Tuple[str, ...]

    def counts(self) -> Dict[str, int]:
        out = {"collocation": int(self.collocation.shape[0])}
        out.update({label: int(p.shape[0]) for label, p in zip(self.labels, self.conditions)})
        return out


# ---------- samplers ----------

def _uniform(bounds: Sequence[Tuple[float, float]]) -> Sampler:
    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return np.column_stack([rng.uniform(lo, hi, size=n) for lo, hi in bounds])

    return sample


def _fixed_axis(bounds: Sequence[Tuple[float, float]], axis: int, value: float) -> Sampler:
    """Uniform points on the hyperplane coordinate[axis] == value"""
    free = _uniform(bounds)

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        pts = free(rng, n)
        pts[:, axis] = value
        return pts

    return sample


def _two_sided(bounds: Sequence[Tuple[float, float]], axis: int) -> Sampler:
    """Uniform points on the two faces coordinate[axis] == lo or hi, side chosen at random"""
    free = _uniform(bounds)
    lo, hi = bounds[axis]

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        pts = free(rng, n)
        side = rng.integers(0, 2, size=n)
        pts[:, axis] = np.where(side == 1, hi, lo)
        return pts

    return sample


def _zero(points: Tensor) -> Tensor:
    return torch.zeros(points.shape[0], dtype=DTYPE)


def _time_conditions(
    bounds, ic_value: Target, bc_target: Target, merge_initial_conditions: bool
) -> Tuple[ConditionSpec, ...]:
    bc = ConditionSpec("bc", _two_sided(bounds, axis=0), bc_target)
    initial = _fixed_axis(bounds, axis=1, value=0.0)
    if merge_initial_conditions:
        return (bc, ConditionSpec("ic", initial, ic_value, rate_target=_zero))
    return (
        bc,
        ConditionSpec("ic_u", initial, ic_value),
        ConditionSpec("ic_ut", initial, _zero, derivative_flag=True),
    )


# ---------- Klein-Gordon ----------

def _klein_gordon_exact(x: DualScalar, t: DualScalar) -> DualScalar:
    return x * (t * (5 * PI)).cos() + (x * t) ** 3


def klein_gordon_forcing(points: Tensor) -> Tensor:
    """f = h_tt - h_xx + h^3 for h = x cos(5 pi t) + (x t)^3"""
    x, t = points[:, 0], points[:, 1]
    h = x * torch.cos(5 * PI * t) + (x * t) ** 3
    h_tt = -25 * PI**2 * x * torch.cos(5 * PI * t) + 6 * x**3 * t
    h_xx = 6 * x * t**3
    return h_tt - h_xx + h**3


def _klein_gordon_residual(points: Tensor, jets: Sequence[DualScalar]) -> Tensor:
    along_x, along_t = jets
    u = along_x.value
    return along_t.d2 - along_x.d2 + u**3 - klein_gordon_forcing(points)


def make_klein_gordon(merge_initial_conditions: bool = False) -> PdeProblem:
    bounds = ((0.0, 1.0), (0.0, 1.0))
    exact = field_from(_klein_gordon_exact)

    def boundary_target(points: Tensor) -> Tensor:
        return eval_with_input_derivs(exact, points, 0, order=0).value

    def initial_value(points: Tensor) -> Tensor:
        return points[:, 0].clone()

    return PdeProblem(
        name="klein-gordon",
        input_dim=2,
        bounds=bounds,
        axis_names=("x", "t"),
        residual=_klein_gordon_residual,
        forcing=klein_gordon_forcing,
        conditions=_time_conditions(bounds, initial_value, boundary_target, merge_initial_conditions),
        exact_solution=exact,
        time_axis=1,
    )


# ---------- Wave ----------

def _wave_exact(x: DualScalar, t: DualScalar) -> DualScalar:
    return (x * PI).sin() * (t * (2 * PI)).cos() + 0.5 * (x * (4 * PI)).sin() * (t * (8 * PI)).cos()


def _wave_residual(points: Tensor, jets: Sequence[DualScalar]) -> Tensor:
    along_x, along_t = jets
    return along_t.d2 - 4.0 * along_x.d2


def make_wave(merge_initial_conditions: bool = False) -> PdeProblem:
    bounds = ((0.0, 1.0), (0.0, 1.0))

    def initial_value(points: Tensor) -> Tensor:
        x = points[:, 0]
        return torch.sin(PI * x) + 0.5 * torch.sin(4 * PI * x)

    return PdeProblem(
        name="wave",
        input_dim=2,
        bounds=bounds,
        axis_names=("x", "t"),
        residual=_wave_residual,
        forcing=_zero,
        conditions=_time_conditions(bounds, initial_value, _zero, merge_initial_conditions),
        exact_solution=field_from(_wave_exact),
        time_axis=1,
    )


# ---------- Helmholtz ----------

def _helmholtz_exact(x: DualScalar, y: DualScalar) -> DualScalar:
    return (x * PI).sin() * (y * (4 * PI)).sin()


def helmholtz_forcing(points: Tensor) -> Tensor:
    x, y = points[:, 0], points[:, 1]
    s = torch.sin(PI * x) * torch.sin(4 * PI * y)
    return -(PI**2) * s - (4 * PI) ** 2 * s + s


def _helmholtz_residual(points: Tensor, jets: Sequence[DualScalar]) -> Tensor:
    along_x, along_y = jets
    return along_x.d2 + along_y.d2 + along_x.value - helmholtz_forcing(points)


def make_helmholtz(merge_initial_conditions: bool = False) -> PdeProblem:
    # no initial condition to merge; the boundary is split into x-edges and y-edges
    bounds = ((-1.0, 1.0), (-1.0, 1.0))
    return PdeProblem(
        name="helmholtz",
        input_dim=2,
        bounds=bounds,
        axis_names=("x", "y"),
        residual=_helmholtz_residual,
        forcing=helmholtz_forcing,
        conditions=(
            ConditionSpec("bc_x", _two_sided(bounds, axis=0), _zero),
            ConditionSpec("bc_y", _two_sided(bounds, axis=1), _zero),
        ),
        exact_solution=field_from(_helmholtz_exact),
        time_axis=None,
    )


PROBLEMS: Dict[str, Callable[..., PdeProblem]] = {
    "klein-gordon": make_klein_gordon,
    "wave": make_wave,
    "helmholtz": make_helmholtz,
}


def get_problem(name: str, merge_initial_conditions: bool = False) -> PdeProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(f"problem: unknown problem {name!r}, expected one of {sorted(PROBLEMS)}")
    return factory(merge_initial_conditions=merge_initial_conditions)


# ---------- sampling ----------

def sample_batch(problem: PdeProblem, counts: Mapping[str, int], seed: int) -> SampleBatch:
    """
    Draw the fixed point sets of a run.

    ``counts`` maps "collocation" and every condition label to a point count.
    Each set draws from its own child stream of the seed, so changing one
    count leaves the other sets untouched.
    """
    keys = ("collocation",) + problem.condition_labels
    for key in keys:
        if key not in counts:
            raise ConfigurationError(f"counts: missing point count for {key!r}")
        n = counts[key]
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n <= 0:
            raise ConfigurationError(f"counts.{key} must be a positive integer, got {n!r}")

    streams = np.random.SeedSequence(seed % (1 << 64)).spawn(len(keys))
    rngs = [np.random.default_rng(s) for s in streams]

    collocation = _uniform(problem.bounds)(rngs[0], int(counts["collocation"]))
    condition_points = tuple(
        torch.from_numpy(spec.sampler(rng, int(counts[spec.label])))
        for spec, rng in zip(problem.conditions, rngs[1:])
    )
    batch = SampleBatch(torch.from_numpy(collocation), condition_points, problem.condition_labels)
    logger.debug("Sampled point sets", problem=problem.name, seed=seed, **batch.counts())
    return batch


def default_counts(
    problem: PdeProblem,
    n_collocation: int = 2000,
    n_condition: int = 200,
    overrides: Optional[Mapping[str, int]] = None,
) -> Dict[str, int]:
    counts = {"collocation": n_collocation}
    counts.update({label: n_condition for label in problem.condition_labels})
    for label, n in (overrides or {}).items():
        if label not in counts:
            raise ConfigurationError(
                f"condition_counts: unknown condition {label!r} for {problem.name}, "
                f"expected one of {list(problem.condition_labels)}"
            )
        counts[label] = n
    return counts


# ---------- losses ----------

def condition_loss(network: Field, problem: PdeProblem, condition_index: int, points) -> Tensor:
    """Mean squared mismatch of one condition (tape-tracked scalar)"""
    if not 0 <= condition_index < len(problem.conditions):
        raise UsageError(f"condition index {condition_index} out of range for {problem.name}")
    points = as_points(points)
    spec = problem.conditions[condition_index]
    if points.shape[0] == 0:
        raise ConfigurationError(f"condition {spec.label!r} has an empty point set")

    needs_rate = spec.derivative_flag or spec.rate_target is not None
    if needs_rate and problem.time_axis is None:
        raise UsageError(f"{problem.name} has no time axis for condition {spec.label!r}")

    if needs_rate:
        jet = eval_with_input_derivs(network, points, problem.time_axis, order=1)
    else:
        jet = eval_with_input_derivs(network, points, 0, order=0)

    if spec.derivative_flag:
        return torch.mean((jet.d1 - spec.target(points)) ** 2)
    loss = torch.mean((jet.value - spec.target(points)) ** 2)
    if spec.rate_target is not None:
        loss = loss + torch.mean((jet.d1 - spec.rate_target(points)) ** 2)
    return loss


def residual_loss(network: Field, problem: PdeProblem, collocation) -> Tensor:
    """Mean squared PDE residual over the collocation points (tape-tracked scalar)"""
    points = as_points(collocation)
    if points.shape[0] == 0:
        raise ConfigurationError("collocation point set is empty")
    # one forward pass per input axis, all on the same tape
    jets = tuple(
        eval_with_input_derivs(network, points, axis, order=2) for axis in range(problem.input_dim)
    )
    r = problem.residual(points, jets)
    finite = torch.isfinite(r)
    if not bool(finite.all()):
        index = int((~finite).nonzero()[0, 0])
        coords = points[index].tolist()
        raise NumericOverflowError(f"non-finite residual at point {coords}")
    return torch.mean(r**2)
