"""
Second-Order Differentiation Engine
Value/d1/d2 jets propagated forward along one input axis, recorded on
torch's reverse-mode tape so parameter gradients of any expression built
from them (including second input derivatives) are available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Protocol, Sequence, Union

import torch
from torch import Tensor

from dbpinn.core import NumericOverflowError, UsageError

DTYPE = torch.float64

Number = Union[int, float]

# Flat float64 tensor, one entry per network parameter in canonical order
GradientVector = Tensor


@dataclass(frozen=True)
class DualScalar:
    """
    Second-order jet: value, first and second directional derivatives.

    Channels are float64 tensors of identical shape and every entry is an
    independent per-point scalar, so one DualScalar carries a whole batch of
    collocation points.
    """

    value: Tensor
    d1: Tensor
    d2: Tensor

    @classmethod
    def constant(cls, value: Tensor) -> "DualScalar":
        zero = torch.zeros_like(value)
        return cls(value, zero, zero)

    @classmethod
    def seed(cls, value: Tensor) -> "DualScalar":
        """Input coordinate being differentiated: d1 = 1, d2 = 0"""
        return cls(value, torch.ones_like(value), torch.zeros_like(value))

    @property
    def tape_node(self) -> Optional[object]:
        """Node of the value channel in the parameter tape (None for constants)"""
        return self.value.grad_fn

    # ---------- arithmetic ----------
    def __add__(self, other: Union["DualScalar", Number, Tensor]) -> "DualScalar":
        if isinstance(other, DualScalar):
            return DualScalar(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2)
        return DualScalar(self.value + other, self.d1, self.d2)

    __radd__ = __add__

    def __neg__(self) -> "DualScalar":
        return DualScalar(-self.value, -self.d1, -self.d2)

    def __sub__(self, other: Union["DualScalar", Number, Tensor]) -> "DualScalar":
        return self + (-other)

    def __rsub__(self, other: Union[Number, Tensor]) -> "DualScalar":
        return (-self) + other

    def __mul__(self, other: Union["DualScalar", Number, Tensor]) -> "DualScalar":
        if isinstance(other, DualScalar):
            return DualScalar(
                self.value * other.value,
                self.d1 * other.value + self.value * other.d1,
                self.d2 * other.value + 2.0 * self.d1 * other.d1 + self.value * other.d2,
            )
        return DualScalar(self.value * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "DualScalar":
        return DualScalar(self.value / other, self.d1 / other, self.d2 / other)

    def __pow__(self, power: int) -> "DualScalar":
        if not isinstance(power, int) or power < 0:
            raise UsageError(f"only non-negative integer powers are supported, got {power!r}")
        if power == 0:
            return DualScalar.constant(torch.ones_like(self.value))
        if power == 1:
            return self
        v = self.value
        return self.chain_rule(
            v**power,
            power * v ** (power - 1),
            power * (power - 1) * v ** (power - 2),
        )

    # ---------- unary ----------
    def chain_rule(self, f0: Tensor, f1: Tensor, f2: Tensor) -> "DualScalar":
        """Compose with a scalar function given its value and first two derivatives"""
        return DualScalar(f0, f1 * self.d1, f2 * self.d1 * self.d1 + f1 * self.d2)

    def tanh(self) -> "DualScalar":
        t = torch.tanh(self.value)
        dt = 1.0 - t * t
        return self.chain_rule(t, dt, -2.0 * t * dt)

    def sin(self) -> "DualScalar":
        s, c = torch.sin(self.value), torch.cos(self.value)
        return self.chain_rule(s, c, -s)

    def cos(self) -> "DualScalar":
        s, c = torch.sin(self.value), torch.cos(self.value)
        return self.chain_rule(c, -s, -c)

    # ---------- layers ----------
    def linear(self, weight: Tensor, bias: Tensor) -> "DualScalar":
        """Affine map over the trailing axis; derivative channels see no bias"""
        return DualScalar(
            self.value @ weight.T + bias,
            self.d1 @ weight.T,
            self.d2 @ weight.T,
        )

    def column(self, index: int) -> "DualScalar":
        return DualScalar(self.value[..., index], self.d1[..., index], self.d2[..., index])

    @staticmethod
    def stack(columns: Sequence["DualScalar"]) -> "DualScalar":
        return DualScalar(
            torch.stack([c.value for c in columns], dim=-1),
            torch.stack([c.d1 for c in columns], dim=-1),
            torch.stack([c.d2 for c in columns], dim=-1),
        )

    def is_finite(self) -> bool:
        return bool(
            torch.isfinite(self.value).all()
            and torch.isfinite(self.d1).all()
            and torch.isfinite(self.d2).all()
        )


class Field(Protocol):
    """Anything evaluable on per-axis jets: networks and closed-form solutions alike"""

    def __call__(self, coords: Sequence[DualScalar]) -> DualScalar: ...


def as_points(points: Union[Tensor, Sequence[float], Sequence[Sequence[float]]]) -> Tensor:
    """Coerce a coordinate vector or a batch of them to a float64 (N, d) tensor"""
    tensor = torch.as_tensor(points, dtype=DTYPE)
    if tensor.dim() == 1:
        tensor = tensor.unsqueeze(0)
    if tensor.dim() != 2:
        raise UsageError(f"points must be a vector or an (N, d) batch, got shape {tuple(tensor.shape)}")
    return tensor


def eval_with_input_derivs(
    network: Field,
    point: Union[Tensor, Sequence[float], Sequence[Sequence[float]]],
    direction: int,
    order: int = 2,
) -> DualScalar:
    """
    Evaluate ``network`` with derivatives along input axis ``direction``.

    Args:
        network: a Field (MLP or closed-form function of DualScalar coordinates)
        point: one coordinate vector or an (N, d) batch
        direction: index of the input axis to differentiate along
        order: 0 (value only), 1 or 2

    Returns:
        DualScalar whose channels have shape (N,); everything is recorded on
        the autograd tape of the network's parameters.
    """
    points = as_points(point)
    if not 0 <= direction < points.shape[1]:
        raise UsageError(f"direction {direction} is not an input axis of {points.shape[1]}-d points")
    if order not in (0, 1, 2):
        raise UsageError(f"order must be 0, 1 or 2, got {order}")

    coords: List[DualScalar] = []
    for axis in range(points.shape[1]):
        column = points[:, axis]
        if axis == direction and order > 0:
            coords.append(DualScalar.seed(column))
        else:
            coords.append(DualScalar.constant(column))

    u = network(coords)
    if not u.is_finite():
        raise NumericOverflowError(f"non-finite output from {type(network).__name__}")
    if order < 2:
        u = DualScalar(u.value, u.d1, torch.zeros_like(u.d2))
    if order < 1:
        u = DualScalar(u.value, torch.zeros_like(u.d1), u.d2)
    return u


def grad_wrt_params(loss: Union[Tensor, Number], network) -> GradientVector:
    """
    Gradient of a scalar loss with respect to every network parameter.

    The recorded computation is retained, so repeated calls on the same loss
    return the same vector. A constant loss has a zero gradient; a loss that
    is tape-tracked but never touches the network is a usage error.
    """
    parameters = network.parameters()
    total = sum(p.numel() for p in parameters)

    if not isinstance(loss, Tensor):
        return torch.zeros(total, dtype=DTYPE)
    if loss.numel() != 1:
        raise UsageError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        return torch.zeros(total, dtype=DTYPE)

    grads = torch.autograd.grad(
        loss.reshape(()), parameters, retain_graph=True, allow_unused=True
    )
    if all(g is None for g in grads):
        raise UsageError("loss is not connected to the network's parameter tape")

    flat = torch.cat(
        [
            (g if g is not None else torch.zeros_like(p)).reshape(-1)
            for g, p in zip(grads, parameters)
        ]
    ).detach()
    check_finite_vector(flat, "parameter gradient")
    return flat


def grad_linearity_check(g: GradientVector, c: float) -> GradientVector:
    """Elementwise c * g (the scaling identity grad(c L) = c grad(L))"""
    return torch.as_tensor(g, dtype=DTYPE) * c


def check_finite_vector(vector: Tensor, what: str) -> None:
    bad = (~torch.isfinite(vector)).nonzero()
    if bad.numel():
        index = int(bad[0, 0])
        raise NumericOverflowError(
            f"non-finite {what} entry at index {index}: {float(vector[index])}"
        )


# Convenience for closed-form fields built from coordinates
def field_from(fn: Callable[[DualScalar, DualScalar], DualScalar]) -> Field:
    def field(coords: Sequence[DualScalar]) -> DualScalar:
        return fn(*coords)

    field.__name__ = getattr(fn, "__name__", "field")
    return field
