"""
Multilayer Perceptron and Adam
tanh MLP with a linear head, Glorot-uniform initialization, a functional
Adam update and a bit-exact checkpoint format
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor

from dbpinn.core import ConfigurationError, NumericOverflowError, UsageError
from dbpinn.core.autodiff import DTYPE, DualScalar, GradientVector, as_points, check_finite_vector

CHECKPOINT_MAGIC = b"DBPINN01"


def _validate_layer_sizes(layer_sizes: Sequence[int]) -> Tuple[int, ...]:
    sizes = tuple(layer_sizes)
    if len(sizes) < 2:
        raise ConfigurationError(f"layer_sizes needs an input and an output size, got {list(sizes)}")
    for k, size in enumerate(sizes):
        if isinstance(size, bool) or not isinstance(size, (int, np.integer)) or size <= 0:
            raise ConfigurationError(f"layer_sizes[{k}] must be a positive integer, got {size!r}")
    return tuple(int(s) for s in sizes)


@dataclass(frozen=True)
class NetworkParams:
    """
    Parameter snapshot of an MLP.

    Canonical order is W0, b0, W1, b1, ...; each W has shape (fan_out, fan_in)
    and is flattened row-major. Snapshots are never mutated in place: the
    optimizer returns a fresh one.
    """

    layer_sizes: Tuple[int, ...]
    weights: Tuple[Tensor, ...]
    biases: Tuple[Tensor, ...]

    @property
    def total_count(self) -> int:
        return sum(
            fan_in * fan_out + fan_out
            for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )

    def parameters(self) -> List[Tensor]:
        ordered: List[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            ordered.extend((w, b))
        return ordered

    def flat(self) -> Tensor:
        return torch.cat([p.detach().reshape(-1) for p in self.parameters()])

    @classmethod
    def from_flat(cls, layer_sizes: Sequence[int], vector: Tensor) -> "NetworkParams":
        sizes = _validate_layer_sizes(layer_sizes)
        vector = torch.as_tensor(vector, dtype=DTYPE).detach()
        expected = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        if vector.dim() != 1 or vector.numel() != expected:
            raise UsageError(f"vector has {vector.numel()} entries, layer sizes need {expected}")
        weights, biases, offset = [], [], 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = vector[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
            offset += fan_in * fan_out
            b = vector[offset : offset + fan_out]
            offset += fan_out
            weights.append(w.clone().requires_grad_(True))
            biases.append(b.clone().requires_grad_(True))
        return cls(sizes, tuple(weights), tuple(biases))

    @classmethod
    def from_arrays(
        cls, weights: Sequence[Sequence[Sequence[float]]], biases: Sequence[Sequence[float]]
    ) -> "NetworkParams":
        """Build a network from explicit per-layer weights (fan_out x fan_in) and biases"""
        ws = [torch.as_tensor(w, dtype=DTYPE) for w in weights]
        bs = [torch.as_tensor(b, dtype=DTYPE) for b in biases]
        sizes = [ws[0].shape[1]] + [w.shape[0] for w in ws]
        flat = torch.cat([t.reshape(-1) for pair in zip(ws, bs) for t in pair])
        return cls.from_flat(sizes, flat)

    def __call__(self, coords: Sequence[DualScalar]) -> DualScalar:
        a = DualScalar.stack(coords)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a.linear(w, b)
            if k < last:
                a = a.tanh()
            if not a.is_finite():
                raise NumericOverflowError(f"non-finite activation in layer {k}")
        return a.column(0)

    def predict(self, points: Union[Tensor, Sequence[Sequence[float]]]) -> Tensor:
        """Value channel only, without the tape"""
        a = as_points(points)
        last = len(self.weights) - 1
        with torch.no_grad():
            for k, (w, b) in enumerate(zip(self.weights, self.biases)):
                a = a @ w.T + b
                if k < last:
                    a = torch.tanh(a)
                if not torch.isfinite(a).all():
                    raise NumericOverflowError(f"non-finite activation in layer {k}")
        return a[:, 0]


def init_network(layer_sizes: Sequence[int], seed: int) -> NetworkParams:
    """Glorot-uniform weights and zero biases; identical seeds give identical bits"""
    sizes = _validate_layer_sizes(layer_sizes)
    rng = np.random.default_rng(seed % (1 << 64))
    chunks = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_out * fan_in))
        chunks.append(np.zeros(fan_out))
    return NetworkParams.from_flat(sizes, torch.from_numpy(np.concatenate(chunks)))


@dataclass(frozen=True)
class AdamState:
    first_moment: Tensor
    second_moment: Tensor
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(total_count: int, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    if not learning_rate > 0:
        raise ConfigurationError(f"learning_rate must be > 0, got {learning_rate}")
    zeros = torch.zeros(total_count, dtype=DTYPE)
    return AdamState(zeros, zeros.clone(), 0, learning_rate, beta1, beta2, epsilon)


def adam_step(
    params: NetworkParams, grad: GradientVector, state: AdamState
) -> Tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update; returns new parameter and state snapshots"""
    grad = torch.as_tensor(grad, dtype=DTYPE).detach()
    if grad.dim() != 1 or grad.numel() != params.total_count:
        raise UsageError(
            f"gradient has {grad.numel()} entries, network has {params.total_count} parameters"
        )
    check_finite_vector(grad, "gradient")

    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    theta = params.flat() - state.learning_rate * m_hat / (torch.sqrt(v_hat) + state.epsilon)

    new_state = AdamState(m, v, t, state.learning_rate, state.beta1, state.beta2, state.epsilon)
    return NetworkParams.from_flat(params.layer_sizes, theta), new_state


# ---------- checkpoints ----------
#
# Layout (all little-endian):
#   8 bytes   magic b"DBPINN01"
#   4 bytes   uint32 header length H
#   H bytes   UTF-8 JSON header {"count": P, "dtype": "<f8", "layer_sizes": [...], "step": n}
#   8*P bytes float64 parameters in canonical order


def save_checkpoint(path: Union[str, Path], params: NetworkParams, step: int) -> Path:
    path = Path(path)
    header = json.dumps(
        {
            "count": params.total_count,
            "dtype": "<f8",
            "layer_sizes": list(params.layer_sizes),
            "step": int(step),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = params.flat().numpy().astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(np.array([len(header)], dtype="<u4").tobytes())
        f.write(header)
        f.write(body)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[NetworkParams, int]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise UsageError(f"{path} is not a dbpinn checkpoint")
    header_len = int(np.frombuffer(data[8:12], dtype="<u4")[0])
    header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    values = np.frombuffer(data[12 + header_len :], dtype="<f8")
    if values.size != header["count"]:
        raise UsageError(f"{path} holds {values.size} values, header says {header['count']}")
    params = NetworkParams.from_flat(header["layer_sizes"], torch.from_numpy(values.copy()))
    return params, int(header["step"])
