"""GRU and LSTM step functions.

Gate blocks are laid out along the last axis of every weight: ``[r, z, n]``
for the GRU and ``[i, f, g, o]`` for the LSTM. Inputs and states are batches of
row vectors, one row per pedestrian.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np

from urnn.autodiff import Tensor, add, concat, matmul, mul, sigmoid, slice_last, sub, tanh, zeros
from urnn.exceptions import ShapeMismatchError


class CellKind(Enum):
    GRU = "gru"
    LSTM = "lstm"

    @property
    def gates(self) -> int:
        return 3 if self is CellKind.GRU else 4

    @classmethod
    def from_token(cls, token: str) -> "CellKind":
        try:
            return cls(token.lower())
        except ValueError:
            raise ValueError(f"Unknown cell '{token}', expected one of {[k.value for k in cls]}")


@dataclass
class CellParams:
    kind: CellKind
    input_dim: int
    hidden_dim: int
    w_ih: Tensor
    w_hh: Tensor
    bias: Tensor

    def tensors(self) -> Dict[str, Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "bias": self.bias}

    @property
    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors().values())


@dataclass
class CellState:
    h: Tensor
    c: Optional[Tensor] = None


def zero_state(kind: CellKind, batch: int, hidden_dim: int) -> CellState:
    c = zeros(batch, hidden_dim) if kind is CellKind.LSTM else None
    return CellState(h=zeros(batch, hidden_dim), c=c)


def init_params(kind: CellKind, input_dim: int, hidden_dim: int,
                rng: np.random.Generator, requires_grad: bool = True) -> CellParams:
    """Uniform ``[-1/sqrt(H), 1/sqrt(H)]`` weights; LSTM forget-gate bias set to 1."""
    if input_dim <= 0 or hidden_dim <= 0:
        raise ValueError(f"Cell dims must be positive, got {input_dim = } {hidden_dim = }")
    bound = 1.0 / np.sqrt(hidden_dim)
    width = kind.gates * hidden_dim
    w_ih = rng.uniform(-bound, bound, size=(input_dim, width))
    w_hh = rng.uniform(-bound, bound, size=(hidden_dim, width))
    bias = rng.uniform(-bound, bound, size=(width,))
    if kind is CellKind.LSTM:
        bias[hidden_dim:2 * hidden_dim] = 1.0
    return CellParams(kind, input_dim, hidden_dim,
                      Tensor(w_ih, requires_grad=requires_grad),
                      Tensor(w_hh, requires_grad=requires_grad),
                      Tensor(bias, requires_grad=requires_grad))


def _check(kind: CellKind, params: CellParams, state: CellState, x: Tensor):
    if params.kind is not kind:
        raise ValueError(f"Cell parameters are {params.kind.value}, step asked for {kind.value}")
    if x.data.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeMismatchError("cell_step input", x.shape, (x.shape[0] if x.data.ndim else 1, params.input_dim))
    if state.h.shape != (x.shape[0], params.hidden_dim):
        raise ShapeMismatchError("cell_step state", state.h.shape, (x.shape[0], params.hidden_dim))
    if (state.c is not None) != (kind is CellKind.LSTM):
        raise ValueError(f"Cell state for {kind.value} must {'' if kind is CellKind.LSTM else 'not '}carry c")
    if state.c is not None and state.c.shape != state.h.shape:
        raise ShapeMismatchError("cell_step cell state", state.c.shape, state.h.shape)


def _gru_step(params: CellParams, state: CellState, x: Tensor) -> CellState:
    size = params.hidden_dim
    gx = add(matmul(x, params.w_ih), params.bias)
    gh = matmul(state.h, params.w_hh)
    r = sigmoid(add(slice_last(gx, 0, size), slice_last(gh, 0, size)))
    z = sigmoid(add(slice_last(gx, size, 2 * size), slice_last(gh, size, 2 * size)))
    n = tanh(add(slice_last(gx, 2 * size, 3 * size), mul(r, slice_last(gh, 2 * size, 3 * size))))
    # h' = (1 - z) * n + z * h
    h = add(n, mul(z, sub(state.h, n)))
    return CellState(h=h)


def _lstm_step(params: CellParams, state: CellState, x: Tensor) -> CellState:
    size = params.hidden_dim
    gates = add(add(matmul(x, params.w_ih), matmul(state.h, params.w_hh)), params.bias)
    i = sigmoid(slice_last(gates, 0, size))
    f = sigmoid(slice_last(gates, size, 2 * size))
    g = tanh(slice_last(gates, 2 * size, 3 * size))
    o = sigmoid(slice_last(gates, 3 * size, 4 * size))
    c = add(mul(f, state.c), mul(i, g))
    h = mul(o, tanh(c))
    return CellState(h=h, c=c)


def cell_step(kind: CellKind, params: CellParams, state: CellState, x: Tensor) -> CellState:
    """Advance one recurrent step. Pure: returns a new state, mutates nothing."""
    _check(kind, params, state, x)
    if kind is CellKind.GRU:
        return _gru_step(params, state, x)
    return _lstm_step(params, state, x)


def concat_states(first: CellState, second: CellState) -> CellState:
    c = concat([first.c, second.c]) if first.c is not None else None
    return CellState(h=concat([first.h, second.h]), c=c)
