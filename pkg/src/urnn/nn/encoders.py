"""Motion encoders: plain, bidirectional, asymmetrical (U) and reversed-U.

All encoders read a list of embedded velocities ``[e_1, ..., e_T]`` where
every ``e_t`` is a ``(pedestrians, e_dim)`` batch, and return an
:class:`Encoding` that seeds the decoder.

The U encoder first runs a backward pass from a zero state, so that
``h^b_t`` summarizes the strictly-future embeddings ``e_{t+1} .. e_T``
(``h^b_T`` is zero), then a forward pass feeding ``[e_t, h^b_t]`` at step
``t``. The final forward state is the encoding.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from urnn.autodiff import Tensor, add, as_tensor, concat, matmul
from urnn.exceptions import ShapeMismatchError
from urnn.nn.cells import CellKind, CellParams, CellState, cell_step, concat_states, init_params, zero_state


class EncoderVariant(Enum):
    NONE = "none"
    PLAIN = "plain"
    BI = "bi"
    U = "u"
    REVERSED_U = "ur"

    @classmethod
    def from_token(cls, token: str) -> "EncoderVariant":
        aliases = {"reversed-u": "ur", "reversed_u": "ur", "rnn": "plain"}
        token = aliases.get(token.lower(), token.lower())
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"Unknown encoder '{token}', expected one of {[v.value for v in cls]}")

    @property
    def label(self) -> str:
        return {"none": "None", "plain": "", "bi": "Bi-", "u": "U-", "ur": "reversed U-"}[self.value]


@dataclass
class EmbeddingParams:
    weight: Tensor
    bias: Tensor

    @property
    def e_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class Encoding:
    h: Tensor
    variant: EncoderVariant
    c: Optional[Tensor] = None

    def as_state(self) -> CellState:
        return CellState(h=self.h, c=self.c)


@dataclass
class EncoderParams:
    variant: EncoderVariant
    kind: CellKind
    hidden_dim: int
    cells: Dict[str, CellParams] = field(default_factory=dict)


def init_embedding(e_dim: int, rng: np.random.Generator, requires_grad: bool = True) -> EmbeddingParams:
    bound = 1.0 / np.sqrt(2)
    return EmbeddingParams(Tensor(rng.uniform(-bound, bound, size=(2, e_dim)), requires_grad=requires_grad),
                           Tensor(rng.uniform(-bound, bound, size=(e_dim,)), requires_grad=requires_grad))


def embed(velocities: Sequence[Union[Tensor, np.ndarray]], params: EmbeddingParams) -> List[Tensor]:
    """Map each velocity batch through the shared linear embedding."""
    if len(velocities) == 0:
        raise ValueError("Cannot embed an empty velocity sequence")
    out = []
    for v in velocities:
        v = as_tensor(v)
        if v.data.ndim != 2 or v.shape[1] != 2:
            raise ShapeMismatchError("embed", v.shape, ("pedestrians", 2))
        out.append(add(matmul(v, params.weight), params.bias))
    return out


def _batch(embeds: Sequence[Tensor]) -> int:
    if not embeds:
        raise ValueError("Cannot encode an empty sequence")
    return embeds[0].shape[0]


def _unroll(cell: CellParams, embeds: Sequence[Tensor]) -> CellState:
    if embeds[0].shape[1] != cell.input_dim:
        raise ShapeMismatchError("encoder input", embeds[0].shape, (embeds[0].shape[0], cell.input_dim))
    state = zero_state(cell.kind, _batch(embeds), cell.hidden_dim)
    for e in embeds:
        state = cell_step(cell.kind, cell, state, e)
    return state


def encode_plain(embeds: Sequence[Tensor], cell: CellParams) -> Encoding:
    state = _unroll(cell, embeds)
    return Encoding(h=state.h, c=state.c, variant=EncoderVariant.PLAIN)


def encode_bi(embeds: Sequence[Tensor], fwd_cell: CellParams, bwd_cell: CellParams) -> Encoding:
    if fwd_cell.hidden_dim != bwd_cell.hidden_dim:
        raise ShapeMismatchError("encode_bi hidden dims", (fwd_cell.hidden_dim,), (bwd_cell.hidden_dim,))
    forward = _unroll(fwd_cell, embeds)
    backward = _unroll(bwd_cell, list(reversed(embeds)))
    state = concat_states(forward, backward)
    return Encoding(h=state.h, c=state.c, variant=EncoderVariant.BI)


def encode_u(embeds: Sequence[Tensor], bwd_cell: CellParams, fwd_cell: CellParams,
             variant: EncoderVariant = EncoderVariant.U) -> Encoding:
    hidden = bwd_cell.hidden_dim
    e_dim = embeds[0].shape[1] if embeds else 0
    if bwd_cell.input_dim != e_dim:
        raise ShapeMismatchError("encode_u backward input", (bwd_cell.input_dim,), (e_dim,))
    if fwd_cell.input_dim != e_dim + hidden:
        raise ShapeMismatchError("encode_u forward input", (fwd_cell.input_dim,), (e_dim + hidden,))
    if fwd_cell.hidden_dim != hidden:
        raise ShapeMismatchError("encode_u hidden dims", (fwd_cell.hidden_dim,), (hidden,))

    steps = len(embeds)
    batch = _batch(embeds)
    # future[t] holds h^b_t for t = 1..steps (index 0 unused)
    future: List[Optional[Tensor]] = [None] * (steps + 1)
    state = zero_state(bwd_cell.kind, batch, hidden)
    future[steps] = state.h
    for t in range(steps, 1, -1):
        state = cell_step(bwd_cell.kind, bwd_cell, state, embeds[t - 1])
        future[t - 1] = state.h

    state = zero_state(fwd_cell.kind, batch, hidden)
    for t in range(1, steps + 1):
        state = cell_step(fwd_cell.kind, fwd_cell, state, concat([embeds[t - 1], future[t]]))
    return Encoding(h=state.h, c=state.c, variant=variant)


def encode_reversed_u(embeds: Sequence[Tensor], bwd_cell: CellParams, fwd_cell: CellParams) -> Encoding:
    return encode_u(list(reversed(embeds)), bwd_cell, fwd_cell, variant=EncoderVariant.REVERSED_U)


def encoding_dim(variant: EncoderVariant, hidden_dim: int) -> int:
    return 2 * hidden_dim if variant is EncoderVariant.BI else hidden_dim


def init_encoder(variant: EncoderVariant, kind: CellKind, e_dim: int, hidden_dim: int,
                 rng: np.random.Generator, requires_grad: bool = True) -> EncoderParams:
    params = EncoderParams(variant, kind, hidden_dim)
    if variant is EncoderVariant.PLAIN:
        params.cells["fwd"] = init_params(kind, e_dim, hidden_dim, rng, requires_grad)
    elif variant is EncoderVariant.BI:
        params.cells["fwd"] = init_params(kind, e_dim, hidden_dim, rng, requires_grad)
        params.cells["bwd"] = init_params(kind, e_dim, hidden_dim, rng, requires_grad)
    elif variant in (EncoderVariant.U, EncoderVariant.REVERSED_U):
        params.cells["bwd"] = init_params(kind, e_dim, hidden_dim, rng, requires_grad)
        params.cells["fwd"] = init_params(kind, e_dim + hidden_dim, hidden_dim, rng, requires_grad)
    return params


def encode(params: EncoderParams, embeds: Sequence[Tensor]) -> Encoding:
    """Dispatch on the configured variant."""
    variant = params.variant
    if variant is EncoderVariant.NONE:
        state = zero_state(params.kind, _batch(embeds), params.hidden_dim)
        return Encoding(h=state.h, c=state.c, variant=variant)
    if variant is EncoderVariant.PLAIN:
        return encode_plain(embeds, params.cells["fwd"])
    if variant is EncoderVariant.BI:
        return encode_bi(embeds, params.cells["fwd"], params.cells["bwd"])
    if variant is EncoderVariant.U:
        return encode_u(embeds, params.cells["bwd"], params.cells["fwd"])
    return encode_reversed_u(embeds, params.cells["bwd"], params.cells["fwd"])
