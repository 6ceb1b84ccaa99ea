"""Grid-based interaction pooling.

A square grid of ``n_cells x n_cells`` cells of side ``cell_side`` meters is
centered on the ego pedestrian. Cells use half-open intervals ``[lo, hi)``.
Each neighbor inside the grid drops its payload into its cell and cells
holding several neighbors keep the mean payload. The flattened grid goes
through one linear embedding shared by all pedestrians and steps.

Payloads: ``1`` for occupancy, the neighbor velocity (relative to the ego by
default) for directional pooling, the neighbor decoder hidden state for social
pooling.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from urnn.autodiff import Tensor, add, as_tensor, matmul, mul, reshape, zeros
from urnn.exceptions import ShapeMismatchError


class PoolingKind(Enum):
    NONE = "none"
    OCCUPANCY = "occupancy"
    DIRECTIONAL = "directional"
    SOCIAL = "social"

    @classmethod
    def from_token(cls, token: str) -> "PoolingKind":
        aliases = {"occ": "occupancy", "dir": "directional", "soc": "social"}
        token = aliases.get(token.lower(), token.lower())
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"Unknown pooling '{token}', expected one of {[k.value for k in cls]}")

    @property
    def label(self) -> str:
        return {"none": "None", "occupancy": "Occ. pooling", "directional": "Dir. pooling",
                "social": "Soc. pooling"}[self.value]


@dataclass(frozen=True)
class GridSpec:
    n_cells: int = 12
    cell_side: float = 0.6
    channels: int = 1
    align_heading: bool = False
    relative_velocity: bool = True

    def __post_init__(self):
        if self.n_cells <= 0 or self.n_cells % 2:
            raise ValueError(f"n_cells must be an even positive integer, got {self.n_cells}")
        if self.cell_side <= 0:
            raise ValueError(f"cell_side must be positive, got {self.cell_side}")
        if self.channels <= 0:
            raise ValueError(f"channels must be positive, got {self.channels}")

    @property
    def n_total(self) -> int:
        return self.n_cells * self.n_cells

    @property
    def flat_dim(self) -> int:
        return self.n_total * self.channels


def channels_for(kind: PoolingKind, hidden_dim: int) -> int:
    if kind is PoolingKind.DIRECTIONAL:
        return 2
    if kind is PoolingKind.SOCIAL:
        return hidden_dim
    return 1


@dataclass
class PoolingParams:
    weight: Tensor
    bias: Tensor


def init_pooling(flat_dim: int, pool_dim: int, rng: np.random.Generator,
                 requires_grad: bool = True) -> PoolingParams:
    bound = 1.0 / np.sqrt(flat_dim)
    return PoolingParams(Tensor(rng.uniform(-bound, bound, size=(flat_dim, pool_dim)), requires_grad=requires_grad),
                         Tensor(rng.uniform(-bound, bound, size=(pool_dim,)), requires_grad=requires_grad))


def _rotation(heading: float) -> np.ndarray:
    c, s = np.cos(heading), np.sin(heading)
    # rotates world vectors by -heading, into the ego frame
    return np.array([[c, s], [-s, c]])


def cell_indices(offsets: np.ndarray, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Flat cell index of each relative offset and whether it falls inside the grid."""
    offsets = np.asarray(offsets, dtype=float).reshape(-1, 2)
    idx = np.floor(offsets / spec.cell_side + spec.n_cells / 2).astype(int)
    inside = np.all((idx >= 0) & (idx < spec.n_cells), axis=1)
    flat = idx[:, 0] * spec.n_cells + idx[:, 1]
    return np.where(inside, flat, -1), inside


def rasterize(ego_pos: Sequence[float], neighbors: List[Tuple[Sequence[float], Union[float, Sequence[float]]]],
              spec: GridSpec, heading: Optional[float] = None) -> np.ndarray:
    """Mean-pool neighbor payloads into an ego-centered ``(n, n, channels)`` grid."""
    grid = np.zeros((spec.n_total, spec.channels))
    counts = np.zeros(spec.n_total)
    if not neighbors:
        return grid.reshape(spec.n_cells, spec.n_cells, spec.channels)

    positions = np.array([np.asarray(pos, dtype=float) for pos, _ in neighbors])
    payloads = np.array([np.atleast_1d(np.asarray(payload, dtype=float)) for _, payload in neighbors])
    if payloads.shape[1] != spec.channels:
        raise ShapeMismatchError("rasterize payload", payloads.shape[1:], (spec.channels,))

    offsets = positions - np.asarray(ego_pos, dtype=float)
    if heading is not None:
        offsets = offsets @ _rotation(heading).T
    flat, inside = cell_indices(offsets, spec)
    np.add.at(grid, flat[inside], payloads[inside])
    np.add.at(counts, flat[inside], 1.0)
    occupied = counts > 0
    grid[occupied] /= counts[occupied, None]
    return grid.reshape(spec.n_cells, spec.n_cells, spec.channels)


def embed_grid(grid: Union[Tensor, np.ndarray], params: PoolingParams) -> Tensor:
    """Linear embedding of flattened grids; accepts one grid or a ``(batch, flat)`` stack."""
    grid = as_tensor(grid)
    if grid.data.ndim == 3:
        grid = reshape(grid, (1, grid.size))
    if grid.data.ndim != 2 or grid.shape[1] != params.weight.shape[0]:
        raise ShapeMismatchError("embed_grid", grid.shape, ("batch", params.weight.shape[0]))
    return add(matmul(grid, params.weight), params.bias)


def pool_none(batch: int, pool_dim: int) -> Tensor:
    return zeros(batch, pool_dim)


def headings_from(velocities: np.ndarray) -> np.ndarray:
    velocities = np.asarray(velocities, dtype=float)
    return np.arctan2(velocities[:, 1], velocities[:, 0])


class GridPooling:
    """Pools every pedestrian of a scene at once.

    For ``N`` pedestrians an ``(N * n * n, N)`` averaging matrix is built from
    the current positions; ego ``i`` never pools itself. Payload tensors are
    then pooled with a single matmul so gradients flow into velocities and
    hidden states.
    """

    def __init__(self, kind: PoolingKind, spec: GridSpec, params: Optional[PoolingParams], pool_dim: int):
        self.kind = kind
        self.spec = spec
        self.params = params
        self.pool_dim = pool_dim

    def averaging_matrix(self, positions: np.ndarray, headings: Optional[np.ndarray] = None) -> np.ndarray:
        spec = self.spec
        count = positions.shape[0]
        matrix = np.zeros((count * spec.n_total, count))
        for ego in range(count):
            others = [j for j in range(count) if j != ego]
            if not others:
                continue
            offsets = positions[others] - positions[ego]
            if headings is not None:
                offsets = offsets @ _rotation(headings[ego]).T
            flat, inside = cell_indices(offsets, spec)
            for j, cell, ok in zip(others, flat, inside):
                if ok:
                    matrix[ego * spec.n_total + cell, j] += 1.0
        totals = matrix.sum(axis=1, keepdims=True)
        np.divide(matrix, totals, out=matrix, where=totals > 0)
        return matrix

    def grids(self, positions: np.ndarray, velocities: Tensor, hidden: Optional[Tensor] = None) -> Tensor:
        """Flattened ``(N, n * n * channels)`` grids for every pedestrian."""
        spec = self.spec
        positions = np.asarray(positions, dtype=float)
        count = positions.shape[0]
        headings = headings_from(velocities.data) if spec.align_heading else None
        matrix = self.averaging_matrix(positions, headings)

        if self.kind is PoolingKind.OCCUPANCY:
            occupied = (matrix.sum(axis=1) > 0).astype(float)
            return Tensor(occupied.reshape(count, spec.n_total))

        if self.kind is PoolingKind.SOCIAL:
            if hidden is None:
                raise ValueError("Social pooling needs the decoder hidden states")
            pooled = matmul(Tensor(matrix), hidden)
            return reshape(pooled, (count, spec.n_total * hidden.shape[1]))

        if spec.relative_velocity:
            occupied = (matrix.sum(axis=1) > 0).astype(float)
            ego_rows = np.kron(np.eye(count), np.ones((spec.n_total, 1)))
            matrix = matrix - occupied[:, None] * ego_rows
        pooled = matmul(Tensor(matrix), velocities)
        if headings is not None:
            rows = np.repeat(headings, spec.n_total)
            cos, sin = np.cos(rows), np.sin(rows)
            x_part = mul(matmul(pooled, Tensor([[1.0, 1.0], [0.0, 0.0]])), Tensor(np.stack([cos, -sin], axis=1)))
            y_part = mul(matmul(pooled, Tensor([[0.0, 0.0], [1.0, 1.0]])), Tensor(np.stack([sin, cos], axis=1)))
            pooled = add(x_part, y_part)
        return reshape(pooled, (count, spec.n_total * 2))

    def __call__(self, positions: np.ndarray, velocities: Tensor, hidden: Optional[Tensor] = None) -> Tensor:
        count = np.asarray(positions).shape[0]
        if self.kind is PoolingKind.NONE:
            return pool_none(count, self.pool_dim)
        return embed_grid(self.grids(positions, velocities, hidden), self.params)
