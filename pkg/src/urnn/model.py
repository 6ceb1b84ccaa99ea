"""Scene-level forecaster: velocity embedding, motion encoder, grid pooling and a recurrent decoder.

All pedestrians of a scene are encoded and decoded together. Coordinates are
rebased on the primary's last observed position before anything is computed,
so the network only ever sees velocities and relative positions.

Decoding step ``t`` for every pedestrian::

    I_t = pooling(positions_t, velocities_t, h_t)
    h_{t+1} = cell(h_t, [embed(velocity_t), I_t])
    o_t = h_{t+1} W_out + b_out
    velocity_{t+1} = o_t[:2]; position_{t+1} = position_t + velocity_{t+1}

The embedding is shared between encoder and decoder and the decoder starts
from the encoder's final state.
"""
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from urnn.autodiff import (Tensor, add, concat, exp, log, matmul, mul, neg, no_grad, scale, slice_last,
                           square, sub, tanh, tensor_sum)
from urnn.exceptions import NumericalError, ShapeMismatchError
from urnn.interfaces import PredictorInterface
from urnn.nn import (CellKind, CellParams, EmbeddingParams, EncoderParams, EncoderVariant, GridPooling, GridSpec,
                     PoolingKind, PoolingParams, cell_step, channels_for, embed, encode, encoding_dim,
                     init_embedding, init_encoder, init_params, init_pooling)
from urnn.nn.encoders import Encoding
from urnn.scenes.data import Scene

LOG_2PI = float(np.log(2 * np.pi))


class LossMode(Enum):
    """Training objective.

    Attributes
    ----------
    L2
        Mean squared Euclidean position error over pedestrians and steps.
    NLL
        Bivariate Gaussian negative log-likelihood; the output head emits
        ``(mu_x, mu_y, log sigma_x, log sigma_y, atanh rho)`` per step.
    """
    L2 = "l2"
    NLL = "nll"

    @classmethod
    def from_token(cls, token: str) -> "LossMode":
        aliases = {"gaussiannll": "nll", "gaussian_nll": "nll", "mse": "l2"}
        token = aliases.get(token.lower(), token.lower())
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"Unknown loss '{token}', expected one of {[m.value for m in cls]}")

    @property
    def output_dim(self) -> int:
        return 2 if self is LossMode.L2 else 5


_ENUM_FIELDS = {"cell": CellKind, "encoder": EncoderVariant, "pooling": PoolingKind, "loss": LossMode}


def _to_bool(value) -> bool:
    if isinstance(value, str):
        if value.strip().lower() in ("1", "true", "yes", "on"):
            return True
        if value.strip().lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"Not a boolean: {value!r}")
    return bool(value)


@dataclass(frozen=True)
class ModelConfig:
    cell: CellKind = CellKind.LSTM
    encoder: EncoderVariant = EncoderVariant.U
    pooling: PoolingKind = PoolingKind.DIRECTIONAL
    e_dim: int = 32
    hidden_dim: int = 128
    pool_dim: int = 256
    grid: GridSpec = GridSpec()
    loss: LossMode = LossMode.L2
    obs_len: int = 9
    pred_len: int = 12

    def __post_init__(self):
        for name, kind in _ENUM_FIELDS.items():
            value = getattr(self, name)
            if not isinstance(value, kind):
                object.__setattr__(self, name, kind.from_token(str(value)))
        if self.obs_len < 2:
            raise ValueError(f"obs_len must be >= 2 (at least one velocity), got {self.obs_len}")
        if self.pred_len < 1:
            raise ValueError(f"pred_len must be >= 1, got {self.pred_len}")
        if min(self.e_dim, self.hidden_dim, self.pool_dim) <= 0:
            raise ValueError(f"Dimensions must be positive, got {self.e_dim = } {self.hidden_dim = } {self.pool_dim = }")
        # the payload width follows the pooling kind and decoder size
        object.__setattr__(self, "grid", replace(self.grid, channels=channels_for(self.pooling, self.decoder_dim)))

    @property
    def decoder_dim(self) -> int:
        return encoding_dim(self.encoder, self.hidden_dim)

    @property
    def decoder_input_dim(self) -> int:
        return self.e_dim + (0 if self.pooling is PoolingKind.NONE else self.pool_dim)

    def to_dict(self) -> Dict[str, Union[str, int, float, bool]]:
        """Flat canonical mapping; grid fields are prefixed with ``grid.``."""
        out: Dict[str, Union[str, int, float, bool]] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "grid":
                for g in fields(GridSpec):
                    out[f"grid.{g.name}"] = getattr(value, g.name)
            elif isinstance(value, Enum):
                out[f.name] = value.value
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "ModelConfig":
        """Inverse of :meth:`to_dict`; accepts strings for every value. Unknown keys raise."""
        top = {f.name: f for f in fields(cls)}
        grid_fields = {g.name: g for g in fields(GridSpec)}
        kwargs, grid_kwargs = {}, {}
        for key, raw in values.items():
            if key.startswith("grid."):
                name = key[len("grid."):]
                if name not in grid_fields:
                    raise ValueError(f"Unknown grid key '{key}'")
                default = getattr(GridSpec(), name)
                grid_kwargs[name] = _to_bool(raw) if isinstance(default, bool) else type(default)(raw)
            elif key in _ENUM_FIELDS:
                kwargs[key] = _ENUM_FIELDS[key].from_token(str(raw))
            elif key in top and key != "grid":
                kwargs[key] = int(raw)
            else:
                raise ValueError(f"Unknown model config key '{key}'")
        if grid_kwargs:
            kwargs["grid"] = GridSpec(**grid_kwargs)
        return cls(**kwargs)


@dataclass
class Rollout:
    """Decoder outputs, relative to ``anchor``; one ``(pedestrians, .)`` tensor per step."""
    anchor: np.ndarray
    encoding: Encoding
    positions: List[Tensor]
    outputs: List[Tensor]

    def absolute(self) -> np.ndarray:
        """``(pedestrians, steps, 2)`` world positions."""
        return np.stack([p.data for p in self.positions], axis=1) + self.anchor


def _check_finite(name: str, values: np.ndarray, mask: Optional[np.ndarray] = None):
    values = values if mask is None else values[mask]
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"Non-finite values in {name}")


def _prepare(predicted: Tensor, truth, mask, width: int) -> Tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=predicted.data.dtype).reshape(-1, 2)
    if predicted.data.ndim != 2 or predicted.shape != (truth.shape[0], width):
        raise ShapeMismatchError("loss", predicted.shape, (truth.shape[0], width))
    mask = np.ones(len(truth), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape != (len(truth),):
        raise ShapeMismatchError("loss mask", mask.shape, (len(truth),))
    _check_finite("predictions", predicted.data)
    _check_finite("ground truth", truth, mask)
    if not mask.any():
        raise ValueError("Loss over an empty mask")
    return np.where(mask[:, None], truth, 0.0), mask.astype(predicted.data.dtype)


def l2_loss(predicted: Tensor, truth, mask=None) -> Tensor:
    """Masked mean over points of the squared Euclidean error."""
    truth, weights = _prepare(predicted, truth, mask, 2)
    errors = square(sub(predicted, Tensor(truth)))
    return scale(tensor_sum(mul(errors, Tensor(np.repeat(weights[:, None], 2, axis=1)))), 1.0 / weights.sum())


def gaussian_nll(predicted: Tensor, truth, mask=None) -> Tensor:
    """Masked mean bivariate Gaussian NLL; ``predicted`` columns are ``(mu_x, mu_y, log s_x, log s_y, raw rho)``."""
    truth, weights = _prepare(predicted, truth, mask, 5)
    dx = sub(slice_last(predicted, 0, 1), Tensor(truth[:, :1]))
    dy = sub(slice_last(predicted, 1, 2), Tensor(truth[:, 1:]))
    sx, sy = slice_last(predicted, 2, 3), slice_last(predicted, 3, 4)
    rho = tanh(slice_last(predicted, 4, 5))
    log_one_minus = log(sub(Tensor(np.ones(rho.shape)), square(rho)))
    nx, ny = mul(dx, exp(neg(sx))), mul(dy, exp(neg(sy)))
    z = sub(add(square(nx), square(ny)), scale(mul(rho, mul(nx, ny)), 2.0))
    point = add(add(add(sx, sy), scale(log_one_minus, 0.5)), scale(mul(z, exp(neg(log_one_minus))), 0.5))
    point = add(point, Tensor(LOG_2PI))
    return scale(tensor_sum(mul(point, Tensor(weights[:, None]))), 1.0 / weights.sum())


def loss(predicted: Tensor, ground_truth, mode: LossMode = LossMode.L2, mask=None) -> Tensor:
    """Scalar training loss over ``(points, 2)`` (L2) or ``(points, 5)`` (NLL) predictions.

    NaN in the predictions, or in the ground truth outside ``mask``, raises
    :class:`NumericalError`.
    """
    if mode is LossMode.L2:
        if predicted.data.ndim == 2 and predicted.shape[1] == 5:
            predicted = slice_last(predicted, 0, 2)
        return l2_loss(predicted, ground_truth, mask)
    return gaussian_nll(predicted, ground_truth, mask)


class ForecastModel(PredictorInterface):
    """Parameters of every component plus the :class:`ModelConfig` that fixes their shapes."""

    def __init__(self, config: ModelConfig, embedding: EmbeddingParams, encoder: EncoderParams,
                 pooling: Optional[PoolingParams], decoder: CellParams, output_weight: Tensor, output_bias: Tensor):
        self.config = config
        self.embedding = embedding
        self.encoder = encoder
        self.pooling_params = pooling
        self.decoder = decoder
        self.output_weight = output_weight
        self.output_bias = output_bias
        self.pooling = GridPooling(config.pooling, config.grid, pooling, config.pool_dim)
        for name, tensor in self.parameters().items():
            tensor.name = name

    @classmethod
    def create(cls, config: Optional[ModelConfig] = None,
               seed: Union[int, np.random.Generator, None] = 0) -> "ForecastModel":
        """Fresh model; draws embedding, encoder, pooling, decoder, output in that order."""
        config = config or ModelConfig()
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        embedding = init_embedding(config.e_dim, rng)
        encoder = init_encoder(config.encoder, config.cell, config.e_dim, config.hidden_dim, rng)
        pooling = None
        if config.pooling is not PoolingKind.NONE:
            pooling = init_pooling(config.grid.flat_dim, config.pool_dim, rng)
        decoder = init_params(config.cell, config.decoder_input_dim, config.decoder_dim, rng)
        bound = 1.0 / np.sqrt(config.decoder_dim)
        out_dim = config.loss.output_dim
        output_weight = Tensor(rng.uniform(-bound, bound, size=(config.decoder_dim, out_dim)), requires_grad=True)
        output_bias = Tensor(rng.uniform(-bound, bound, size=(out_dim,)), requires_grad=True)
        return cls(config, embedding, encoder, pooling, decoder, output_weight, output_bias)

    @property
    def name(self) -> str:
        cell = self.config.cell.value.upper()
        variant = self.config.encoder
        if variant is EncoderVariant.NONE:
            return f"None - {cell}"
        return f"{variant.label}{cell} - {cell}"

    @property
    def interaction(self) -> str:
        return self.config.pooling.label

    def parameters(self) -> Dict[str, Tensor]:
        """Every trainable tensor under its canonical name, in a fixed order."""
        params = {"embedding.weight": self.embedding.weight, "embedding.bias": self.embedding.bias}
        for role, cell in self.encoder.cells.items():
            for key, tensor in cell.tensors().items():
                params[f"encoder.{role}.{key}"] = tensor
        if self.pooling_params is not None:
            params["pooling.weight"] = self.pooling_params.weight
            params["pooling.bias"] = self.pooling_params.bias
        for key, tensor in self.decoder.tensors().items():
            params[f"decoder.{key}"] = tensor
        params["output.weight"] = self.output_weight
        params["output.bias"] = self.output_bias
        return params

    @property
    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.parameters().values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.parameters().items()}

    def load_state_dict(self, values: Dict[str, np.ndarray]):
        params = self.parameters()
        if set(values) != set(params):
            missing, extra = sorted(set(params) - set(values)), sorted(set(values) - set(params))
            raise ValueError(f"Parameter names differ, {missing = } {extra = }")
        for name, tensor in params.items():
            value = np.asarray(values[name], dtype=tensor.data.dtype)
            if value.shape != tensor.shape:
                raise ShapeMismatchError(name, value.shape, tensor.shape)
            tensor.data[...] = value

    def _embed(self, velocity: Tensor) -> Tensor:
        return embed([velocity], self.embedding)[0]

    def rollout(self, observed: np.ndarray, pred_len: Optional[int] = None) -> Rollout:
        """Decode ``pred_len`` steps from ``(pedestrians, obs_len, 2)`` observations; row 0 anchors."""
        config = self.config
        pred_len = pred_len or config.pred_len
        observed = np.asarray(observed, dtype=float)
        if observed.ndim != 3 or observed.shape[1] < 2 or observed.shape[2] != 2:
            raise ShapeMismatchError("rollout observations", observed.shape, ("pedestrians", ">=2", 2))
        _check_finite("observations", observed)
        anchor = observed[0, -1].copy()
        relative = observed - anchor
        velocities = [Tensor(relative[:, t + 1] - relative[:, t]) for t in range(relative.shape[1] - 1)]

        encoding = encode(self.encoder, embed(velocities, self.embedding))
        state = encoding.as_state()
        position = Tensor(relative[:, -1])
        velocity = velocities[-1]
        positions, outputs = [], []
        for _ in range(pred_len):
            x = self._embed(velocity)
            if config.pooling is not PoolingKind.NONE:
                x = concat([x, self.pooling(position.data, velocity, state.h)])
            state = cell_step(config.cell, self.decoder, state, x)
            out = add(matmul(state.h, self.output_weight), self.output_bias)
            velocity = slice_last(out, 0, 2)
            position = add(position, velocity)
            positions.append(position)
            outputs.append(out)
        return Rollout(anchor, encoding, positions, outputs)

    def forward_scene(self, scene: Scene) -> Dict[int, np.ndarray]:
        """World-frame predictions for every pedestrian present at the last observed frame."""
        return self.predict_scene(scene, self.config.obs_len, self.config.pred_len)

    def predict_scene(self, scene: Scene, obs_len: int, pred_len: int) -> Dict[int, np.ndarray]:
        arrays = scene.arrays(obs_len, pred_len)
        with no_grad():
            predicted = self.rollout(arrays.observed, pred_len).absolute()
        return dict(zip(arrays.pedestrian_ids, predicted))

    def scene_loss(self, scene: Scene) -> Tensor:
        """Loss of one scene over every pedestrian and step; unobserved future points are masked."""
        config = self.config
        arrays = scene.arrays(config.obs_len, config.pred_len)
        rollout = self.rollout(arrays.observed, config.pred_len)
        # (steps, pedestrians, 2) flattened step-major, matching the concatenation below
        truth = np.transpose(arrays.future, (1, 0, 2)) - rollout.anchor
        mask = np.all(np.isfinite(truth), axis=-1).reshape(-1)
        predicted = concat(rollout.positions, axis=0)
        if config.loss is LossMode.NLL:
            heads = [concat([p, slice_last(o, 2, 5)]) for p, o in zip(rollout.positions, rollout.outputs)]
            predicted = concat(heads, axis=0)
        return loss(predicted, truth.reshape(-1, 2), config.loss, mask)
