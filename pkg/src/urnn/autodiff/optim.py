from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from urnn.autodiff.tensor import Tensor
from urnn.exceptions import MissingGradientError, ShapeMismatchError


@dataclass
class OptimizerState:
    """Adam moments and hyper-parameters.

    Moment buffers are created lazily on the first step, aligned with the
    order of the parameter list passed to :func:`adam_step`.
    """
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)


def adam_step(state: OptimizerState, params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]]):
    """Apply one bias-corrected Adam update in place. Gradients are left untouched."""
    if len(grads) != len(params):
        raise MissingGradientError(f"Got {len(grads)} gradients for {len(params)} parameters")
    for param, grad in zip(params, grads):
        if grad is None:
            raise MissingGradientError(f"No gradient for parameter {param.name or param!r}")
        if grad.shape != param.shape:
            raise ShapeMismatchError(f"adam_step({param.name})", param.shape, grad.shape)

    if not state.first_moments:
        state.first_moments = [np.zeros_like(p.data) for p in params]
        state.second_moments = [np.zeros_like(p.data) for p in params]
    elif len(state.first_moments) != len(params):
        raise ShapeMismatchError("adam_step (moment buffers)", (len(state.first_moments),), (len(params),))

    state.step += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for i, (param, grad) in enumerate(zip(params, grads)):
        m = state.first_moments[i]
        v = state.second_moments[i]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.data.dtype)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale ``.grad`` of ``params`` so that their global L2 norm is at most ``max_norm``.

    Returns the factor that was applied (1.0 when already within bound).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    with_grad = [p for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in with_grad)))
    if total <= max_norm:
        return 1.0
    factor = max_norm / total
    for p in with_grad:
        p.grad = p.grad * factor
    return factor


class Adam:
    """Stateful wrapper binding an :class:`OptimizerState` to a parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params: List[Tensor] = list(params)
        self.state = OptimizerState(lr=lr, betas=betas, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = value

    def step(self):
        adam_step(self.state, self.params, [p.grad for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
