"""Dense tensors with tape-based reverse-mode differentiation.

Every operation in this module returns a new :class:`Tensor` that remembers
its parents and a closure mapping the output gradient to one gradient per
parent. :class:`Graph` orders the recorded nodes so that a reverse walk visits
each node once, after all of its consumers.

Gradients are propagated into a private dictionary first. :func:`backward`
then accumulates them into ``.grad`` of the leaves, while :func:`gradients`
hands them back without touching any tensor, which is what lets several
threads differentiate distinct scenes against the same parameters.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from urnn.exceptions import ShapeMismatchError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_DTYPES = {"float64": np.float64, "float32": np.float32}
_default_dtype = np.float64
_state = threading.local()


def set_default_dtype(name: str):
    """Select the precision of newly created tensors (``float64`` or ``float32``)."""
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"Unsupported precision '{name}', expected one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


def get_default_dtype():
    return _default_dtype


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread."""
    previous = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """A dense real-valued array that can take part in differentiation.

    Parameters
    ----------
    data : array-like
        Values. Copied into a contiguous array of the default dtype unless it
        already is one.
    requires_grad : bool, default ``False``
        Leaves with ``requires_grad`` receive a ``grad`` buffer on
        :func:`backward`.
    name : str, optional
        Canonical name, used for parameters.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 name: Optional[str] = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.asarray(data, dtype=dtype or _default_dtype)
        self.data: np.ndarray = np.ascontiguousarray(array)
        self.requires_grad: bool = requires_grad
        self.name: Optional[str] = name
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op: str = "leaf"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    out.op = op
    if _grad_enabled() and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


class Graph:
    """Operations reachable from a root, in execution (topological) order."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes: List[Tensor] = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def reverse(self) -> Iterator[Tensor]:
        return reversed(self.nodes)


def _propagate(root: Tensor) -> Dict[int, Tuple[Tensor, np.ndarray]]:
    graph = Graph.from_root(root)
    pending: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    leaves: Dict[int, Tuple[Tensor, np.ndarray]] = {}
    for node in graph.reverse():
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            leaves[id(node)] = (node, grad)
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
    return leaves


def _check_scalar(root: Tensor):
    if root.size != 1:
        raise ShapeMismatchError("backward (root must be scalar)", root.shape, ())


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    _check_scalar(root)
    if not root.requires_grad:
        return
    for leaf, grad in _propagate(root).values():
        leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad


def gradients(root: Tensor, wrt: Sequence[Tensor]) -> List[np.ndarray]:
    """Return d(root)/d(t) for each ``t`` in ``wrt`` without touching ``.grad``."""
    _check_scalar(root)
    found = _propagate(root) if root.requires_grad else {}
    return [found[id(t)][1] if id(t) in found else np.zeros_like(t.data) for t in wrt]


def _unbroadcast_bias(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if not shape:
        return np.asarray(grad.sum(), dtype=grad.dtype)
    return grad.reshape(-1, shape[-1]).sum(axis=0)


def _binary_shapes(op: str, a: Tensor, b: Tensor):
    if a.shape == b.shape or a.data.ndim == 0 or b.data.ndim == 0:
        return
    # row-vector bias against a batch, the only broadcast the models need
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1:] == b.shape:
        return
    if a.data.ndim == 1 and b.data.ndim >= 1 and b.shape[-1:] == a.shape:
        return
    raise ShapeMismatchError(op, a.shape, b.shape)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("add", a, b)

    def _backward(grad):
        return _unbroadcast_bias(grad, a.shape), _unbroadcast_bias(grad, b.shape)

    return _record(a.data + b.data, (a, b), _backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("sub", a, b)

    def _backward(grad):
        return _unbroadcast_bias(grad, a.shape), -_unbroadcast_bias(grad, b.shape)

    return _record(a.data - b.data, (a, b), _backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    if isinstance(b, (int, float)) and not isinstance(a, (int, float)):
        return scale(as_tensor(a), float(b))
    if isinstance(a, (int, float)):
        return scale(as_tensor(b), float(a))
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("mul", a, b)

    def _backward(grad):
        return _unbroadcast_bias(grad * b.data, a.shape), _unbroadcast_bias(grad * a.data, b.shape)

    return _record(a.data * b.data, (a, b), _backward, "mul")


def scale(a: Tensor, factor: float) -> Tensor:
    def _backward(grad):
        return (grad * factor,)

    return _record(a.data * factor, (a,), _backward, "scale")


def neg(a: ArrayLike) -> Tensor:
    return scale(as_tensor(a), -1.0)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def _backward(grad):
        grad_a = grad @ b.data.T if a.requires_grad else None
        grad_b = a.data.T @ grad if b.requires_grad else None
        return grad_a, grad_b

    return _record(a.data @ b.data, (a, b), _backward, "matmul")


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def _backward(grad):
        return (grad * (1.0 - y * y),)

    return _record(y, (a,), _backward, "tanh")


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def _backward(grad):
        return (grad * y * (1.0 - y),)

    return _record(y, (a,), _backward, "sigmoid")


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0

    def _backward(grad):
        return (grad * positive,)

    return _record(np.where(positive, a.data, 0.0).astype(a.data.dtype), (a,), _backward, "relu")


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)

    def _backward(grad):
        return (grad * y,)

    return _record(y, (a,), _backward, "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def _backward(grad):
        return (grad / a.data,)

    return _record(np.log(a.data), (a,), _backward, "log")


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def _backward(grad):
        return (2.0 * grad * a.data,)

    return _record(a.data * a.data, (a,), _backward, "square")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "log": log,
    "square": square,
}


def elementwise(op: str, *inputs: ArrayLike) -> Tensor:
    """Apply a named pointwise operation (``add``, ``mul``, ``tanh``, ``sigmoid``, ``relu``...)."""
    if op not in _ELEMENTWISE:
        raise ValueError(f"Unknown elementwise op '{op}'")
    return _ELEMENTWISE[op](*inputs)


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ndim = tensors[0].data.ndim
    axis = axis % ndim
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.data.ndim != ndim or any(t.shape[i] != reference[i] for i in range(ndim) if i != axis):
            raise ShapeMismatchError("concat", reference, t.shape)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward(grad):
        return tuple(np.take(grad, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, _backward, "concat")


def slice_last(a: ArrayLike, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of the last axis."""
    a = as_tensor(a)
    if not 0 <= start < stop <= a.shape[-1]:
        raise ShapeMismatchError(f"slice[{start}:{stop}]", a.shape)

    def _backward(grad):
        full = np.zeros_like(a.data)
        full[..., start:stop] = grad
        return (full,)

    return _record(a.data[..., start:stop], (a,), _backward, "slice")


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        y = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, shape)

    def _backward(grad):
        return (grad.reshape(a.shape),)

    return _record(y, (a,), _backward, "reshape")


def tensor_sum(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def _backward(grad):
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _record(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), _backward, "sum")


def mean(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return scale(tensor_sum(a), 1.0 / a.size)


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_default_dtype))


def parameters_size(params: Iterable[Tensor]) -> int:
    return int(sum(p.size for p in params))
