"""Small reverse-mode autodiff over float64 numpy arrays.

Operations are recorded on the active :class:`Tape` (define-by-run). Outside a
tape nothing is recorded, which is what inference and validation rely on.

    >>> w = Parameter(np.array([1.0, 2.0]), "w")
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    ...     tape.backward(loss, [w])
    >>> w.grad
    array([2., 4.])
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_state = threading.local()


class ShapeError(ValueError):
    pass


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array that can take part in gradient recording."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; every method routes through a primitive below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(other, self)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / float(other))
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A named leaf tensor that owns a gradient buffer."""

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


@dataclass
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    outputs: tuple[Tensor, ...]
    backward: Callable[..., Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of primitive applications.

    Recording order is a valid topological order, so walking ``nodes`` in
    reverse is enough for backpropagation.
    """

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def gradients(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Backpropagate from a scalar ``loss``; returns grads keyed by ``id``."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            out_grads = [grads.get(id(o)) for o in node.outputs]
            if all(g is None for g in out_grads):
                continue
            out_grads = [
                np.zeros_like(o.data) if g is None else g
                for o, g in zip(node.outputs, out_grads)
            ]
            in_grads = node.backward(*out_grads)
            for t, g in zip(node.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        return grads

    def backward(self, loss: Tensor, params: Sequence[Parameter]) -> None:
        """Fill ``p.grad`` for every parameter; unreachable ones get zeros."""
        grads = self.gradients(loss)
        for p in params:
            g = grads.get(id(p))
            p.grad = np.zeros_like(p.data) if g is None else np.array(g)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(kind, inputs, outputs, backward) -> None:
    tape = _active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return
    for o in outputs:
        o.requires_grad = True
    tape.record(Node(kind, tuple(inputs), tuple(outputs), backward))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    out = Tensor(a.data + b.data)
    _record("add", (a, b), (out,),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    out = Tensor(a.data - b.data)
    _record("sub", (a, b), (out,),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    out = Tensor(a.data * b.data)
    _record("mul", (a, b), (out,),
            lambda g: (_unbroadcast(g * b.data, a.shape),
                       _unbroadcast(g * a.data, b.shape)))
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = Tensor(a.data / b.data)
    _record("div", (a, b), (out,),
            lambda g: (_unbroadcast(g / b.data, a.shape),
                       _unbroadcast(-g * a.data / b.data**2, b.shape)))
    return out


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * c)
    _record("scale", (a,), (out,), lambda g: (g * c,))
    return out


def square(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * a.data)
    _record("square", (a,), (out,), lambda g: (2.0 * g * a.data,))
    return out


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    root = np.sqrt(a.data)
    out = Tensor(root)
    _record("sqrt", (a,), (out,), lambda g: (0.5 * g / root,))
    return out


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    keep = a.data >= floor
    out = Tensor(np.where(keep, a.data, floor))
    _record("clamp_min", (a,), (out,), lambda g: (g * keep,))
    return out


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    out = Tensor(a.data * factor)
    _record("leaky_relu", (a,), (out,), lambda g: (g * factor,))
    return out


# ---------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a, b) -> Tensor:
    """``a @ b`` over the trailing two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            # fold leading axes instead of materializing per-batch products
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    _record("matmul", (a, b), (out,), backward)
    return out


def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    _record("sum", (a,), (out,),
            lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)),))
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    _record("mean", (a,), (out,),
            lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,))
    return out


def var(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Population variance (ddof=0) along one axis."""
    a = as_tensor(a)
    centered = a.data - a.data.mean(axis=axis, keepdims=True)
    count = a.shape[axis]
    out = Tensor((centered**2).mean(axis=axis, keepdims=keepdims))
    _record("var", (a,), (out,),
            lambda g: (2.0 * centered * _expand_reduced(g, a.shape, axis, keepdims) / count,))
    return out


# ---------------------------------------------------------------------------
# structural


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {tuple(shape)}") from None
    out = Tensor(np.array(data))
    _record("broadcast", (a,), (out,), lambda g: (_unbroadcast(g, a.shape),))
    return out


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.array(a.data[index]))

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    _record("slice", (a,), (out,), backward)
    return out


def take(a, indices, axis: int = -1) -> Tensor:
    """Gather along ``axis`` with an integer index array (repeats allowed)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = Tensor(np.take(a.data, indices, axis=axis))

    def backward(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    _record("take", (a,), (out,), backward)
    return out


def concatenate(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concatenate: incompatible shapes {shapes} on axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    _record("concatenate", tensors, (out,),
            lambda g: tuple(np.split(g, splits, axis=axis)))
    return out


def transpose(a) -> Tensor:
    """Swap the trailing two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose: needs at least 2 axes, got shape {a.shape}")
    out = Tensor(np.swapaxes(a.data, -1, -2).copy())
    _record("transpose", (a,), (out,), lambda g: (np.swapaxes(g, -1, -2),))
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    _record("reshape", (a,), (out,), lambda g: (g.reshape(a.shape),))
    return out


def custom(kind: str, inputs: Sequence[Tensor], outputs: Sequence[np.ndarray],
           backward: Callable[..., Sequence[np.ndarray | None]]) -> tuple[Tensor, ...]:
    """Register a multi-output primitive whose vector-Jacobian product is given."""
    outs = tuple(Tensor(o) for o in outputs)
    _record(kind, tuple(inputs), outs, backward)
    return outs


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float
    max_abs_error: float

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def _compare(analytic, numeric, atol) -> GradCheckReport:
    diff = np.abs(analytic - numeric)
    scale_ = np.maximum(np.abs(analytic), np.abs(numeric))
    # disagreement below atol is finite-difference roundoff, not a gradient bug
    rel = np.where(diff <= atol, 0.0, diff / np.where(scale_ > 0, scale_, 1.0))
    return GradCheckReport(analytic, numeric,
                           float(rel.max(initial=0.0)), float(diff.max(initial=0.0)))


def _scalar(value: Tensor) -> float:
    v = float(np.asarray(value.data).reshape(-1)[0]) if value.data.size == 1 else None
    if v is None:
        raise ShapeError(f"grad_check: function must return a scalar, got {value.shape}")
    if not np.isfinite(v):
        raise FloatingPointError("grad_check: function value is not finite")
    return v


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
               atol: float = 1e-7) -> GradCheckReport:
    """Compare the tape gradient of scalar ``f`` at ``x`` with central differences.

    Entries whose absolute disagreement is within ``atol`` count as exact.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(as_tensor(x).data, dtype=np.float64)
    xt = Tensor(base.copy(), requires_grad=True)
    with Tape() as tape:
        value = f(xt)
        _scalar(value)
        grads = tape.gradients(value)
    analytic = grads.get(id(xt), np.zeros_like(base))

    numeric = np.zeros_like(base)
    probe = base.copy()
    for i in range(base.size):
        probe.flat[i] = base.flat[i] + eps
        up = _scalar(f(Tensor(probe)))
        probe.flat[i] = base.flat[i] - eps
        down = _scalar(f(Tensor(probe)))
        probe.flat[i] = base.flat[i]
        numeric.flat[i] = (up - down) / (2 * eps)
    return _compare(analytic, numeric, atol)


def grad_check_params(loss_fn: Callable[[], Tensor], params: Sequence[Parameter],
                      eps: float = 1e-5, atol: float = 1e-7) -> GradCheckReport:
    """Same check as :func:`grad_check`, looping over every parameter entry."""
    with Tape() as tape:
        value = loss_fn()
        _scalar(value)
        tape.backward(value, params)
    analytic = np.concatenate([p.grad.ravel() for p in params])

    numeric = []
    for p in params:
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _scalar(loss_fn())
            flat[i] = orig - eps
            down = _scalar(loss_fn())
            flat[i] = orig
            numeric.append((up - down) / (2 * eps))
    return _compare(analytic, np.array(numeric), atol)
