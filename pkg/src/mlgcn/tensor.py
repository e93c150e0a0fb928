"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations are define-by-run: while a :class:`Tape` is active, every
operation whose operands require gradients appends a node to it, and
:func:`backward` walks the nodes in reverse.  Tensors never change after
construction; gradients are returned in a mapping instead of being stored
on the tensors.

    >>> x = Tensor(3.0, requires_grad=True)
    >>> with Tape() as tape:
    ...     y = x * x
    >>> float(backward(y, tape)[x])
    6.0
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, NonFiniteError, UsageError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "as_tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "transpose",
    "reshape",
    "tensor_sum",
    "leaky_relu",
    "sigmoid",
    "global_max_pool",
    "bce_with_logits",
]

_TINY = np.nextafter(0.0, 1.0)
_BELOW_ONE = np.nextafter(1.0, 0.0)

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))
        first = tuple(int(i) for i in bad[0]) if arr.ndim else ()
        raise NonFiniteError(
            f"{where}: non-finite value {arr[first] if arr.ndim else arr!r} at index {first} "
            f"({len(bad)} of {arr.size} entries)"
        )


class Tensor:
    """Immutable dense array of 64-bit reals, optionally tracked for gradients."""

    __slots__ = ("_data", "requires_grad", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if any(d < 1 for d in arr.shape):
            raise DimensionError(f"tensor dimensions must be positive, got shape {arr.shape}")
        _check_finite(arr, "Tensor")
        arr.setflags(write=False)
        self._data = arr
        self.requires_grad = bool(requires_grad)
        self._tape = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.setflags(write=False)
        out._data = arr
        out.requires_grad = requires_grad
        out._tape = None
        return out

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the values."""
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self._data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self._data, precision=6)}, shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass(frozen=True)
class _Node:
    op: str
    inputs: tuple
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence]


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations executed inside the ``with`` block on
    tensors that require gradients are recorded in execution order, which is
    a valid topological order.  A tape supports a single backward pass.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise UsageError("tape already consumed by a backward pass")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise UsageError("tapes must be exited in the order they were entered")
        stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, node: _Node) -> None:
        if self.consumed:
            raise UsageError("cannot record on a consumed tape")
        node.output._tape = self
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> dict:
        return backward(loss, self)


def backward(loss: Tensor, tape: Tape | None = None) -> dict:
    """Gradients of a scalar ``loss`` w.r.t. every leaf tensor that requires them.

    Returns a dict keyed by the leaf tensors themselves (identity-hashed).
    Gradients accumulate additively where a tensor feeds several operations.
    """
    if loss._tape is None:
        raise UsageError("backward() on a tensor that was not produced through a tape")
    if tape is None:
        tape = loss._tape
    elif loss._tape is not tape:
        raise UsageError("loss was recorded on a different tape")
    if loss.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise UsageError("tape already consumed by a backward pass")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        for inp, g in zip(node.inputs, node.vjp(g_out)):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            if inp._tape is not tape:
                leaves[key] = inp

    out = {}
    for key, leaf in leaves.items():
        g = np.asarray(grads[key], dtype=np.float64).reshape(leaf.shape)
        _check_finite(g, "backward")
        out[leaf] = g
    return out


def _emit(op: str, inputs: tuple, value: np.ndarray, vjp) -> Tensor:
    _check_finite(value, op)
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(value, requires_grad=requires_grad)
    if requires_grad:
        stack = _tape_stack()
        if stack:
            stack[-1]._record(_Node(op, inputs, out, vjp))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an ``m x k`` and a ``k x n`` tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def vjp(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    with np.errstate(over="ignore", invalid="ignore"):
        value = A @ B
    return _emit("matmul", (a, b), value, vjp)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim == 0 and a.ndim:
        return _emit("add", (a, b), a.data + b.data, lambda g: (g, np.sum(g)))
    if a.ndim == 0 and b.ndim:
        return _emit("add", (a, b), a.data + b.data, lambda g: (np.sum(g), g))
    _same_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b) -> Tensor:
    return add(a, neg(as_tensor(b)))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", (a,), -a.data, lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Elementwise product; one operand may be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if a.ndim and b.ndim:
        _same_shape("mul", a, b)
        return _emit("mul", (a, b), A * B, lambda g: (g * B, g * A))
    if b.ndim == 0:
        return _emit("mul", (a, b), A * B, lambda g: (g * B, np.sum(g * A)))
    return _emit("mul", (a, b), A * B, lambda g: (np.sum(g * B), g * A))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _emit("transpose", (a,), a.data.T, lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"reshape: cannot view shape {a.shape} as {shape}")
    src = a.shape
    return _emit("reshape", (a,), a.data.reshape(shape), lambda g: (g.reshape(src),))


def tensor_sum(a: Tensor) -> Tensor:
    src = a.shape
    return _emit("sum", (a,), np.asarray(a.data.sum()), lambda g: (np.full(src, np.reshape(g, ())),))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """``max(x, slope * x)`` elementwise; the derivative is taken as ``slope`` at 0."""
    if not 0.0 <= slope < 1.0:
        raise ConfigurationError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    X = x.data
    factor = np.where(X > 0, 1.0, slope)
    return _emit("leaky_relu", (x,), X * factor, lambda g: (g * factor,))


def _stable_sigmoid(X: np.ndarray) -> np.ndarray:
    out = np.empty_like(X)
    pos = X >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-X[pos]))
    e = np.exp(X[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, clipped so the result stays strictly inside (0, 1)."""
    S = np.clip(_stable_sigmoid(np.asarray(x.data)), _TINY, _BELOW_ONE)
    return _emit("sigmoid", (x,), S, lambda g: (g * S * (1.0 - S),))


def global_max_pool(fmap: Tensor) -> Tensor:
    """Reduce a ``D x h x w`` feature map to its per-channel spatial maximum.

    The gradient flows to the first maximal cell in row-major order.
    """
    fmap = as_tensor(fmap)
    if fmap.ndim != 3:
        raise DimensionError(f"global_max_pool needs a D x h x w map, got shape {fmap.shape}")
    D = fmap.shape[0]
    flat = fmap.data.reshape(D, -1)
    idx = np.argmax(flat, axis=1)
    rows = np.arange(D)
    src = fmap.shape

    def vjp(g):
        out = np.zeros(flat.shape)
        out[rows, idx] = g
        return (out.reshape(src),)

    return _emit("global_max_pool", (fmap,), flat[rows, idx], vjp)


def bce_with_logits(scores: Tensor, targets) -> Tensor:
    """Binary cross-entropy on logits, summed over classes and averaged over rows.

    ``targets`` is a constant array of the same shape.  A 1-D ``scores`` counts
    as a single row.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != scores.shape:
        raise DimensionError(f"bce: scores {scores.shape} vs targets {y.shape}")
    s = scores.data
    batch = s.shape[0] if s.ndim == 2 else 1
    per = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
    value = np.asarray(per.sum() / batch)

    def vjp(g):
        return ((_stable_sigmoid(s) - y) * (np.reshape(g, ()) / batch),)

    return _emit("bce_with_logits", (scores,), value, vjp)
