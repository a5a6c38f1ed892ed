"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every differentiable operation below records a :class:`Node` on the output
tensor. :func:`backward` collects the nodes reachable from a scalar loss into
a :class:`Tape`, orders them by creation sequence, and replays their local
backward rules in reverse.

Broadcasting is deliberately limited to adding a trailing vector to every row
of a matrix (bias addition). Everything else requires equal shapes.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "Tensor",
    "Tape",
    "Node",
    "no_grad",
    "grad_enabled",
    "matmul",
    "transpose",
    "add",
    "sub",
    "hadamard",
    "scale",
    "add_scalar",
    "sigmoid",
    "tanh_act",
    "relu",
    "softmax_axis",
    "log_softmax_axis",
    "concat",
    "take",
    "pick",
    "tsum",
    "mean_axis",
    "reshape",
    "backward",
]

_sequence = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable recording on the current thread (inference, evaluation)."""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Node:
    """One recorded operation: inputs, output and the local backward rule."""

    __slots__ = ("inputs", "output", "rule", "seq")

    def __init__(self, inputs, output, rule, seq):
        self.inputs = inputs
        self.output = output
        self.rule = rule
        self.seq = seq


class Tensor:
    """A float64 array that can take part in gradient computation.

    Args:
        data: anything ``np.asarray`` accepts.
        requires_grad: when True the tensor owns a gradient buffer of the
            same shape and receives ``d loss / d self`` on :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "_grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if any(extent == 0 for extent in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._node = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t._grad = None
        t._node = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> np.ndarray | None:
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        if value is None:
            self._grad = None
            return
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {value.shape} does not match tensor shape {self.data.shape}"
            )
        self._grad = value.copy()

    def zero_grad(self) -> None:
        if self.requires_grad:
            self._grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64)
        else:
            self._grad += g

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: np.ndarray, inputs: tuple, rule: Callable) -> Tensor:
    """Wrap ``out`` and attach a node when any input wants gradients."""
    needs = grad_enabled() and any(t.requires_grad for t in inputs)
    t = Tensor._wrap(out, needs)
    if needs:
        t._node = Node(inputs, t, rule, next(_sequence))
    return t


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Vectors act as row (left) or column (right) operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data
    out = A @ B

    def rule(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 2:
            return np.outer(g, B), A.T @ g
        if B.ndim == 2:
            return B @ g, np.outer(A, g)
        return g * B, g * A

    return _record(np.asarray(out, dtype=np.float64), (a, b), rule)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _record(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}")
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------- elementwise


def _bias_layout(a: Tensor, b: Tensor) -> str:
    if a.shape == b.shape:
        return "same"
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return "rows_a"
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return "rows_b"
    raise DimensionError(f"incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a vector may be added to every row of a matrix."""
    a, b = _as_tensor(a), _as_tensor(b)
    layout = _bias_layout(a, b)

    def rule(g):
        if layout == "same":
            return g, g
        if layout == "rows_a":
            return g, g.sum(axis=0)
        return g.sum(axis=0), g

    return _record(a.data + b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    layout = _bias_layout(a, b)

    def rule(g):
        if layout == "same":
            return g, -g
        if layout == "rows_a":
            return g, -g.sum(axis=0)
        return g.sum(axis=0), -g

    return _record(a.data - b.data, (a, b), rule)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Element-by-element product of equal-shape tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"hadamard: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data
    return _record(A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _record(a.data + float(c), (a,), lambda g: (g,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _record(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def softmax_axis(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max subtraction."""
    axis = _check_axis(x, axis)
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (x,), rule)


def log_softmax_axis(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def rule(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _record(y, (x,), rule)


# ---------------------------------------------------------------- structure


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; the gradient is split back into the parts."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    first = parts[0]
    axis = _check_axis(first, axis)
    for p in parts[1:]:
        if p.ndim != first.ndim or any(
            p.shape[d] != first.shape[d] for d in range(first.ndim) if d != axis
        ):
            raise DimensionError(
                f"concat: shapes {[q.shape for q in parts]} disagree off axis {axis}"
            )
    if len(parts) == 1:
        return _record(first.data.copy(), (first,), lambda g: (g,))
    offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def rule(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _record(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), rule)


def take(table: Tensor, index) -> Tensor:
    """Row lookup: ``table[index]`` for an int or a sequence of ints."""
    if table.ndim != 2:
        raise DimensionError(f"take expects a matrix, got shape {table.shape}")
    idx = np.asarray(index, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(f"row index {index} out of range [0, {table.shape[0]})")
    rows = table.shape

    def rule(g):
        full = np.zeros(rows)
        np.add.at(full, idx, g)
        return (full,)

    return _record(table.data[idx], (table,), rule)


def pick(x: Tensor, index) -> Tensor:
    """``x[index]`` for a vector, or ``x[i, index[i]]`` for each row of a matrix."""
    if x.ndim == 1:
        i = int(index)
        if not 0 <= i < x.shape[0]:
            raise ContractError(f"index {i} out of range [0, {x.shape[0]})")
        n = x.shape[0]

        def rule(g):
            full = np.zeros(n)
            full[i] = g
            return (full,)

        return _record(np.array(x.data[i]), (x,), rule)
    if x.ndim != 2:
        raise DimensionError(f"pick expects a vector or matrix, got shape {x.shape}")
    cols = np.asarray(index, dtype=np.intp)
    if cols.shape != (x.shape[0],):
        raise DimensionError(f"pick needs one column per row, got {cols.shape} for {x.shape}")
    if cols.min() < 0 or cols.max() >= x.shape[1]:
        raise ContractError(f"column index out of range [0, {x.shape[1]})")
    rows = np.arange(x.shape[0])
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        full[rows, cols] = g
        return (full,)

    return _record(x.data[rows, cols], (x,), rule)


def tsum(x: Tensor) -> Tensor:
    shape = x.shape
    return _record(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean_axis(x: Tensor, axis: int = 0) -> Tensor:
    axis = _check_axis(x, axis)
    n = x.shape[axis]

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    return _record(x.data.mean(axis=axis), (x,), rule)


# ---------------------------------------------------------------- tape


class Tape:
    """The recorded operations reachable from one output, in creation order."""

    def __init__(self, ops: list[Node], leaves: list[Tensor]):
        self.ops = ops
        self.leaves = leaves

    @classmethod
    def trace(cls, out: Tensor) -> "Tape":
        ops: list[Node] = []
        leaves: list[Tensor] = []
        seen = {id(out)}
        stack = [out]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None:
                if t.requires_grad:
                    leaves.append(t)
                continue
            ops.append(node)
            for parent in node.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    seen.add(id(parent))
                    stack.append(parent)
        ops.sort(key=lambda n: n.seq)
        return cls(ops, leaves)

    def __len__(self) -> int:
        return len(self.ops)

    def run(self, out: Tensor, seed: np.ndarray) -> None:
        pending = {id(out): seed}
        for node in reversed(self.ops):
            g = pending.pop(id(node.output), None)
            if g is None:
                continue
            node.output._accumulate(g)
            for parent, pg in zip(node.inputs, node.rule(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg
        for leaf in self.leaves:
            g = pending.pop(id(leaf), None)
            if g is not None:
                leaf._accumulate(np.reshape(g, leaf.shape))


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d t`` into ``t.grad`` for every reachable tensor."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    Tape.trace(loss).run(loss, np.ones_like(loss.data))


def parameters_finite(tensors: Iterable[Tensor]) -> bool:
    return all(np.isfinite(t.data).all() for t in tensors)
