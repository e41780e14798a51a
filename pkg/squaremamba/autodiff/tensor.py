"""Dense 64-bit tensors with define-by-run reverse-mode differentiation.

Operations are recorded on the innermost active :py:class:`Tape` only when one
of their inputs requires a gradient, so inference outside of a tape builds no
graph at all.

.. code-block:: python

    from squaremamba.autodiff import Tape, Tensor

    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)
    x.grad  # array([6.])
"""

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from squaremamba.errors import DimensionError, NonFiniteError, UsageError

# one stack of active tapes per thread
_LOCAL = threading.local()


def _tapes() -> list:
    if not hasattr(_LOCAL, "tapes"):
        _LOCAL.tapes = []
    return _LOCAL.tapes


@dataclass
class Node:
    """A recorded operation: its inputs, its output and its backward rule"""

    name: str
    inputs: Tuple
    output: "Tensor"
    backward: Callable


class Tape:
    """Ordered record of the operations executed while the tape is active.

    Operations are appended in execution order, which is a topological order of
    the graph: one reverse pass over :py:attr:`nodes` visits every node once.
    Each thread has its own stack of active tapes, so workers can record
    independent tapes over shared parameters.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, node: Node):
        self.nodes.append(node)

    def backward(self, loss: "Tensor"):
        """Populate ``grad`` of every tensor requiring a gradient with dloss/dtensor.

        Leaf gradients accumulate across calls (see :py:func:`zero_grad`),
        gradients of intermediate tensors are overwritten.

        Parameters
        ----------
        loss : Tensor
            scalar tensor produced on this tape
        """
        if not isinstance(loss, Tensor) or loss.values.size != 1:
            raise UsageError("backward requires a scalar loss tensor")

        produced = {id(node.output) for node in self.nodes}
        seed = np.ones_like(loss.values)

        if id(loss) not in produced:
            if loss.requires_grad:
                _accumulate(loss, seed)
                return
            raise UsageError("loss was not produced on this tape")

        grads = {id(loss): seed}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node.output), None)
            if grad is None:
                continue
            node.output.grad = grad
            for tensor, input_grad in zip(node.inputs, node.backward(grad)):
                if input_grad is None or not isinstance(tensor, Tensor):
                    continue
                if not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in produced:
                    grads[key] = grads[key] + input_grad if key in grads else input_grad
                else:
                    _accumulate(tensor, input_grad)


def _accumulate(tensor, grad):
    grad = np.asarray(grad, dtype=np.float64).reshape(tensor.shape)
    if tensor.grad is None:
        tensor.grad = grad.copy()
    else:
        tensor.grad = tensor.grad + grad


def active_tape() -> Optional[Tape]:
    tapes = _tapes()
    return tapes[-1] if tapes else None


def backward(tape: Tape, loss: "Tensor"):
    """Functional alias of :py:meth:`Tape.backward`"""
    tape.backward(loss)


def zero_grad(tensors):
    for tensor in tensors:
        tensor.grad = None


class Tensor:
    """Dense real array taking part in reverse-mode differentiation.

    Parameters
    ----------
    values : array_like
        values, copied and stored as float64
    requires_grad : bool, optional
        whether gradients should flow to this tensor, by default False
    name : str, optional
        label used in diagnostics, by default None
    """

    __array_priority__ = 1000

    def __init__(self, values, requires_grad: bool = False, name: str = None):
        values = np.array(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"tensor {name or ''} holds non-finite values")
        self.values = values
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, values, name=None):
        tensor = cls.__new__(cls)
        tensor.values = values
        tensor.requires_grad = False
        tensor.grad = None
        tensor.name = name
        return tensor

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    def __len__(self):
        return self.shape[0]

    # operators
    # ---------

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def unsqueeze(self, axis):
        shape = list(self.shape)
        axis = axis if axis >= 0 else len(shape) + axis + 1
        shape.insert(axis, 1)
        return reshape(self, tuple(shape))

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        return exp(self)


def astensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64))


def _op(name: str, values: np.ndarray, inputs: Sequence, rule: Callable) -> Tensor:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{name} produced non-finite values")
    out = Tensor._wrap(values, name=name)
    tape = active_tape()
    if tape is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    ):
        out.requires_grad = True
        tape.record(Node(name, tuple(inputs), out, rule))
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast(name, a, b, fn):
    try:
        return fn(a.values, b.values)
    except ValueError as ex:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} {ex}") from ex


# elementwise
# -----------


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    values = _broadcast("add", a, b, np.add)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _op("add", values, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    values = _broadcast("sub", a, b, np.subtract)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _op("sub", values, (a, b), rule)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product"""
    a, b = astensor(a), astensor(b)
    values = _broadcast("mul", a, b, np.multiply)

    def rule(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _op("mul", values, (a, b), rule)


def div(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    values = _broadcast("div", a, b, np.divide)

    def rule(g):
        ga = _unbroadcast(g / b.values, a.shape)
        gb = _unbroadcast(-g * a.values / b.values**2, b.shape)
        return ga, gb

    return _op("div", values, (a, b), rule)


def neg(a) -> Tensor:
    a = astensor(a)
    return _op("neg", -a.values, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = astensor(a)
    values = np.exp(a.values)
    return _op("exp", values, (a,), lambda g: (g * values,))


def matmul(a, b) -> Tensor:
    """Product of ``a`` [..., n] with a matrix ``b`` [n, m]"""
    a, b = astensor(a), astensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")
    n, m = b.shape
    values = a.values @ b.values

    def rule(g):
        ga = g @ b.values.T
        gb = a.values.reshape(-1, n).T @ g.reshape(-1, m)
        return ga, gb

    return _op("matmul", values, (a, b), rule)


# reductions
# ----------


def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tensor_sum(a, axis=None, keepdims=False) -> Tensor:
    a = astensor(a)
    values = np.sum(a.values, axis=axis, keepdims=keepdims)

    def rule(g):
        return (np.array(_expand(g, a.shape, axis, keepdims)),)

    return _op("sum", values, (a,), rule)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = astensor(a)
    values = np.mean(a.values, axis=axis, keepdims=keepdims)
    count = a.values.size / max(np.size(values), 1)

    def rule(g):
        return (np.array(_expand(g, a.shape, axis, keepdims)) / count,)

    return _op("mean", values, (a,), rule)


# shape manipulation
# ------------------


def reshape(a, shape) -> Tensor:
    a = astensor(a)
    try:
        values = a.values.reshape(shape)
    except ValueError as ex:
        raise DimensionError(f"reshape: cannot reshape {a.shape} to {shape}") from ex
    return _op("reshape", values, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = astensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    values = np.transpose(a.values, axes)
    return _op("transpose", values, (a,), lambda g: (np.transpose(g, inverse),))


def _is_basic(index) -> bool:
    index = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None
        for i in index
    )


def getitem(a, index) -> Tensor:
    a = astensor(a)
    values = a.values[index]
    basic = _is_basic(index)

    def rule(g):
        full = np.zeros_like(a.values)
        if basic:
            full[index] += g
        else:
            # repeated advanced indices accumulate
            np.add.at(full, index, g)
        return (full,)

    return _op("getitem", np.array(values), (a,), rule)


def concatenate(tensors, axis=0) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    try:
        values = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as ex:
        raise DimensionError(f"concatenate: {ex}") from ex
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return _op("concatenate", values, tuple(tensors), rule)


def stack(tensors, axis=0) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    try:
        values = np.stack([t.values for t in tensors], axis=axis)
    except ValueError as ex:
        raise DimensionError(f"stack: {ex}") from ex

    def rule(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _op("stack", values, tuple(tensors), rule)
