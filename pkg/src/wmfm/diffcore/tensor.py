"""Tensor values, the recording tape, and reverse-mode replay."""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class GradientError(RuntimeError):
    """Raised when backward cannot be performed as requested."""


class Tensor:
    """A dense array plus a ``requires_grad`` flag.

    Tensors are plain values; gradients are not stored on them but returned
    by :func:`backward` as a mapping keyed by leaf tensor.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(dtype or DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


class _Node:
    __slots__ = ("out", "parents", "backward", "op")

    def __init__(self, out, parents, backward, op):
        self.out = out
        self.parents = parents
        self.backward = backward
        self.op = op


class Tape:
    """Ordered record of differentiable operations.

    Used as a context manager; operations executed inside the ``with``
    block on tensors that require gradients are appended in execution
    order, which is already a topological order for reverse replay.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, parents, backward, op):
        self.nodes.append(_Node(out, parents, backward, op))
        self._produced.add(id(out))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._produced

    @staticmethod
    def current():
        return Tape._stack[-1] if Tape._stack else None


class no_grad:
    """Suspend recording: operations inside run as plain forward passes."""

    def __enter__(self):
        self._saved = Tape._stack
        Tape._stack = []

    def __exit__(self, *exc):
        Tape._stack = self._saved
        return False


def make_result(data, parents, backward, op):
    """Wrap ``data`` as the output of ``op`` and record it when needed."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    tape = Tape.current()
    needs = tape is not None and any(isinstance(p, Tensor) and p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, parents, backward, op)
    return out


def backward(tape: Tape, loss: Tensor, wrt=None) -> dict:
    """Replay ``tape`` in reverse from the scalar ``loss``.

    Returns a dict mapping each ``requires_grad`` leaf reached from ``loss``
    to its gradient array. If ``wrt`` is given, every tensor in it must be
    reached; a missing or detached one raises :class:`GradientError`.
    """
    if loss.data.size != 1:
        raise GradientError(f"loss must be a scalar, got shape {loss.shape}")
    if not tape.produced(loss):
        raise GradientError("loss was not produced on this tape (detached?)")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parent_grads = node.backward(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not isinstance(p, Tensor) or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            if not tape.produced(p):
                leaves[key] = p

    result = {leaves[k]: grads[k] for k in leaves}
    if wrt is not None:
        for t in wrt:
            if t not in result:
                label = t.name or repr(t)
                raise GradientError(f"no gradient reached leaf {label}")
    return result
