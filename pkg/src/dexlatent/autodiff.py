"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records every primitive applied to Tensors created on it. Calling
backward() on a scalar Tensor walks the recorded nodes in reverse insertion
order (a reverse topological order by construction) and accumulates adjoints,
returning the gradient for every leaf that was created with
requires_grad=True. Gradient accumulation order is fixed, so repeated runs of
the same op sequence produce bit-identical gradients.

All op functions also accept plain numpy arrays / scalars. When no operand is
a Tensor they compute the same primitive in plain numpy and return an
ndarray, which lets callers write one forward pass that runs either taped
(for gradients) or untaped (for cheap evaluation).
"""

from __future__ import annotations

import numpy as np


class AutodiffError(Exception):
    """Base class for autodiff failures."""


class ShapeMismatchError(AutodiffError):
    """Operand shapes incompatible with the primitive."""


class DomainError(AutodiffError):
    """Input outside the primitive's mathematical domain."""


class TapeError(AutodiffError):
    """Tape misuse: cross-tape operands, non-scalar loss, foreign loss."""


class _Node:
    __slots__ = ("parents", "backfn")

    def __init__(self, parents, backfn):
        self.parents = parents
        self.backfn = backfn


class Tape:
    """Ordered record of primitive applications plus grad-requiring leaves."""

    def __init__(self):
        self._nodes = []
        self._grad_leaves = []

    def __len__(self):
        return len(self._nodes)

    def leaf(self, data, requires_grad=False):
        """Register a value on the tape and return it as a Tensor."""
        arr = np.asarray(data, dtype=np.float64)
        t = Tensor(self, len(self._nodes), arr, requires_grad)
        self._nodes.append(_Node((), None))
        if requires_grad:
            self._grad_leaves.append(t)
        return t

    def _record(self, data, parents, backfn):
        requires = any(p.requires_grad for p in parents)
        t = Tensor(self, len(self._nodes), data, requires)
        self._nodes.append(
            _Node(tuple(p.node_id for p in parents), backfn if requires else None)
        )
        return t

    def backward(self, loss):
        """Gradients of a scalar loss w.r.t. every grad-requiring leaf.

        Multiple uses of the same input sum their contributions. Leaves the
        loss does not depend on get a zero gradient.
        """
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise TapeError("loss was not produced on this tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")
        adjoints = [None] * len(self._nodes)
        adjoints[loss.node_id] = np.ones_like(loss.data)
        for i in range(loss.node_id, -1, -1):
            grad = adjoints[i]
            node = self._nodes[i]
            if grad is None or node.backfn is None:
                continue
            for pid, pg in zip(node.parents, node.backfn(grad)):
                if pg is None:
                    continue
                if adjoints[pid] is None:
                    adjoints[pid] = pg
                else:
                    adjoints[pid] = adjoints[pid] + pg
        out = {}
        for leaf in self._grad_leaves:
            g = adjoints[leaf.node_id]
            out[leaf] = np.zeros_like(leaf.data) if g is None else np.array(g)
        return out


class Tensor:
    """Dense float64 array recorded on a Tape."""

    __slots__ = ("tape", "node_id", "data", "requires_grad")

    def __init__(self, tape, node_id, data, requires_grad):
        self.tape = tape
        self.node_id = node_id
        self.data = data
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return take(self, key)


def backward(loss):
    """Free-function form of Tape.backward."""
    if not isinstance(loss, Tensor):
        raise TapeError("loss must be a Tensor produced on a tape")
    return loss.tape.backward(loss)


# ---------------------------------------------------------------------------
# op plumbing

def _find_tape(args):
    tape = None
    for a in args:
        if isinstance(a, Tensor):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise TapeError("operands come from different tapes")
    return tape


def _value(a):
    return a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)


def _as_tensor(tape, a):
    return a if isinstance(a, Tensor) else tape.leaf(a)


def _unbroadcast(grad, shape):
    # reduce a broadcasted gradient back to the operand's shape
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(name, xa, xb):
    try:
        np.broadcast_shapes(xa.shape, xb.shape)
    except ValueError:
        raise ShapeMismatchError(
            f"{name}: shapes {xa.shape} and {xb.shape} are not broadcastable"
        ) from None


def _binary(name, a, b, fwd, bwd):
    """Record an elementwise binary op with numpy broadcasting."""
    xa, xb = _value(a), _value(b)
    _check_broadcast(name, xa, xb)
    out = fwd(xa, xb)
    tape = _find_tape((a, b))
    if tape is None:
        return out
    ta, tb = _as_tensor(tape, a), _as_tensor(tape, b)

    def backfn(g):
        ga, gb = bwd(g, xa, xb, out)
        return (
            _unbroadcast(ga, xa.shape) if ga is not None else None,
            _unbroadcast(gb, xb.shape) if gb is not None else None,
        )

    return tape._record(out, (ta, tb), backfn)


def _unary(name, a, fwd, bwd):
    x = _value(a)
    out = fwd(x)
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(out, (a,), lambda g: (bwd(g, x, out),))


# ---------------------------------------------------------------------------
# primitives

def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y, lambda g, x, y, o: (g, g))


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y, lambda g, x, y, o: (g, -g))


def mul(a, b):
    return _binary("mul", a, b, lambda x, y: x * y, lambda g, x, y, o: (g * y, g * x))


def div(a, b):
    def fwd(x, y):
        if np.any(y == 0.0):
            raise DomainError("div: zero denominator")
        return x / y

    return _binary("div", a, b, fwd, lambda g, x, y, o: (g / y, -g * x / (y * y)))


def matmul(a, b):
    xa, xb = _value(a), _value(b)
    if xa.ndim not in (1, 2) or xb.ndim not in (1, 2) or (xa.ndim == 1 and xb.ndim == 1):
        raise ShapeMismatchError(
            f"matmul: unsupported ranks {xa.shape} @ {xb.shape}"
        )
    inner_a = xa.shape[-1]
    inner_b = xb.shape[0]
    if inner_a != inner_b:
        raise ShapeMismatchError(f"matmul: inner dims differ, {xa.shape} @ {xb.shape}")
    out = xa @ xb
    tape = _find_tape((a, b))
    if tape is None:
        return out
    ta, tb = _as_tensor(tape, a), _as_tensor(tape, b)

    def backfn(g):
        if xa.ndim == 1:  # (k,) @ (k,n) -> (n,)
            return (xb @ g, np.outer(xa, g))
        if xb.ndim == 1:  # (m,k) @ (k,) -> (m,)
            return (np.outer(g, xb), xa.T @ g)
        return (g @ xb.T, xa.T @ g)

    return tape._record(out, (ta, tb), backfn)


def sin(a):
    return _unary("sin", a, np.sin, lambda g, x, o: g * np.cos(x))


def cos(a):
    return _unary("cos", a, np.cos, lambda g, x, o: -g * np.sin(x))


def exp(a):
    def fwd(x):
        with np.errstate(over="ignore"):
            out = np.exp(x)
        if not np.all(np.isfinite(out)):
            raise DomainError("exp: overflow to non-finite value")
        return out

    return _unary("exp", a, fwd, lambda g, x, o: g * o)


def log(a):
    def fwd(x):
        if np.any(x <= 0.0):
            raise DomainError("log: nonpositive input")
        return np.log(x)

    return _unary("log", a, fwd, lambda g, x, o: g / x)


def tanh(a):
    return _unary("tanh", a, np.tanh, lambda g, x, o: g * (1.0 - o * o))


def relu(a):
    # subgradient 0 at x == 0
    return _unary("relu", a, lambda x: np.maximum(x, 0.0), lambda g, x, o: g * (x > 0.0))


def square(a):
    return _unary("square", a, lambda x: x * x, lambda g, x, o: g * 2.0 * x)


def sqrt(a):
    def fwd(x):
        if np.any(x < 0.0):
            raise DomainError("sqrt: negative input")
        return np.sqrt(x)

    def bwd(g, x, o):
        # subgradient 0 where x == 0 (true derivative diverges)
        safe = np.where(o == 0.0, 1.0, o)
        return np.where(o == 0.0, 0.0, g * 0.5 / safe)

    return _unary("sqrt", a, fwd, bwd)


def tsum(a, axis=None):
    def bwd(g, x, o):
        if axis is None:
            return np.broadcast_to(g, x.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), x.shape).copy()

    return _unary("sum", a, lambda x: np.sum(x, axis=axis), bwd)


def mean(a, axis=None):
    def bwd(g, x, o):
        n = x.size if axis is None else x.shape[axis]
        if axis is None:
            return np.broadcast_to(g / n, x.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy()

    return _unary("mean", a, lambda x: np.mean(x, axis=axis), bwd)


def norm2(a):
    """Euclidean norm of the flattened tensor; subgradient 0 at the origin."""

    def bwd(g, x, o):
        if o == 0.0:
            return np.zeros_like(x)
        return g * x / o

    return _unary("norm2", a, lambda x: np.sqrt(np.sum(x * x)), bwd)


def take(a, key):
    """Basic indexing (int / slice / tuples thereof) as a primitive."""

    def bwd(g, x, o):
        full = np.zeros_like(x)
        full[key] = g
        return full

    return _unary("slice", a, lambda x: x[key].copy() if isinstance(x[key], np.ndarray) else np.asarray(x[key]), bwd)


def concat(parts, axis=0):
    values = [_value(p) for p in parts]
    base = values[0].shape
    for v in values[1:]:
        if len(v.shape) != len(base) or any(
            s != b for i, (s, b) in enumerate(zip(v.shape, base)) if i != axis
        ):
            raise ShapeMismatchError(
                f"concat: shapes {[v.shape for v in values]} differ off axis {axis}"
            )
    out = np.concatenate(values, axis=axis)
    tape = _find_tape(parts)
    if tape is None:
        return out
    tensors = [_as_tensor(tape, p) for p in parts]
    sizes = [v.shape[axis] for v in values]

    def backfn(g):
        grads, start = [], 0
        for s in sizes:
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + s)
            grads.append(g[tuple(idx)])
            start += s
        return tuple(grads)

    return tape._record(out, tuple(tensors), backfn)


def broadcast_to(a, shape):
    x = _value(a)
    try:
        out = np.broadcast_to(x, shape).copy()
    except ValueError:
        raise ShapeMismatchError(
            f"broadcast: cannot broadcast {x.shape} to {tuple(shape)}"
        ) from None
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(out, (a,), lambda g: (_unbroadcast(g, x.shape),))


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matmul": matmul,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "relu": relu,
    "sum": tsum,
    "mean": mean,
    "square": square,
    "sqrt": sqrt,
    "norm2": norm2,
    "concat": concat,
    "slice": take,
    "broadcast": broadcast_to,
}


def forward_primitive(op, *inputs, **kwargs):
    """Apply a primitive by id, recording it on the operands' tape."""
    if op not in PRIMITIVES:
        raise AutodiffError(f"unknown primitive {op!r}")
    return PRIMITIVES[op](*inputs, **kwargs)
