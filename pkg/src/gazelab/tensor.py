"""Dense float tensors with taped reverse-mode automatic differentiation.

Tensors hold a contiguous row-major numpy array (float32 by default,
float64 supported for high-precision checks). Operations executed while a
``Tape`` is active record themselves onto the tape in execution order;
``backward`` replays the tape once in reverse and accumulates gradients
onto every tensor with ``requires_grad``.

Scalar reductions (sums, losses) accumulate in 64-bit regardless of the
tensor dtype.
"""

import numpy as np


class ShapeError(ValueError):
    """An operation was given tensors with incompatible dimensions."""


class AutodiffError(RuntimeError):
    """Backward-pass misuse (non-scalar loss, loss not on the tape, ...)."""


_TAPE_STACK = []


class Tensor:
    """N-dimensional float array plus gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def dims(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor with dims {self.dims}")
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(dims={tuple(self.dims)}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class _Record:
    __slots__ = ("output", "inputs", "grads_fn")

    def __init__(self, output, inputs, grads_fn):
        self.output = output
        self.inputs = inputs
        self.grads_fn = grads_fn


class Tape:
    """Ordered record of operations for one backward pass.

    Use as a context manager; ops executed inside record themselves when
    any of their inputs requires a gradient.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.records)


def record(output, inputs, grads_fn):
    """Register an op result: propagate requires_grad, append to active tape.

    ``grads_fn(g)`` must return one gradient array (or None) per input.
    """
    needs = any(t.requires_grad for t in inputs)
    output.requires_grad = needs
    if needs and _TAPE_STACK:
        _TAPE_STACK[-1].records.append(_Record(output, tuple(inputs), grads_fn))
    return output


def backward(loss, tape):
    """Populate ``grad`` on every requires_grad tensor reachable from loss.

    Gradients on intermediate (tape-recorded) outputs are cleared first, so
    repeated backward calls on one tape stay independent; leaf gradients
    accumulate across calls and are the caller's job to zero.
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward needs a scalar loss, got dims {tuple(loss.dims)}")
    on_tape = loss in (r.output for r in tape.records)
    if tape.records and not on_tape and loss.requires_grad:
        raise AutodiffError("loss tensor was not recorded on this tape")
    for rec in tape.records:
        rec.output.grad = None
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(tape.records):
        g = rec.output.grad
        if g is None:
            continue
        grads = rec.grads_fn(g)
        for t, gi in zip(rec.inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            gi = np.asarray(gi, dtype=t.data.dtype)
            if gi.shape != t.data.shape:
                raise AutodiffError(
                    f"backward produced gradient of dims {gi.shape} for tensor of dims {t.data.shape}")
            t.grad = gi.copy() if t.grad is None else t.grad + gi


def _check_same_dims(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: dims {tuple(a.dims)} vs {tuple(b.dims)}")


def add(a, b):
    _check_same_dims("add", a, b)
    out = Tensor(a.data + b.data)
    return record(out, (a, b), lambda g: (g, g))


def sub(a, b):
    _check_same_dims("sub", a, b)
    out = Tensor(a.data - b.data)
    return record(out, (a, b), lambda g: (g, -g))


def mul(a, b):
    _check_same_dims("mul", a, b)
    out = Tensor(a.data * b.data)
    return record(out, (a, b), lambda g: (g * b.data, g * a.data))


def mul_scalar(x, c):
    c = float(c)
    out = Tensor(x.data * np.asarray(c, dtype=x.dtype))
    return record(out, (x,), lambda g: (g * np.asarray(c, dtype=x.dtype),))


def relu(x):
    out = Tensor(np.maximum(x.data, 0))
    mask = x.data > 0
    return record(out, (x,), lambda g: (g * mask,))


def reshape(x, dims):
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != x.size:
        raise ShapeError(f"reshape: {tuple(x.dims)} -> {dims} changes element count")
    old = x.data.shape
    out = Tensor(x.data.reshape(dims))
    return record(out, (x,), lambda g: (g.reshape(old),))


def transpose_last2(x):
    if x.data.ndim < 2:
        raise ShapeError("transpose_last2 needs >= 2 dims")
    out = Tensor(np.ascontiguousarray(np.swapaxes(x.data, -1, -2)))
    return record(out, (x,), lambda g: (np.swapaxes(g, -1, -2),))


def matmul(a, b):
    if a.data.ndim not in (2, 3) or b.data.ndim != a.data.ndim:
        raise ShapeError(f"matmul: unsupported dims {tuple(a.dims)} @ {tuple(b.dims)}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner axis {a.data.shape[-1]} != {b.data.shape[-2]}")
    if a.data.ndim == 3 and a.data.shape[0] != b.data.shape[0]:
        raise ShapeError("matmul: batch axis mismatch")
    out = Tensor(a.data @ b.data)

    def grads(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return record(out, (a, b), grads)


def concat(tensors, axis=1):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    nd = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != nd:
            raise ShapeError("concat: rank mismatch")
        for ax in range(nd):
            if ax != axis and t.data.shape[ax] != tensors[0].data.shape[ax]:
                raise ShapeError(f"concat: axis {ax} mismatch")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grads(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return record(out, tuple(tensors), grads)


def softmax_lastdim(x):
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def grads(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return record(out, (x,), grads)


def sum_all(x):
    out = Tensor(np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype))

    def grads(g):
        return (np.full_like(x.data, g.reshape(())),)

    return record(out, (x,), grads)


def l1_loss(pred, target):
    """Mean absolute error over all elements (64-bit accumulation)."""
    _check_same_dims("l1_loss", pred, target)
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    loss = np.abs(diff).sum() / diff.size
    out = Tensor(np.asarray(loss, dtype=pred.dtype))
    sign = np.sign(diff)

    def grads(g):
        base = g.reshape(()).astype(np.float64) * sign / diff.size
        return base, -base

    return record(out, (pred, target), grads)
