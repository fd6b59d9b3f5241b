"""Central finite-difference gradient checking for the autodiff ops.

The harness runs in float64 (the engine supports both dtypes) so the
check tolerance reflects the math, not float32 rounding. Inputs for
kinked ops (relu, maxpool, l1) are constructed away from the kinks:
values sit on a coarse grid whose spacing is much larger than the probe
step, so a +-h perturbation never crosses a tie or a zero.
"""

import numpy as np

from . import ops
from . import tensor as T
from .tensor import Tape, Tensor, backward


class GradCheckReport:
    """Worst-coordinate summary of one finite-difference comparison."""

    def __init__(self, max_rel_err, worst_tensor, worst_coord, analytic, numeric):
        self.max_rel_err = max_rel_err
        self.worst_tensor = worst_tensor
        self.worst_coord = worst_coord
        self.analytic = analytic
        self.numeric = numeric

    def __repr__(self):
        return (f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, "
                f"worst={self.worst_tensor}[{self.worst_coord}], "
                f"analytic={self.analytic:.6e}, numeric={self.numeric:.6e})")


def finite_diff_check(loss_fn, tensors, names=None, h=1e-3):
    """Compare taped gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the scalar loss from the current contents of
    ``tensors`` on every call. Every coordinate of every tensor is probed.
    """
    names = names or [f"t{i}" for i in range(len(tensors))]
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    report = GradCheckReport(0.0, None, None, 0.0, 0.0)
    for tens, an, name in zip(tensors, analytic, names):
        flat = tens.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            a = float(an_flat[i])
            denom = max(abs(a), abs(fd))
            if denom < 1e-12:
                continue
            rel = abs(a - fd) / denom
            if rel > report.max_rel_err:
                report = GradCheckReport(rel, name, i, a, fd)
    return report


def _grid_values(rng, shape, spacing=0.05):
    """Random permutation of an arithmetic grid: all pairwise gaps >= spacing,
    no value closer to zero than spacing/2. Safe for relu/maxpool/l1 probing."""
    n = int(np.prod(shape))
    vals = (np.arange(n, dtype=np.float64) - (n - 1) / 2.0) * spacing
    vals = vals[rng.permutation(n)]
    vals = np.where(vals >= 0, vals + spacing / 2.0, vals - spacing / 2.0)
    return vals.reshape(shape)


class _Projector:
    """Fixed random projection of an op output onto a scalar loss.

    The projection array is drawn once (on first use) and reused on every
    subsequent call, so the scalar loss is a fixed smooth function of the
    op inputs across finite-difference probes.
    """

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self._proj = None

    def __call__(self, out):
        if self._proj is None:
            self._proj = Tensor(self._rng.standard_normal(out.dims))
        return T.sum_all(T.mul(out, self._proj))


OP_NAMES = (
    "conv2d", "conv2d_nobias", "maxpool2d", "avgpool2d", "linear", "relu",
    "batchnorm2d_train", "batchnorm2d_eval", "softmax_lastdim", "l1_loss",
    "concat", "matmul", "pad2d", "global_avg_pool", "add", "sub", "mul",
)


def build_op_check(name, seed):
    """(loss_fn, tensors, names) for one named op with seeded random inputs."""
    rng = np.random.default_rng(seed)
    proj = _Projector(seed + 990_001)

    if name == "conv2d":
        x = Tensor(rng.standard_normal((2, 2, 5, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.5, requires_grad=True)
        b = Tensor(rng.standard_normal(3) * 0.1, requires_grad=True)
        return (lambda: proj(ops.conv2d(x, w, b, stride=2, padding=1)),
                [x, w, b], ["input", "weight", "bias"])
    if name == "conv2d_nobias":
        x = Tensor(rng.standard_normal((1, 3, 6, 6)), requires_grad=True)
        w = Tensor(rng.standard_normal((2, 3, 3, 3)) * 0.5, requires_grad=True)
        return (lambda: proj(ops.conv2d(x, w, stride=1, padding=0)),
                [x, w], ["input", "weight"])
    if name == "maxpool2d":
        x = Tensor(_grid_values(rng, (1, 2, 6, 6)), requires_grad=True)
        return (lambda: proj(ops.maxpool2d(x, 3, 2, padding=1)), [x], ["input"])
    if name == "avgpool2d":
        x = Tensor(rng.standard_normal((2, 2, 6, 6)), requires_grad=True)
        return (lambda: proj(ops.avgpool2d(x, 2, 2)), [x], ["input"])
    if name == "linear":
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((2, 4)) * 0.5, requires_grad=True)
        b = Tensor(rng.standard_normal(2) * 0.1, requires_grad=True)
        return (lambda: proj(ops.linear(x, w, b)), [x, w, b], ["input", "weight", "bias"])
    if name == "relu":
        x = Tensor(_grid_values(rng, (2, 3, 4, 4)), requires_grad=True)
        return (lambda: proj(T.relu(x)), [x], ["input"])
    if name in ("batchnorm2d_train", "batchnorm2d_eval"):
        x = Tensor(rng.standard_normal((3, 2, 4, 4)), requires_grad=True)
        gamma = Tensor(1.0 + 0.2 * rng.standard_normal(2), requires_grad=True)
        beta = Tensor(0.2 * rng.standard_normal(2), requires_grad=True)
        state = ops.BatchNormState(2)
        state.running_mean = 0.3 * rng.standard_normal(2).astype(np.float32)
        state.running_var = (1.0 + 0.2 * rng.random(2)).astype(np.float32)
        training = name.endswith("train")
        return (lambda: proj(ops.batchnorm2d(x, gamma, beta, state, training)),
                [x, gamma, beta], ["input", "gamma", "beta"])
    if name == "softmax_lastdim":
        x = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
        return (lambda: proj(T.softmax_lastdim(x)), [x], ["input"])
    if name == "l1_loss":
        pred = Tensor(_grid_values(rng, (4, 2)), requires_grad=True)
        target = Tensor(np.zeros((4, 2), dtype=np.float64))
        return (lambda: T.l1_loss(pred, target), [pred], ["pred"])
    if name == "concat":
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
        return (lambda: proj(T.concat([a, b], axis=1)), [a, b], ["a", "b"])
    if name == "matmul":
        a = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True)
        return (lambda: proj(T.matmul(a, b)), [a, b], ["a", "b"])
    if name == "pad2d":
        x = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
        return (lambda: proj(ops.pad2d(x, 2)), [x], ["input"])
    if name == "global_avg_pool":
        x = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
        return (lambda: proj(ops.global_avg_pool(x)), [x], ["input"])
    if name in ("add", "sub", "mul"):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        fn = {"add": T.add, "sub": T.sub, "mul": T.mul}[name]
        return (lambda: proj(fn(a, b)), [a, b], ["a", "b"])
    raise ValueError(f"unknown op for gradient check: {name}")


def check_op(name, seed, h=1e-3):
    """Max relative FD error report for one op at one seed."""
    loss_fn, tensors, names = build_op_check(name, seed)
    return finite_diff_check(loss_fn, tensors, names, h=h)
