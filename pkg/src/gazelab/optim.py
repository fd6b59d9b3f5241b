"""Adam optimizer with bias correction."""

import numpy as np

from .tensor import Tensor, ShapeError


class AdamState:
    """Per-parameter moment accumulators, zero-initialized."""

    def __init__(self, param, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros_like(param.data)
        self.v = np.zeros_like(param.data)
        self.step = 0
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)


def adam_step(param, grad, state, lr):
    """One bias-corrected Adam update, in place on param.data."""
    g = grad.data if isinstance(grad, Tensor) else np.asarray(grad)
    if g.shape != param.data.shape:
        raise ShapeError(
            f"adam_step: gradient dims {g.shape} do not match parameter dims {param.data.shape}")
    g = g.astype(param.data.dtype, copy=False)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * g
    state.v = b2 * state.v + (1.0 - b2) * (g * g)
    mhat = state.m / (1.0 - b1 ** t)
    vhat = state.v / (1.0 - b2 ** t)
    param.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(param.data.dtype)


class Adam:
    """Convenience wrapper stepping a list of parameters."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.states = [AdamState(p, beta1, beta2, eps) for p in self.params]

    def step(self, lr):
        for p, s in zip(self.params, self.states):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_step(p, g, s, lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
