"""Minimal layer/module system on top of the taped tensor ops."""

import numpy as np

from . import ops
from . import tensor as T
from .tensor import Tensor


class Module:
    """Base class with parameter registration and train/eval mode.

    Attributes assigned a Tensor become named parameters; attributes
    assigned a Module become children. Shared submodules (the same object
    reachable under two names) are deduplicated by identity wherever that
    matters (parameter iteration, counting, optimizer construction).
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix="", _memo=None):
        """Yield (name, tensor) pairs, each distinct storage exactly once."""
        if _memo is None:
            _memo = set()
        for name, p in self._params.items():
            if id(p) not in _memo:
                _memo.add(id(p))
                yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".", _memo)

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix="", _memo=None):
        """Non-trainable persistent arrays (batchnorm running stats)."""
        if _memo is None:
            _memo = set()
        if isinstance(self, BatchNorm2d) and id(self.state) not in _memo:
            _memo.add(id(self.state))
            yield prefix + "running_mean", self.state.running_mean
            yield prefix + "running_var", self.state.running_var
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".", _memo)

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def forward(self, *args):
        raise NotImplementedError

    def __call__(self, *args):
        return self.forward(*args)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0, bias=False):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(np.zeros((out_channels, in_channels, kernel, kernel),
                                      dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True) \
            if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True):
        super().__init__()
        self.weight = Tensor(np.zeros((out_features, in_features), dtype=np.float32),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True) \
            if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.state = ops.BatchNormState(channels, momentum, eps)

    def forward(self, x):
        return ops.batchnorm2d(x, self.gamma, self.beta, self.state, self.training)


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class MaxPool2d(Module):
    def __init__(self, kernel, stride, padding=0):
        super().__init__()
        self.kernel, self.stride, self.padding = kernel, stride, padding

    def forward(self, x):
        return ops.maxpool2d(x, self.kernel, self.stride, self.padding)


class AvgPool2d(Module):
    def __init__(self, kernel, stride):
        super().__init__()
        self.kernel, self.stride = kernel, stride

    def forward(self, x):
        return ops.avgpool2d(x, self.kernel, self.stride)


class GlobalAvgPool(Module):
    def forward(self, x):
        return ops.global_avg_pool(x)


class Sequential(Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        for i, layer in enumerate(self.layers):
            setattr(self, f"l{i}", layer)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def init_parameters(module, seed):
    """Seeded fan-in-scaled normal init for conv/linear weights.

    Weights get N(0, 2/fan_in); biases zero; batchnorm gamma=1, beta=0
    (already their constructed values). Deterministic: parameters are
    visited in registration order.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    for name, p in module.named_parameters():
        if name.endswith("gamma") or name.endswith("beta") or name.endswith("bias"):
            continue
        if p.data.ndim >= 2:
            fan_in = int(np.prod(p.data.shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            p.data[...] = rng.normal(0.0, std, p.data.shape).astype(p.data.dtype)
    return module
