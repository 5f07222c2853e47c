"""Parameter containers and the layers the encoders and heads are built from."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, Tensor


class Module:
    """Minimal parameter container with dotted names and a train/eval flag."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((n, p.data) for n, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(own) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: checkpoint {arr.shape} vs model {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)
        for name, b in bufs.items():
            arr = np.asarray(state[name])
            if arr.shape != b.shape:
                raise ValueError(f"shape mismatch for {name}: checkpoint {arr.shape} vs model {b.shape}")
            b[...] = arr

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def requires_grad_(self, flag=True):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.weight = Tensor(_he(rng, (n_out, n_in), n_in, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, rng, kernel=3, stride=1, padding=1, bias=True, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = c_in * kernel * kernel
        self.weight = Tensor(_he(rng, (c_out, c_in, kernel, kernel), fan_in, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm(Module):
    """Batch normalization for (N, F) or (N, C, H, W) inputs."""

    def __init__(self, features, momentum=0.1, eps=1e-5, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = Tensor(np.ones(features, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(features, dtype=dtype), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(features, dtype=dtype))
        self.register_buffer("running_var", np.ones(features, dtype=dtype))

    def forward(self, x):
        return ops.batchnorm(
            x, self.weight, self.bias, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class ConvBlock(Module):
    """3x3 conv -> batchnorm -> ReLU."""

    def __init__(self, c_in, c_out, rng, stride=1, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, rng, stride=stride, padding=1, bias=False, dtype=dtype)
        self.bn = BatchNorm(c_out, dtype=dtype)

    def forward(self, x):
        return ops.relu(self.bn(self.conv(x)))


class MLP(Module):
    """Linear layers with ReLU between them (none after the last)."""

    def __init__(self, sizes, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.depth = len(sizes) - 1
        for i in range(self.depth):
            setattr(self, f"fc{i}", Linear(sizes[i], sizes[i + 1], rng, dtype=dtype))

    def forward(self, x):
        for i in range(self.depth):
            x = getattr(self, f"fc{i}")(x)
            if i < self.depth - 1:
                x = ops.relu(x)
        return x
