"""Parameter containers and the small layer zoo shared by the network parts."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor that is always tracked by gradient descent."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal draw clipped to +/- 2 std (the usual transformer init)."""
    x = rng.standard_normal(shape) * std
    return np.clip(x, -2.0 * std, 2.0 * std).astype(dtype)


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """He initialization for ReLU stacks: std = sqrt(2 / fan_in)."""
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


def _walk_params(key: str, value):
    """Yield (name, Parameter) from modules, parameters, and nested sequences."""
    if isinstance(value, Parameter):
        yield key, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=f"{key}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk_params(f"{key}.{i}", item)


class Module:
    """Base class with recursive parameter discovery over attributes."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            yield from _walk_params(f"{prefix}{name}", value)

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def param_dict(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Bit-exact assignment; the key sets and shapes must match."""
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)}, unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = state[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {p.data.shape}")
            p.data = np.array(arr, dtype=arr.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, std: float = 0.02, dtype=np.float32):
        self.weight = Parameter(trunc_normal(rng, (in_dim, out_dim), std=std, dtype=dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        # flatten leading dims so the weight gradient is one plain GEMM
        lead = x.shape[:-1]
        if len(lead) != 1:
            x = T.reshape(x, (-1, x.shape[-1]))
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        if len(lead) != 1:
            y = T.reshape(y, lead + (y.shape[-1],))
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Conv2d(Module):
    """3x3-style convolution layer; `init` picks the weight distribution.

    ``init="kaiming"`` keeps activations O(1) through ReLU stacks (hidden
    layers of the prediction heads); ``init="trunc"`` is the small
    transformer-style start used for output layers so predictions begin
    near zero.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, init: str = "kaiming", dtype=np.float32):
        fan_in = in_ch * kernel * kernel
        shape = (out_ch, in_ch, kernel, kernel)
        if init == "kaiming":
            w = kaiming_normal(rng, shape, fan_in, dtype=dtype)
        elif init == "trunc":
            w = trunc_normal(rng, shape, std=0.02, dtype=dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype))
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride)
