"""Parameter store and the small layer set used by the encoder and MFE."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import Tensor, add, attention, conv2d, matmul, scale_shift_channels


class ParamStore:
    """Ordered registry of named trainable tensors."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: dict[str, Tensor] = {}

    def create(self, name: str, shape: tuple[int, ...], fan_in: Optional[int] = None,
               zero: bool = False) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        if zero:
            data = np.zeros(shape)
        else:
            # He-style fan-in scaling.
            std = np.sqrt(2.0 / fan_in) if fan_in else 1.0
            data = self.rng.normal(0.0, std, size=shape)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def create_const(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {name: np.array(p.data) for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in self.params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {p.data.shape}")
            p.data = np.array(arr)


class Linear:
    """Affine map x(n×in) → x·W + b (n×out)."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int):
        self.w = store.create(f"{name}.w", (n_in, n_out), fan_in=n_in)
        self.b = store.create(f"{name}.b", (n_out,), zero=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)


class Conv2d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 k: int = 3, stride: int = 1, padding: str = "zero"):
        self.kernels = store.create(f"{name}.k", (c_out, c_in, k, k), fan_in=c_in * k * k)
        self.bias = store.create(f"{name}.b", (c_out,), zero=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.kernels, self.bias, stride=self.stride, padding=self.padding)


class ChannelAffine:
    """Learnable per-channel scale and shift (no batch statistics)."""

    def __init__(self, store: ParamStore, name: str, channels: int):
        self.scale = store.create_const(f"{name}.scale", np.ones(channels))
        self.bias = store.create(f"{name}.bias", (channels,), zero=True)

    def __call__(self, x: Tensor) -> Tensor:
        return scale_shift_channels(x, self.scale, self.bias)


class SelfAttention:
    """Single-head self-attention with learned Q/K/V projections."""

    def __init__(self, store: ParamStore, name: str, dim: int):
        self.wq = store.create(f"{name}.wq", (dim, dim), fan_in=dim)
        self.wk = store.create(f"{name}.wk", (dim, dim), fan_in=dim)
        self.wv = store.create(f"{name}.wv", (dim, dim), fan_in=dim)

    def __call__(self, x: Tensor) -> Tensor:
        return attention(matmul(x, self.wq), matmul(x, self.wk), matmul(x, self.wv))
