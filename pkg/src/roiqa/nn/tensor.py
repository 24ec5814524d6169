"""Reverse-mode autodiff over float64 numpy arrays.

Tensors form an acyclic graph; backward() walks exact reverse topological
order and accumulates gradients into .grad. Ops are tensor-level (im2col
convolution, fused attention from primitives), so graphs stay small.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf


class Tensor:
    """A float64 array plus optional gradient accumulator and graph edge."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward_fn: Optional[Callable[[np.ndarray], None]] = None,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward_fn = _backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"<Tensor{tag} shape={self.data.shape}>"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    out._backward_fn = backward
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    out._backward_fn = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    out._backward_fn = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out._backward_fn = backward
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    out._backward_fn = backward
    return out


def transpose2d(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.T, _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.T)

    out._backward_fn = backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    out._backward_fn = backward
    return out


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(), _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward_fn = backward
    return out


def mean_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    out = Tensor(a.data.mean(), _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g / n, a.data.shape).copy())

    out._backward_fn = backward
    return out


def spatial_mean(a: Tensor) -> Tensor:
    """Mean over the spatial axes of a C×h×w tensor, giving a length-C vector."""
    a = as_tensor(a)
    if a.data.ndim != 3:
        raise ValueError(f"expected C×h×w, got {a.data.shape}")
    _, h, w = a.data.shape
    out = Tensor(a.data.mean(axis=(1, 2)), _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.repeat(g[:, None, None], h, axis=1).repeat(w, axis=2) / (h * w))

    out._backward_fn = backward
    return out


_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU; smooth, so finite differences stay honest."""
    a = as_tensor(a)
    phi = 0.5 * (1.0 + erf(a.data / _SQRT_2))
    out = Tensor(a.data * phi, _parents=(a,))

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data ** 2) * _INV_SQRT_2PI
            a._accumulate(g * (phi + a.data * pdf))

    out._backward_fn = backward
    return out


def softplus(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data))), _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / (1.0 + np.exp(-a.data)))

    out._backward_fn = backward
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Row-stable softmax: max subtraction, nonnegative rows summing to 1."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, _parents=(a,))

    def backward(g):
        if a.requires_grad:
            dot = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate((g - dot) * y)

    out._backward_fn = backward
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    ls = shifted - lse
    out = Tensor(ls, _parents=(a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g - np.exp(ls) * g.sum(axis=axis, keepdims=True))

    out._backward_fn = backward
    return out


def cross_entropy(logits: Tensor, target_index: int) -> Tensor:
    """Negative log-likelihood of one class for a 1-D logit vector."""
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise ValueError(f"expected 1-D logits, got {logits.data.shape}")
    ls = log_softmax(logits, axis=-1)
    picked = row_select(ls, int(target_index))
    return mul(sum_all(picked), -1.0)


def row_select(a: Tensor, index: int) -> Tensor:
    """Select one row (or element for 1-D input) with gradient scatter."""
    a = as_tensor(a)
    out = Tensor(a.data[index], _parents=(a,))

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            a._accumulate(full)

    out._backward_fn = backward
    return out


def scale_shift_channels(a: Tensor, scale: Tensor, bias: Tensor) -> Tensor:
    """Per-channel affine on a C×h×w tensor: a·scale[c] + bias[c]."""
    a, scale, bias = as_tensor(a), as_tensor(scale), as_tensor(bias)
    s = scale.data[:, None, None]
    out = Tensor(a.data * s + bias.data[:, None, None], _parents=(a, scale, bias))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * s)
        if scale.requires_grad:
            scale._accumulate((g * a.data).sum(axis=(1, 2)))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))

    out._backward_fn = backward
    return out


def _pad_index_map(h: int, w: int, pad: int, mode: str) -> Optional[np.ndarray]:
    if pad == 0:
        return None
    if mode == "zero":
        return None
    idx = np.arange(h * w).reshape(h, w)
    return np.pad(idx, pad, mode="reflect")


def conv2d(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: str = "reflect") -> Tensor:
    """2-D cross-correlation of C_in×h×w input with C_out×C_in×k×k kernels.

    Same-padding of k//2 (reflect or zero) is applied before striding.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    cin, h, w = x.data.shape
    cout, cin_k, k, k2 = kernels.data.shape
    if cin_k != cin or k != k2:
        raise ValueError(f"kernel shape {kernels.data.shape} mismatches input {x.data.shape}")
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding not in ("reflect", "zero"):
        raise ValueError(f"unknown padding {padding!r}")
    p = k // 2
    if padding == "reflect" and p > 0:
        xp = np.pad(x.data, ((0, 0), (p, p), (p, p)), mode="reflect")
    else:
        xp = np.pad(x.data, ((0, 0), (p, p), (p, p)), mode="constant")
    wins = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    wins = wins[:, ::stride, ::stride]  # cin × ho × wo × k × k
    y = np.tensordot(kernels.data, wins, axes=([1, 2, 3], [0, 3, 4]))
    parents = (x, kernels) if bias is None else (x, kernels, bias)
    if bias is not None:
        y = y + bias.data[:, None, None]
    out = Tensor(y, _parents=parents)
    ho, wo = y.shape[1], y.shape[2]
    idx_map = _pad_index_map(h, w, p, padding)

    def backward(g):
        if kernels.requires_grad:
            kernels._accumulate(np.tensordot(g, wins, axes=([1, 2], [1, 2])))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for a_off in range(k):
                for b_off in range(k):
                    # contribution of kernel tap (a_off, b_off) to padded input
                    contrib = np.tensordot(kernels.data[:, :, a_off, b_off], g, axes=([0], [0]))
                    gxp[:, a_off : a_off + stride * ho : stride,
                        b_off : b_off + stride * wo : stride] += contrib
            if idx_map is None:
                gx = gxp[:, p : p + h, p : p + w] if p > 0 else gxp
            else:
                gx = np.zeros((cin, h * w))
                flat_idx = idx_map.ravel()
                for c in range(cin):
                    np.add.at(gx[c], flat_idx, gxp[c].ravel())
                gx = gx.reshape(cin, h, w)
            x._accumulate(gx)

    out._backward_fn = backward
    return out


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Single-head scaled dot-product attention: softmax(QKᵀ/√P)·V."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ValueError("attention expects 2-D Q, K, V")
    p = q.data.shape[1]
    if p == 0 or k.data.shape[0] == 0:
        raise ValueError("attention needs nonzero feature dim and at least one key")
    if k.data.shape[1] != p or v.data.shape[0] != k.data.shape[0]:
        raise ValueError(
            f"attention shape mismatch: Q{q.data.shape} K{k.data.shape} V{v.data.shape}"
        )
    scores = mul(matmul(q, transpose2d(k)), 1.0 / np.sqrt(p))
    return matmul(softmax(scores, axis=-1), v)


def mask_pool_op(featmap: Tensor, coverage: np.ndarray) -> Tensor:
    """Coverage-weighted spatial pooling of C×h×w features to a C-vector.

    `coverage` is a fixed h×w weight grid (data, not differentiated).
    """
    featmap = as_tensor(featmap)
    cov = np.asarray(coverage, dtype=np.float64)
    total = cov.sum()
    if total <= 0:
        raise ValueError("coverage weights sum to zero")
    out = Tensor(np.tensordot(featmap.data, cov, axes=([1, 2], [0, 1])) / total,
                 _parents=(featmap,))

    def backward(g):
        if featmap.requires_grad:
            featmap._accumulate(g[:, None, None] * cov[None, :, :] / total)

    out._backward_fn = backward
    return out
