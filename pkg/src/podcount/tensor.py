"""Dense tensor math with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array (row-major, float32 or float64) and records
the operations applied to it so that ``backward()`` can accumulate gradients
into every leaf that has ``requires_grad`` set.  The operation set is the
minimum needed to build and train a windowed-attention counting network:
linear algebra, activations, normalization, convolution, interpolation,
window reshaping, and assorted plumbing (reshape/transpose/slice/concat).

64-bit arrays are recommended for gradient checks and numeric oracles;
32-bit is fine for training.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


_GRAD_ENABLED = True

_FLOAT_DTYPES = (np.float32, np.float64)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / finite differences)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _coerce(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """N-dimensional real array with optional gradient tracking.

    Leaf tensors (built directly from data) are validated: every extent must
    be >= 1 and every value finite.  Tensors produced by operations skip the
    check; non-finite values surface at the training-step boundary instead.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = _coerce(data)
        if any(n < 1 for n in arr.shape):
            raise ShapeError(f"tensor extents must be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (NaN/Inf rejected)")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        # leaves keep the flag as given; no_grad() only detaches op outputs
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # ------------------------------------------------------------------
    # basic protocol
    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        return out

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # autodiff
    # ------------------------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # first write: copy instead of zeros-then-add (g may be a
            # read-only broadcast view or borrowed buffer)
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar: fills ``grad`` on every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        # iterative topological sort; swin stacks are deep enough to overflow
        # python's recursion limit
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    # ------------------------------------------------------------------
    # elementwise arithmetic
    # ------------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add(self, -float(other))
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other, like=self), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    # method aliases used throughout the model code
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def take(self, indices, axis=0):
        return take(self, indices, axis=axis)

    def clip(self, lo, hi):
        return clip(self, lo, hi)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def relu(self):
        return relu(self)

    def gelu(self):
        return gelu(self)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Wrap ``x`` as a constant Tensor, matching ``like``'s dtype when given."""
    if isinstance(x, Tensor):
        return x
    arr = _coerce(x)
    if like is not None and arr.dtype != like.data.dtype:
        arr = arr.astype(like.data.dtype)
    return Tensor(arr)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ----------------------------------------------------------------------
# elementwise ops
# ----------------------------------------------------------------------
def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out_data = a.data + b.data

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._from_op(out_data, (a, b), _bw)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        s = float(b)
        out_data = a.data * s

        def _bw_scalar(g):
            if a.requires_grad:
                a._accumulate(g * s)

        return Tensor._from_op(out_data, (a,), _bw_scalar)

    b = as_tensor(b, like=a)
    out_data = a.data * b.data

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out_data, (a, b), _bw)


def div(a, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return mul(a, 1.0 / float(b))
    b = as_tensor(b, like=a)
    out_data = a.data / b.data

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor._from_op(out_data, (a, b), _bw)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    out_data = a.data**p

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1.0))

    return Tensor._from_op(out_data, (a,), _bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return Tensor._from_op(out_data, (a,), _bw)


def log(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return Tensor._from_op(out_data, (a,), _bw)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g / (2.0 * out_data))

    return Tensor._from_op(out_data, (a,), _bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    return Tensor._from_op(out_data, (a,), _bw)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact Gaussian-error-linear unit: x * Phi(x)."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out_data = (a.data * cdf).astype(a.data.dtype, copy=False)

    def _bw(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
            a._accumulate(g * (cdf + a.data * pdf))

    return Tensor._from_op(out_data, (a,), _bw)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is passed through inside the interval."""
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * ((a.data >= lo) & (a.data <= hi)))

    return Tensor._from_op(out_data, (a,), _bw)


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    """Matrix product; leading dimensions broadcast (numpy @ semantics)."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ _swap_last(b.data), a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(_swap_last(a.data) @ g, b.data.shape))

    return Tensor._from_op(out_data, (a, b), _bw)


# ----------------------------------------------------------------------
# reductions
# ----------------------------------------------------------------------
def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_expand_reduced(g, a.data.shape, axis, keepdims).copy())

    return Tensor._from_op(np.asarray(out_data), (a,), _bw)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(1, np.asarray(out_data).size)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_expand_reduced(g, a.data.shape, axis, keepdims) / count)

    return Tensor._from_op(np.asarray(out_data), (a,), _bw)


# ----------------------------------------------------------------------
# shape plumbing
# ----------------------------------------------------------------------
def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor._from_op(out_data, (a,), _bw)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = np.ascontiguousarray(a.data.transpose(axes))

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inv))

    return Tensor._from_op(out_data, (a,), _bw)


def getitem(a, key) -> Tensor:
    """Basic (slice/int/ellipsis) indexing; gradient scatters back into place."""
    a = as_tensor(a)
    out_data = a.data[key]
    if not isinstance(out_data, np.ndarray):
        out_data = np.asarray(out_data)

    def _bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] += g
            a._accumulate(full)

    return Tensor._from_op(np.ascontiguousarray(out_data), (a,), _bw)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather rows by integer index (duplicates allowed; grads accumulate)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out_data = np.take(a.data, idx, axis=axis)

    def _bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (slice(None),) * (axis % a.ndim) + (idx,), g)
            a._accumulate(full)

    return Tensor._from_op(out_data, (a,), _bw)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return Tensor._from_op(out_data, tuple(parts), _bw)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    expanded = [reshape(p, p.shape[:axis] + (1,) + p.shape[axis:]) for p in parts]
    return concat(expanded, axis=axis)


def roll(a, shifts: tuple[int, ...], axes: tuple[int, ...]) -> Tensor:
    """Cyclic shift along the given axes (used by shifted-window attention)."""
    a = as_tensor(a)
    out_data = np.roll(a.data, shifts, axis=axes)
    inv = tuple(-s for s in shifts)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(np.roll(g, inv, axis=axes))

    return Tensor._from_op(out_data, (a,), _bw)


def pad(a, pad_width: Sequence[tuple[int, int]]) -> Tensor:
    """Zero-pad per axis; gradient is the corresponding crop."""
    a = as_tensor(a)
    pw = tuple((int(lo), int(hi)) for lo, hi in pad_width)
    out_data = np.pad(a.data, pw)
    slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(pw, a.data.shape))

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g[slices])

    return Tensor._from_op(out_data, (a,), _bw)


# ----------------------------------------------------------------------
# neural-net primitives
# ----------------------------------------------------------------------
def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis`` (max subtraction)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        if a.requires_grad:
            inner = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate(out_data * (g - inner))

    return Tensor._from_op(out_data, (a,), _bw)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    x = as_tensor(x)
    gamma = as_tensor(gamma, like=x)
    beta = as_tensor(beta, like=x)
    if x.shape[-1] < 1:
        raise ShapeError("layer_norm needs a non-empty last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out_data = xhat * gamma.data + beta.data

    def _bw(g):
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.data.shape))
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.data.shape))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((gx - m1 - xhat * m2) * inv_std)

    return Tensor._from_op(out_data, (x, gamma, beta), _bw)


def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    """(B,C,H,W) -> columns (B, Ho*Wo, C*k*k), plus output extents."""
    b, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, k, k)
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, c * k * k)
    return np.ascontiguousarray(cols), ho, wo


def conv2d(x, w, b=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D cross-correlation.

    ``x``: (C_in, H, W) or (B, C_in, H, W); ``w``: (C_out, C_in, k, k) with k
    odd; ``padding`` defaults to k // 2 (same-size output at stride 1).
    """
    x = as_tensor(x)
    w = as_tensor(w, like=x)
    squeeze = x.ndim == 3
    if x.ndim not in (3, 4) or w.ndim != 4:
        raise ShapeError("conv2d expects x (B,C,H,W)/(C,H,W) and w (Co,Ci,k,k)")
    cout, cin, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    xd = x.data[None] if squeeze else x.data
    if xd.shape[1] != cin:
        raise ShapeError(f"conv2d channel mismatch: input {xd.shape[1]}, kernel {cin}")
    if padding is None:
        padding = k // 2
    batch, _, h, wdt = xd.shape
    if h + 2 * padding < k or wdt + 2 * padding < k:
        raise ShapeError("conv2d input smaller than kernel")
    cols, ho, wo = _im2col(xd, k, stride, padding)
    wm = w.data.reshape(cout, cin * k * k)
    out = cols @ wm.T  # (B, Ho*Wo, Cout)
    if b is not None:
        b = as_tensor(b, like=x)
        out = out + b.data
    out_data = out.transpose(0, 2, 1).reshape(batch, cout, ho, wo)
    if squeeze:
        out_data = out_data[0]

    parents = (x, w) if b is None else (x, w, b)

    def _bw(g):
        gm = g[None] if squeeze else g
        gcols = gm.reshape(batch, cout, ho * wo).transpose(0, 2, 1)  # (B, L, Cout)
        if b is not None and b.requires_grad:
            b._accumulate(gcols.sum(axis=(0, 1)).reshape(b.data.shape))
        if w.requires_grad:
            g2 = np.ascontiguousarray(gcols).reshape(-1, cout)
            gw = g2.T @ cols.reshape(-1, cin * k * k)
            w._accumulate(gw.reshape(w.data.shape))
        if x.requires_grad:
            gc = gcols @ wm  # (B, L, Cin*k*k)
            gc = gc.reshape(batch, ho, wo, cin, k, k).transpose(0, 3, 1, 2, 4, 5)
            hp, wp = h + 2 * padding, wdt + 2 * padding
            gx = np.zeros((batch, cin, hp, wp), dtype=g.dtype)
            for ki in range(k):
                for kj in range(k):
                    gx[:, :, ki : ki + ho * stride : stride, kj : kj + wo * stride : stride] += gc[
                        :, :, :, :, ki, kj
                    ]
            if padding:
                gx = gx[:, :, padding : padding + h, padding : padding + wdt]
            x._accumulate(gx if not squeeze else gx[0])

    return Tensor._from_op(out_data, parents, _bw)


def nearest_upsample2x(x) -> Tensor:
    """Replicate every pixel into a 2x2 block: (..., C, H, W) -> (..., C, 2H, 2W)."""
    x = as_tensor(x)
    if x.ndim not in (3, 4):
        raise ShapeError("nearest_upsample2x expects (C,H,W) or (B,C,H,W)")
    out_data = x.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def _bw(g):
        if x.requires_grad:
            s = g.shape
            blocks = g.reshape(s[:-2] + (s[-2] // 2, 2, s[-1] // 2, 2))
            x._accumulate(blocks.sum(axis=(-1, -3)))

    return Tensor._from_op(out_data, (x,), _bw)


def window_partition(x, window: int) -> Tensor:
    """Cut (H, W, C) or (B, H, W, C) into non-overlapping ``window``-sized tiles.

    Non-divisible extents are zero-padded on the right/bottom first; the
    matching crop happens in :func:`window_reverse`, so the round trip is the
    identity on the original region.  Output is (num_windows, window*window, C)
    for a single map, with the batch folded into the leading axis otherwise.
    """
    x = as_tensor(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError("window_partition expects (H,W,C) or (B,H,W,C)")
    b, h, w, c = x.shape
    ph = (-h) % window
    pw = (-w) % window
    if ph or pw:
        x = pad(x, ((0, 0), (0, ph), (0, pw), (0, 0)))
    hp, wp = h + ph, w + pw
    x = reshape(x, (b, hp // window, window, wp // window, window, c))
    x = transpose(x, (0, 1, 3, 2, 4, 5))
    return reshape(x, (b * (hp // window) * (wp // window), window * window, c))


def window_reverse(windows, window: int, h: int, w: int, batch: int | None = None) -> Tensor:
    """Inverse of :func:`window_partition` back to (h, w, C) / (batch, h, w, C)."""
    windows = as_tensor(windows)
    hp = h + ((-h) % window)
    wp = w + ((-w) % window)
    n_per_image = (hp // window) * (wp // window)
    total = windows.shape[0]
    if batch is None:
        if total % n_per_image:
            raise ShapeError("window count does not tile the requested extents")
        batch = total // n_per_image
        squeeze = batch == 1
    else:
        squeeze = False
        if batch * n_per_image != total:
            raise ShapeError("window count does not match batch and extents")
    c = windows.shape[-1]
    x = reshape(windows, (batch, hp // window, wp // window, window, window, c))
    x = transpose(x, (0, 1, 3, 2, 4, 5))
    x = reshape(x, (batch, hp, wp, c))
    if hp != h or wp != w:
        x = getitem(x, (slice(None), slice(0, h), slice(0, w), slice(None)))
    if squeeze:
        x = reshape(x, (h, w, c))
    return x
