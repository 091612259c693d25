"""Hierarchical windowed-attention feature extractor.

A 224x224 RGB crop is cut into 4x4 patches, embedded, and refined through
three stages of window-attention transformer blocks with patch merging in
between.  The extractor exposes the stride-8 and stride-16 feature maps that
the fusion neck consumes.  Four standard size variants are provided (T/S/B/L)
plus free-form configs for desk-scale experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import LayerNorm, Linear, Module, Parameter, trunc_normal
from .tensor import ShapeError, Tensor


# (embed dim C, per-stage block counts) per size variant
VARIANTS: dict[str, tuple[int, tuple[int, int, int]]] = {
    "T": (96, (2, 2, 6)),
    "S": (96, (2, 2, 18)),
    "B": (128, (2, 2, 18)),
    "L": (192, (2, 2, 18)),
}


def _default_heads(embed_dim: int) -> tuple[int, int, int]:
    # one head per 32 channels at each stage, floored at 1 for tiny configs
    return tuple(max(1, (embed_dim << s) // 32) for s in range(3))


@dataclass
class BackboneConfig:
    embed_dim: int = 96
    depths: tuple[int, int, int] = (2, 2, 6)
    window: int = 7
    heads: tuple[int, int, int] | None = None
    mlp_ratio: float = 4.0
    rel_pos_bias: bool = True

    def __post_init__(self):
        if len(self.depths) != 3:
            raise ValueError("depths must list three stages")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.heads is None:
            self.heads = _default_heads(self.embed_dim)
        self.depths = tuple(int(d) for d in self.depths)
        self.heads = tuple(int(h) for h in self.heads)
        for s, h in enumerate(self.heads):
            if (self.embed_dim << s) % h:
                raise ValueError(
                    f"stage {s} channels {self.embed_dim << s} not divisible by {h} heads"
                )


def variant_config(variant: str, window: int = 7, rel_pos_bias: bool = True) -> BackboneConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {sorted(VARIANTS)}")
    c, depths = VARIANTS[variant]
    return BackboneConfig(embed_dim=c, depths=depths, window=window, rel_pos_bias=rel_pos_bias)


@dataclass
class FeatureMap:
    """A feature tensor plus the input-pixels-per-cell stride it lives at."""

    tensor: Tensor
    stride: int

    def __post_init__(self):
        if self.stride not in (4, 8, 16):
            raise ValueError(f"stride must be 4, 8 or 16, got {self.stride}")

    @property
    def spatial(self) -> tuple[int, int]:
        s = self.tensor.shape
        return (s[-3], s[-2])

    @property
    def channels(self) -> int:
        return self.tensor.shape[-1]


def patch_split(image: Tensor | np.ndarray) -> Tensor:
    """Cut (3, H, W) or (B, 3, H, W) into a (H/4, W/4, 48) token grid.

    Token feature order is channel-major: element c*16 + dy*4 + dx holds
    channel c of the pixel at row offset dy, column offset dx inside the
    4x4 patch.
    """
    x = T.as_tensor(image)
    squeeze = x.ndim == 3
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected (B,3,H,W) or (3,H,W), got {x.shape}")
    b, c, h, w = x.shape
    if h % 4 or w % 4:
        raise ShapeError(f"extents must be divisible by 4, got {h}x{w}")
    x = T.reshape(x, (b, c, h // 4, 4, w // 4, 4))
    x = T.transpose(x, (0, 2, 4, 1, 3, 5))  # (B, H/4, W/4, C, 4, 4)
    x = T.reshape(x, (b, h // 4, w // 4, 48))
    if squeeze:
        x = T.reshape(x, x.shape[1:])
    return x


def _relative_position_index(window: int) -> np.ndarray:
    """(N, N) lookup into the (2w-1)^2 relative-offset bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    flat = coords.reshape(2, -1)  # (2, N)
    rel = flat[:, :, None] - flat[:, None, :]  # (2, N, N)
    rel = rel.transpose(1, 2, 0) + (window - 1)
    return (rel[:, :, 0] * (2 * window - 1) + rel[:, :, 1]).astype(np.int64)


def _shift_mask(hp: int, wp: int, window: int, sh: int, sw: int, dtype) -> np.ndarray:
    """Additive (-100/0) mask that stops attention across cyclic-shift seams.

    ``sh``/``sw`` are the per-axis shifts (either can be 0 when that axis is
    a single window wide and therefore unshifted).
    """
    img = np.zeros((hp, wp), dtype=np.int64)
    h_spans = (slice(0, -window), slice(-window, -sh), slice(-sh, None)) if sh else (slice(None),)
    w_spans = (slice(0, -window), slice(-window, -sw), slice(-sw, None)) if sw else (slice(None),)
    region = 0
    for hs in h_spans:
        for ws in w_spans:
            img[hs, ws] = region
            region += 1
    tiles = img.reshape(hp // window, window, wp // window, window)
    tiles = tiles.transpose(0, 2, 1, 3).reshape(-1, window * window)
    mask = np.where(tiles[:, None, :] != tiles[:, :, None], -100.0, 0.0)
    return mask.astype(dtype)


class WindowAttention(Module):
    """Multi-head self-attention inside each window, with relative position bias."""

    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator,
                 rel_pos_bias: bool = True, dtype=np.float32):
        self.heads = heads
        self.window = window
        self.head_dim = dim // heads
        self.scale = self.head_dim**-0.5
        self.query = Linear(dim, dim, rng, dtype=dtype)
        self.key = Linear(dim, dim, rng, dtype=dtype)
        self.value = Linear(dim, dim, rng, dtype=dtype)
        self.proj = Linear(dim, dim, rng, dtype=dtype)
        if rel_pos_bias:
            n_offsets = (2 * window - 1) ** 2
            self.bias_table = Parameter(trunc_normal(rng, (n_offsets, heads), dtype=dtype))
            self._bias_index = _relative_position_index(window).reshape(-1)
        else:
            self.bias_table = None
            self._bias_index = None

    def forward(self, windows: Tensor, mask: np.ndarray | None, batch: int) -> Tensor:
        bw, n, c = windows.shape
        h, hd = self.heads, self.head_dim

        def split_heads(t: Tensor) -> Tensor:  # (B*, N, C) -> (B*, h, N, hd)
            return T.transpose(T.reshape(t, (bw, n, h, hd)), (0, 2, 1, 3))

        q = split_heads(self.query(windows))
        k = split_heads(self.key(windows))
        v = split_heads(self.value(windows))
        scores = T.matmul(q * self.scale, T.transpose(k, (0, 1, 3, 2)))
        if self.bias_table is not None:
            bias = T.take(self.bias_table, self._bias_index, axis=0)  # (N*N, h)
            bias = T.transpose(T.reshape(bias, (n, n, h)), (2, 0, 1))
            scores = scores + T.reshape(bias, (1, h, n, n))
        if mask is not None:
            nw = mask.shape[0]
            scores = T.reshape(scores, (batch, nw, h, n, n))
            scores = scores + Tensor(mask[None, :, None])
            scores = T.reshape(scores, (bw, h, n, n))
        attn = T.softmax(scores, axis=-1)
        out = T.matmul(attn, v)  # (B*, h, N, hd)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (bw, n, c))
        return self.proj(out)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        self.fc1 = Linear(dim, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class SwinBlock(Module):
    """Pre-norm transformer block over (shifted) windows.

    ``shift`` is 0 or window // 2; consecutive blocks in a stage alternate so
    information crosses window boundaries.  With the attention and MLP output
    projections zeroed the block is the identity (pure residual path).
    """

    def __init__(self, dim: int, heads: int, window: int, shift: int,
                 rng: np.random.Generator, mlp_ratio: float = 4.0,
                 rel_pos_bias: bool = True, dtype=np.float32):
        if shift not in (0, window // 2):
            raise ValueError(f"shift must be 0 or window//2, got {shift}")
        self.window = window
        self.shift = shift
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.attn = WindowAttention(dim, heads, window, rng, rel_pos_bias, dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, dtype=dtype)
        self._mask_cache: dict[tuple[int, int, int, int], np.ndarray] = {}
        self._dtype = dtype

    def forward(self, x: Tensor) -> Tensor:
        b, height, width, _ = x.shape
        w = self.window
        ph, pw = (-height) % w, (-width) % w
        hp, wp = height + ph, width + pw
        # shifting a single-window axis would only wall tokens off from each
        # other, so the shift applies per axis only where there are seams
        sh = self.shift if hp > w else 0
        sw = self.shift if wp > w else 0

        y = self.norm1(x)
        if ph or pw:
            y = T.pad(y, ((0, 0), (0, ph), (0, pw), (0, 0)))
        mask = None
        if sh or sw:
            y = T.roll(y, (-sh, -sw), (1, 2))
            key = (hp, wp, sh, sw)
            if key not in self._mask_cache:
                self._mask_cache[key] = _shift_mask(hp, wp, w, sh, sw, self._dtype)
            mask = self._mask_cache[key]
        windows = T.window_partition(y, w)
        attended = self.attn(windows, mask, batch=b)
        y = T.window_reverse(attended, w, hp, wp, batch=b)
        if sh or sw:
            y = T.roll(y, (sh, sw), (1, 2))
        if ph or pw:
            y = y[:, :height, :width, :]
        x = x + y
        return x + self.mlp(self.norm2(x))


class PatchMerging(Module):
    """Concatenate 2x2 neighborhoods (4c), layer-norm, project to 2c.

    Neighbor order in the concatenation is (dy, dx) = (0,0), (0,1), (1,0),
    (1,1).
    """

    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float32):
        self.norm = LayerNorm(4 * dim, dtype=dtype)
        self.reduction = Linear(4 * dim, 2 * dim, rng, bias=False, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        b, height, width, c = x.shape
        if height % 2 or width % 2:
            raise ShapeError(f"patch merging needs even extents, got {height}x{width}")
        x = T.reshape(x, (b, height // 2, 2, width // 2, 2, c))
        x = T.transpose(x, (0, 1, 3, 2, 4, 5))
        x = T.reshape(x, (b, height // 2, width // 2, 4 * c))
        return self.reduction(self.norm(x))


class Backbone(Module):
    """Three-stage feature extractor emitting stride-8 and stride-16 maps."""

    def __init__(self, config: BackboneConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        c = config.embed_dim
        self.embed = Linear(48, c, rng, dtype=dtype)
        self.embed_norm = LayerNorm(c, dtype=dtype)
        self.stages: list[list[SwinBlock]] = []
        self.merges: list[PatchMerging] = []
        for s, depth in enumerate(config.depths):
            dim = c << s
            blocks = [
                SwinBlock(
                    dim,
                    config.heads[s],
                    config.window,
                    0 if i % 2 == 0 else config.window // 2,
                    rng,
                    mlp_ratio=config.mlp_ratio,
                    rel_pos_bias=config.rel_pos_bias,
                    dtype=dtype,
                )
                for i in range(depth)
            ]
            self.stages.append(blocks)
            if s < 2:
                self.merges.append(PatchMerging(dim, rng, dtype=dtype))
        self.norm_f2 = LayerNorm(2 * c, dtype=dtype)
        self.norm_f3 = LayerNorm(4 * c, dtype=dtype)

    def forward(self, image: Tensor | np.ndarray) -> tuple[FeatureMap, FeatureMap]:
        x = T.as_tensor(image)
        squeeze = x.ndim == 3
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
        _, _, h, w = x.shape
        if h % 16 or w % 16:
            raise ShapeError(f"input extents must be multiples of 16, got {h}x{w}")
        x = patch_split(x)
        x = self.embed_norm(self.embed(x))
        for block in self.stages[0]:
            x = block(x)
        x = self.merges[0](x)
        for block in self.stages[1]:
            x = block(x)
        f2 = self.norm_f2(x)
        x = self.merges[1](x)
        for block in self.stages[2]:
            x = block(x)
        f3 = self.norm_f3(x)
        if squeeze:
            f2 = T.reshape(f2, f2.shape[1:])
            f3 = T.reshape(f3, f3.shape[1:])
        return FeatureMap(f2, 8), FeatureMap(f3, 16)
