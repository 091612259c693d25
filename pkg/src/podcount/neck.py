"""Fusion of the stride-16 map into the stride-8 map.

The deeper map is upsampled 2x by nearest neighbor, its channels are aligned
from 4C down to 2C by a learned 1x1 projection, and the result is added
elementwise to the lateral stride-8 map.  The projection is the minimal
change that makes the addition well-typed; with its bias zero and a zero
deep map the fusion is the identity on the lateral map.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .backbone import FeatureMap
from .layers import Module, Parameter, trunc_normal
from .tensor import ShapeError

FusedMap = FeatureMap


class FeatureFusion(Module):
    def __init__(self, lateral_channels: int, rng: np.random.Generator, dtype=np.float32):
        # 1x1 conv expressed as a channel matmul on (..., H, W, C) maps
        self.proj_weight = Parameter(
            trunc_normal(rng, (2 * lateral_channels, lateral_channels), dtype=dtype)
        )
        self.proj_bias = Parameter(np.zeros(lateral_channels, dtype=dtype))

    def forward(self, f2: FeatureMap, f3: FeatureMap) -> FusedMap:
        return fuse(f2, f3, self)


def fuse(f2: FeatureMap, f3: FeatureMap, params: FeatureFusion) -> FusedMap:
    """``F_s = F2 + project(upsample2x(F3))`` at stride 8.

    ``f3`` spatial extents must be exactly half of ``f2``'s, and ``f3`` must
    carry twice the channels (4C vs 2C).
    """
    h2, w2 = f2.spatial
    h3, w3 = f3.spatial
    if (h3 * 2, w3 * 2) != (h2, w2):
        raise ShapeError(
            f"deep map {h3}x{w3} is not half of lateral map {h2}x{w2}"
        )
    if f3.channels != 2 * f2.channels:
        raise ShapeError(
            f"expected deep channels {2 * f2.channels}, got {f3.channels}"
        )
    x = f3.tensor
    squeeze = x.ndim == 3
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    x = T.transpose(x, (0, 3, 1, 2))  # to (B, 4C, h, w) for the upsampler
    x = T.nearest_upsample2x(x)
    x = T.transpose(x, (0, 2, 3, 1))  # back to (B, 2h, 2w, 4C)
    x = T.matmul(x, params.proj_weight) + params.proj_bias
    if squeeze:
        x = T.reshape(x, x.shape[1:])
    return FusedMap(f2.tensor + x, 8)
