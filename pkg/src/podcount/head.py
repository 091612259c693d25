"""Prediction heads: per-anchor point offsets and 2-class confidences.

Both branches share the same topology (three 3x3 convolutions with ReLU
between them, no activation after the last).  The regression branch emits
(dx, dy) pixel offsets per anchor; the classification branch emits two
logits per anchor that a softmax turns into a confidence (the positive-class
probability).  Proposal assembly places anchor points at cell centers on the
stride-8 grid and adds the offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import FeatureMap
from .layers import Conv2d, Module
from .tensor import ShapeError, Tensor


@dataclass
class Proposal:
    """One predicted point in input-image coordinates plus its confidence."""

    point: tuple[float, float]
    confidence: float


class ProposalSet:
    """All proposals for one image, tensor-backed so gradients can flow.

    ``points`` is (M, 2) in (x, y) pixels, ``confidences`` is (M,) in (0, 1).
    Ordering is row-major by grid cell, then anchor index within the cell.
    """

    def __init__(self, points: Tensor | np.ndarray, confidences: Tensor | np.ndarray,
                 extents: tuple[int, int]):
        self.points = T.as_tensor(points)
        self.confidences = T.as_tensor(confidences)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ShapeError(f"points must be (M, 2), got {self.points.shape}")
        if self.confidences.shape != (self.points.shape[0],):
            raise ShapeError("confidences must align with points")
        self.extents = (int(extents[0]), int(extents[1]))  # (H, W) in pixels

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def proposals(self) -> list[Proposal]:
        pts = self.points.data
        confs = self.confidences.data
        return [
            Proposal((float(x), float(y)), float(c))
            for (x, y), c in zip(pts, confs)
        ]


class ConvBranch(Module):
    """The shared three-layer topology used by both prediction branches."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, dtype=np.float32):
        hidden = in_ch
        self.conv1 = Conv2d(in_ch, hidden, 3, rng, init="kaiming", dtype=dtype)
        self.conv2 = Conv2d(hidden, hidden, 3, rng, init="kaiming", dtype=dtype)
        # small final init keeps offsets near zero / confidences near 0.5 at start
        self.conv3 = Conv2d(hidden, out_ch, 3, rng, init="trunc", dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = T.relu(self.conv1(x))
        x = T.relu(self.conv2(x))
        return self.conv3(x)


class ProposalHead(Module):
    def __init__(self, channels: int, anchors_per_cell: int, rng: np.random.Generator,
                 dtype=np.float32):
        if anchors_per_cell < 1:
            raise ValueError("anchors_per_cell must be >= 1")
        self.anchors_per_cell = anchors_per_cell
        self.regression = ConvBranch(channels, 2 * anchors_per_cell, rng, dtype=dtype)
        self.classification = ConvBranch(channels, 2 * anchors_per_cell, rng, dtype=dtype)

    def _run(self, branch: ConvBranch, fs: FeatureMap) -> Tensor:
        x = fs.tensor
        squeeze = x.ndim == 3
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
        x = T.transpose(x, (0, 3, 1, 2))
        x = branch(x)
        x = T.transpose(x, (0, 2, 3, 1))
        if squeeze:
            x = T.reshape(x, x.shape[1:])
        return x

    def offsets(self, fs: FeatureMap) -> Tensor:
        """(..., h, w, 2K) pixel offsets, (dx, dy) pairs per anchor."""
        return self._run(self.regression, fs)

    def confidences(self, fs: FeatureMap) -> Tensor:
        """(..., h, w, K) positive-class probabilities in (0, 1)."""
        logits = self._run(self.classification, fs)
        shape = logits.shape
        k = self.anchors_per_cell
        logits = T.reshape(logits, shape[:-1] + (k, 2))
        probs = T.softmax(logits, axis=-1)
        return T.reshape(probs[..., 1], shape[:-1] + (k,))

    def forward(self, fs: FeatureMap) -> tuple[Tensor, Tensor]:
        return self.offsets(fs), self.confidences(fs)


def generate_proposals(offsets: Tensor, confidences: Tensor, stride: int = 8) -> ProposalSet:
    """Turn one image's offset/confidence grids into a flat proposal list.

    The anchor for grid cell (r, c) sits at ((c + 0.5) * stride,
    (r + 0.5) * stride); each proposal is anchor + offset.  Proposals are
    ordered row-major by cell, anchors innermost, so the layout is
    independent of image content.
    """
    offsets = T.as_tensor(offsets)
    confidences = T.as_tensor(confidences)
    if offsets.ndim != 3 or confidences.ndim != 3:
        raise ShapeError("expected per-image grids (h, w, 2K) and (h, w, K)")
    h, w, two_k = offsets.shape
    k = two_k // 2
    if confidences.shape != (h, w, k):
        raise ShapeError(
            f"confidence grid {confidences.shape} does not align with offsets {offsets.shape}"
        )
    m = h * w * k
    dx = T.reshape(offsets[:, :, 0::2], (m, 1))
    dy = T.reshape(offsets[:, :, 1::2], (m, 1))
    delta = T.concat([dx, dy], axis=1)

    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    ax = (cols + 0.5) * stride
    ay = (rows + 0.5) * stride
    anchors = np.stack([ax, ay], axis=-1)  # (h, w, 2)
    anchors = np.repeat(anchors.reshape(h * w, 1, 2), k, axis=1).reshape(m, 2)
    anchors_t = Tensor(anchors.astype(offsets.dtype))

    points = delta + anchors_t
    confs = T.reshape(confidences, (m,))
    return ProposalSet(points, confs, extents=(h * stride, w * stride))
