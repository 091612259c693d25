"""The full point-proposal network: extractor, fusion, prediction heads."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .backbone import Backbone, BackboneConfig, FeatureMap, variant_config
from .head import ProposalHead, ProposalSet, generate_proposals
from .layers import Module
from .neck import FeatureFusion
from .tensor import Tensor

DECODE_STRIDE = 8


class PointProposalNetwork(Module):
    """Maps an RGB image batch to per-anchor point offsets and confidences."""

    def __init__(self, backbone_cfg: BackboneConfig, anchors_per_cell: int = 1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(0)
        self.backbone_cfg = backbone_cfg
        self.anchors_per_cell = anchors_per_cell
        self.dtype = dtype
        c2 = 2 * backbone_cfg.embed_dim
        self.backbone = Backbone(backbone_cfg, rng, dtype=dtype)
        self.neck = FeatureFusion(c2, rng, dtype=dtype)
        self.head = ProposalHead(c2, anchors_per_cell, rng, dtype=dtype)

    @classmethod
    def from_variant(cls, variant: str, anchors_per_cell: int = 1,
                     rng: np.random.Generator | None = None, dtype=np.float32,
                     window: int = 7, rel_pos_bias: bool = True) -> "PointProposalNetwork":
        return cls(variant_config(variant, window=window, rel_pos_bias=rel_pos_bias),
                   anchors_per_cell=anchors_per_cell, rng=rng, dtype=dtype)

    def features(self, images: Tensor | np.ndarray) -> tuple[FeatureMap, FeatureMap, FeatureMap]:
        f2, f3 = self.backbone(images)
        fs = self.neck(f2, f3)
        return f2, f3, fs

    def forward(self, images: Tensor | np.ndarray) -> tuple[Tensor, Tensor]:
        """Offsets (B, h, w, 2K) and confidences (B, h, w, K) on the stride-8 grid."""
        _, _, fs = self.features(images)
        return self.head(fs)

    def propose(self, images: Tensor | np.ndarray) -> list[ProposalSet]:
        """One ProposalSet per batch element, in input order."""
        x = T.as_tensor(images)
        squeeze = x.ndim == 3
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
        offsets, confidences = self.forward(x)
        batch = x.shape[0]
        return [
            generate_proposals(offsets[i], confidences[i], stride=DECODE_STRIDE)
            for i in range(batch)
        ]
