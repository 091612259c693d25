"""Training objective: localization distance plus weighted classification.

The localization term is the mean squared Euclidean distance over matched
pairs (px^2).  The classification term is a negative log-likelihood that
drives matched proposals toward confidence 1 and the remaining (background)
proposals toward 0, the background sum weighted by ``lambda1`` and the whole
normalized by the proposal count M.  The combined objective is
``loc + lambda2 * cls``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

CONF_EPS = 1e-7  # log clamp; keeps saturated confidences finite


@dataclass
class LossConfig:
    lambda1: float = 2e-4  # weight on the background (negative) term
    lambda2: float = 0.5   # weight on the classification loss

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class LossReport:
    loc: float
    cls: float
    total: float


def loc_loss(gt_points, matched_points: Tensor | np.ndarray) -> Tensor:
    """Mean squared Euclidean distance over matched pairs; 0 when no pairs.

    ``gt_points[i]`` and ``matched_points[i]`` must belong to the same pair,
    i.e. the caller reorders proposals by the match before calling.
    """
    gt = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    if gt.shape[0] == 0:
        return Tensor(np.zeros((), dtype=np.float64))
    pred = T.as_tensor(matched_points)
    diff = pred - Tensor(gt.astype(pred.dtype))
    return T.tsum(diff * diff) / gt.shape[0]


def cls_loss(confidences: Tensor | np.ndarray, positives, cfg: LossConfig) -> Tensor:
    """Confidence NLL over all M proposals, positives listed by index.

    Confidences are clamped to [CONF_EPS, 1 - CONF_EPS] before the logs, so
    saturated predictions contribute a large finite penalty instead of an
    infinite one.
    """
    c = T.as_tensor(confidences)
    m = c.shape[0]
    pos = np.asarray(positives, dtype=np.int64).reshape(-1)
    neg_mask = np.ones(m, dtype=bool)
    if pos.size:
        neg_mask[pos] = False
    neg = np.nonzero(neg_mask)[0]

    c = T.clip(c, CONF_EPS, 1.0 - CONF_EPS)
    total = Tensor(np.zeros((), dtype=c.dtype))
    if pos.size:
        total = total + T.tsum(T.log(T.take(c, pos)))
    if neg.size and cfg.lambda1 > 0:
        total = total + cfg.lambda1 * T.tsum(T.log(1.0 - T.take(c, neg)))
    return -total / m


def total_loss(loc: Tensor | float, cls: Tensor | float, cfg: LossConfig) -> Tensor:
    """``loc + lambda2 * cls``."""
    loc = T.as_tensor(loc)
    cls = T.as_tensor(cls, like=loc)
    return loc + cfg.lambda2 * cls
