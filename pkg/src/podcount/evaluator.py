"""Inference, the counting-metric battery, and overlay rendering.

Counting metrics over a test sequence of predicted counts P and ground-truth
counts G:

    mae    = mean |P - G|
    rmse   = sqrt(mean (P - G)^2)
    rmae   = mean(|P - G| / G)          (items with G = 0 are excluded)
    acc    = 1 - rmae
    rrmse  = sqrt(mean((P - G)^2 / G^2))
    r2     = 1 - sum((P - G)^2) / sum((P - mean(G))^2)
    pearson_r = standard product-moment correlation

Note the r2 denominator deliberately centers P on mean(G) rather than on
mean(P); it equals 1 exactly when P == G elementwise.  pearson_r is NaN when
it is undefined (n == 1, or a constant sequence).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .head import ProposalSet
from .model import PointProposalNetwork
from .tensor import Tensor, no_grad

TILE = 224
TILE_STRIDE = 192
DEDUP_RADIUS = 4.0  # px; cross-seam duplicates closer than this collapse

GT_COLOR = (0, 255, 0)
PRED_COLOR = (255, 0, 0)
DOT_RADIUS = 3


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    rmae: float
    acc: float
    rrmse: float
    r2: float
    pearson_r: float
    n: int

    def to_dict(self) -> dict:
        def clean(x):
            return None if (isinstance(x, float) and not math.isfinite(x)) else x

        return {
            "mae": self.mae, "rmse": self.rmse, "rmae": clean(self.rmae),
            "acc": clean(self.acc), "rrmse": clean(self.rrmse),
            "r2": clean(self.r2), "pearson_r": clean(self.pearson_r),
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def metrics(predicted, actual) -> MetricsReport:
    """Compute the full report for equal-length count sequences (n >= 1)."""
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    g = np.asarray(actual, dtype=np.float64).reshape(-1)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} predictions vs {g.shape[0]} actuals")
    n = p.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")

    err = p - g
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))

    nonzero = g != 0
    if not np.all(nonzero):
        warnings.warn(
            f"excluding {int((~nonzero).sum())} zero-count items from rMAE/rRMSE",
            stacklevel=2,
        )
    if nonzero.any():
        rel = err[nonzero] / g[nonzero]
        rmae = float(np.mean(np.abs(rel)))
        rrmse = float(np.sqrt(np.mean(rel * rel)))
    else:
        rmae = float("nan")
        rrmse = float("nan")
    acc = 1.0 - rmae

    ss_res = float(np.sum(err * err))
    ss_ref = float(np.sum((p - g.mean()) ** 2))
    if ss_res == 0.0:
        r2 = 1.0
    elif ss_ref == 0.0:
        r2 = float("-inf")
    else:
        r2 = 1.0 - ss_res / ss_ref

    if n < 2:
        pearson = float("nan")
    else:
        pc = p - p.mean()
        gc = g - g.mean()
        denom = math.sqrt(float(np.sum(pc * pc))) * math.sqrt(float(np.sum(gc * gc)))
        pearson = float(np.sum(pc * gc) / denom) if denom > 0 else float("nan")

    return MetricsReport(mae=mae, rmse=rmse, rmae=rmae, acc=acc, rrmse=rrmse,
                         r2=r2, pearson_r=pearson, n=n)


# ----------------------------------------------------------------------
# inference
# ----------------------------------------------------------------------
def _tile_starts(extent: int) -> list[int]:
    """Window origins covering [0, extent) with TILE windows at TILE_STRIDE."""
    if extent <= TILE:
        return [0]
    starts = list(range(0, extent - TILE, TILE_STRIDE))
    starts.append(extent - TILE)
    return starts


def _dedup(points: np.ndarray, confs: np.ndarray, tiles: np.ndarray) -> np.ndarray:
    """Keep-mask dropping near-duplicates that came from different tiles.

    Scans in descending confidence; a point is dropped when an already-kept
    point from another tile lies within DEDUP_RADIUS.
    """
    order = np.argsort(-confs, kind="stable")
    kept_idx: list[int] = []
    keep = np.zeros(len(points), dtype=bool)
    for i in order:
        if kept_idx:
            kept_pts = points[kept_idx]
            d2 = ((kept_pts - points[i]) ** 2).sum(axis=1)
            close = d2 < DEDUP_RADIUS**2
            if np.any(close & (tiles[np.asarray(kept_idx)] != tiles[i])):
                continue
        keep[i] = True
        kept_idx.append(i)
    return keep


def infer(model: PointProposalNetwork, image: np.ndarray,
          threshold: float = 0.5) -> tuple[ProposalSet, int]:
    """Proposals with confidence strictly above ``threshold``, plus the count.

    Images up to 224 px with extents divisible by 16 run in one pass; larger
    or oddly-sized images are covered by overlapping 224 tiles at stride 192,
    with near-duplicate points across seams collapsed onto the higher
    confidence.  Images smaller than a tile in either direction are zero-
    padded on the right/bottom; proposals landing in the padding are dropped.

    Returns ``(proposals, count)``; ``proposals`` is None when nothing
    survives the threshold (tensors cannot be zero-length).
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {image.shape}")
    h, w = image.shape[1:]

    tiled = not (h <= TILE and w <= TILE and h % 16 == 0 and w % 16 == 0)
    with no_grad():
        if not tiled:
            props = model.propose(Tensor(image))[0]
            points = props.points.data
            confs = props.confidences.data
            tiles_of = np.zeros(len(confs), dtype=np.int64)
        else:
            ys = _tile_starts(h)
            xs = _tile_starts(w)
            patches = []
            origins = []
            for y0 in ys:
                for x0 in xs:
                    patch = np.zeros((3, TILE, TILE), dtype=image.dtype)
                    sub = image[:, y0: y0 + TILE, x0: x0 + TILE]
                    patch[:, : sub.shape[1], : sub.shape[2]] = sub
                    patches.append(patch)
                    origins.append((x0, y0))
            prop_sets = model.propose(Tensor(np.stack(patches)))
            points_list, confs_list, tile_ids = [], [], []
            for t, (props, (x0, y0)) in enumerate(zip(prop_sets, origins)):
                pts = props.points.data + np.array([x0, y0], dtype=np.float64)
                points_list.append(pts)
                confs_list.append(props.confidences.data)
                tile_ids.append(np.full(len(props), t, dtype=np.int64))
            points = np.concatenate(points_list)
            confs = np.concatenate(confs_list)
            tiles_of = np.concatenate(tile_ids)

    above = confs > threshold
    points, confs, tiles_of = points[above], confs[above], tiles_of[above]
    if tiled:
        # tile padding manufactures proposals outside the real image; drop
        # them, then collapse cross-seam duplicates
        inside = (
            (points[:, 0] >= 0) & (points[:, 0] < w)
            & (points[:, 1] >= 0) & (points[:, 1] < h)
        )
        points, confs, tiles_of = points[inside], confs[inside], tiles_of[inside]
        if len(points) and tiles_of.max() > 0:
            keep = _dedup(points, confs, tiles_of)
            points, confs = points[keep], confs[keep]

    if len(points) == 0:
        # ProposalSet cannot be empty (tensor extents >= 1); signal via count
        filtered = None
    else:
        filtered = ProposalSet(points, confs, extents=(h, w))
    count = int(len(points))
    return filtered, count


def evaluate_counts(model: PointProposalNetwork, items, threshold: float = 0.5) -> MetricsReport:
    """Run inference over annotated items and score predicted vs true counts."""
    predicted = []
    actual = []
    for item in items:
        _, count = infer(model, item.image, threshold=threshold)
        predicted.append(count)
        actual.append(item.count)
    return metrics(predicted, actual)


# ----------------------------------------------------------------------
# rendering / export
# ----------------------------------------------------------------------
def _draw_dots(arr: np.ndarray, points, color: tuple[int, int, int]) -> None:
    h, w = arr.shape[:2]
    for x, y in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        x_lo = int(max(0, np.floor(x - DOT_RADIUS)))
        x_hi = int(min(w - 1, np.ceil(x + DOT_RADIUS)))
        y_lo = int(max(0, np.floor(y - DOT_RADIUS)))
        y_hi = int(min(h - 1, np.ceil(y + DOT_RADIUS)))
        ys, xs = np.mgrid[y_lo: y_hi + 1, x_lo: x_hi + 1]
        mask = (xs - x) ** 2 + (ys - y) ** 2 <= DOT_RADIUS**2
        arr[y_lo: y_hi + 1, x_lo: x_hi + 1][mask] = color


def render_overlay(image: np.ndarray, gt_points, pred_points,
                   out_path: str | Path) -> None:
    """Write a PNG with exact-green ground-truth dots, exact-red predicted
    dots (3 px radius) and a count stamp in the top-left corner."""
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    arr = np.ascontiguousarray(arr.transpose(1, 2, 0))
    _draw_dots(arr, gt_points, GT_COLOR)
    _draw_dots(arr, pred_points, PRED_COLOR)

    im = Image.fromarray(arr)
    draw = ImageDraw.Draw(im)
    n_gt = len(np.asarray(gt_points).reshape(-1, 2))
    n_pred = len(np.asarray(pred_points).reshape(-1, 2))
    text = f"gt {n_gt}  pred {n_pred}"
    font = ImageFont.load_default()
    box = draw.textbbox((2, 2), text, font=font)
    draw.rectangle((0, 0, box[2] + 2, box[3] + 2), fill=(0, 0, 0))
    draw.text((2, 2), text, fill=(255, 255, 255), font=font)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    im.save(out_path)


def write_predictions_csv(path: str | Path, image_id: str,
                          proposals: ProposalSet | None) -> None:
    """CSV export with columns image_id, x, y, confidence."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "x", "y", "confidence"])
        if proposals is not None:
            for prop in proposals.proposals:
                writer.writerow([image_id, repr(prop.point[0]), repr(prop.point[1]),
                                 repr(prop.confidence)])
