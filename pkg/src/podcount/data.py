"""Dot-annotated image handling: parsing, splits, augmentation, synthesis.

Annotations use the Labelme point-shape subset: one JSON per image with
``imagePath``, ``imageWidth``, ``imageHeight`` and ``shapes`` entries of
``shape_type == "point"``.  Unknown extra fields are ignored; non-point
shapes are rejected.  Images are 8-bit RGB PNG or JPEG, held in memory as
float arrays of shape (3, H, W) in [0, 1].
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

CROP_SIZE = 224


class AnnotationError(ValueError):
    """Malformed or inconsistent annotation content."""


@dataclass
class AnnotatedImage:
    """An RGB image with its ground-truth point set.

    ``image`` is (3, H, W) float in [0, 1]; ``points`` is (N, 2) float64 in
    (x, y) pixel coordinates with 0 <= x < W and 0 <= y < H.
    """

    image: np.ndarray
    points: np.ndarray
    id: str

    def __post_init__(self):
        self.image = np.asarray(self.image)
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be (3, H, W), got {self.image.shape}")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        h, w = self.image.shape[1:]
        if self.points.size:
            x, y = self.points[:, 0], self.points[:, 1]
            bad = np.nonzero((x < 0) | (x >= w) | (y < 0) | (y >= h))[0]
            if bad.size:
                raise ValueError(
                    f"point {bad[0]} at {tuple(self.points[bad[0]])} outside {w}x{h} image"
                )

    @property
    def count(self) -> int:
        return self.points.shape[0]


@dataclass
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        r = tuple(float(x) for x in self.ratios)
        if len(r) != 3 or any(not 0.0 <= x <= 1.0 for x in r):
            raise ValueError("ratios must be three values in [0, 1]")
        if abs(sum(r) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(r)}")
        self.ratios = r


@dataclass
class AnnotationRecord:
    """Parsed annotation metadata; pixels are loaded separately."""

    image_path: str
    width: int
    height: int
    points: np.ndarray
    id: str = ""


def parse_annotations(json_text: str, record_id: str = "") -> AnnotationRecord:
    """Parse one Labelme-style point annotation document.

    Raises :class:`AnnotationError` naming the offending field for missing
    keys, for non-point shapes, and (with the shape index) for points outside
    the image extents.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise AnnotationError(f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise AnnotationError("annotation document must be a JSON object")
    for key in ("imagePath", "imageWidth", "imageHeight", "shapes"):
        if key not in doc:
            raise AnnotationError(f"missing field {key!r}")
    width = int(doc["imageWidth"])
    height = int(doc["imageHeight"])
    points = []
    for i, shape in enumerate(doc["shapes"]):
        if "shape_type" not in shape:
            raise AnnotationError(f"shape {i}: missing field 'shape_type'")
        if shape["shape_type"] != "point":
            raise AnnotationError(
                f"shape {i}: shape_type {shape['shape_type']!r} not supported (points only)"
            )
        if "points" not in shape:
            raise AnnotationError(f"shape {i}: missing field 'points'")
        coords = shape["points"]
        try:
            (xy,) = coords
            x, y = float(xy[0]), float(xy[1])
        except (TypeError, ValueError) as e:
            raise AnnotationError(
                f"shape {i}: point shape must hold exactly one [x, y]"
            ) from e
        if not (0 <= x < width and 0 <= y < height):
            raise AnnotationError(
                f"shape {i}: point ({x}, {y}) outside {width}x{height} image"
            )
        points.append((x, y))
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return AnnotationRecord(image_path=str(doc["imagePath"]), width=width,
                            height=height, points=pts, id=record_id)


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit RGB image into a (3, H, W) float32 array in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write a (3, H, W) float array in [0, 1] as 8-bit RGB PNG/JPEG."""
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)


def load_annotated_image(json_path: str | Path) -> AnnotatedImage:
    """Load one annotation JSON plus its image (path resolved next to the JSON)."""
    json_path = Path(json_path)
    record = parse_annotations(json_path.read_text(encoding="utf-8"),
                               record_id=json_path.stem)
    image = load_image(json_path.parent / record.image_path)
    h, w = image.shape[1:]
    if (h, w) != (record.height, record.width):
        raise AnnotationError(
            f"{json_path.name}: image is {w}x{h} but annotation says "
            f"{record.width}x{record.height}"
        )
    return AnnotatedImage(image=image, points=record.points, id=record.id)


def load_dataset(data_dir: str | Path) -> list[AnnotatedImage]:
    """Load every .json annotation under ``data_dir`` (sorted by name)."""
    data_dir = Path(data_dir)
    items = [load_annotated_image(p) for p in sorted(data_dir.glob("*.json"))]
    if not items:
        raise AnnotationError(f"no annotation files found in {data_dir}")
    return items


def split_dataset(ids: list[str], spec: SplitSpec) -> tuple[list[str], list[str], list[str]]:
    """Deterministic disjoint train/val/test partition.

    Sizes are floor(ratio * n) for val and test, remainder to train; the
    permutation depends on the seed alone.
    """
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be distinct")
    n = len(ids)
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)
    n_val = int(np.floor(spec.ratios[1] * n))
    n_test = int(np.floor(spec.ratios[2] * n))
    n_train = n - n_val - n_test
    shuffled = [ids[i] for i in order]
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


def bilinear_resize(image: np.ndarray, scale: float) -> np.ndarray:
    """Scale (3, H, W) by ``scale`` with origin-anchored bilinear sampling.

    Destination pixel j samples source coordinate j / scale, so a point at
    source x lands exactly at x * scale.  Output extents round to the nearest
    integer (floored at 1).
    """
    c, h, w = image.shape
    nh = max(1, int(round(h * scale)))
    nw = max(1, int(round(w * scale)))

    def axis_weights(n_out, n_in):
        src = np.arange(n_out, dtype=np.float64) / scale
        i0 = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = np.clip(src - i0, 0.0, 1.0)
        return i0, i1, frac.astype(image.dtype)

    r0, r1, rf = axis_weights(nh, h)
    c0, c1, cf = axis_weights(nw, w)
    top = image[:, r0, :] * (1 - rf)[None, :, None] + image[:, r1, :] * rf[None, :, None]
    out = top[:, :, c0] * (1 - cf)[None, None, :] + top[:, :, c1] * cf[None, None, :]
    return out


def augment(item: AnnotatedImage, rng: np.random.Generator,
            scale_range: tuple[float, float] = (0.7, 1.3),
            flip_prob: float = 0.5) -> AnnotatedImage:
    """Random scale, 224x224 crop, and horizontal flip, points kept consistent.

    The lower scale bound rises to 224 / min(H, W) whenever the nominal range
    could undershoot the crop size, so the scaled shorter side is never below
    224.  Points use half-open crop containment ([x0, x0 + 224), left/top
    inclusive) and flip as x -> 223 - x (pixel-center convention).
    """
    h, w = item.image.shape[1:]
    min_side = min(h, w)
    lo = max(scale_range[0], CROP_SIZE / min_side)
    hi = max(scale_range[1], lo)
    scale = float(rng.uniform(lo, hi))

    image = bilinear_resize(item.image, scale)
    points = item.points * scale
    sh, sw = image.shape[1:]

    x0 = int(rng.integers(0, sw - CROP_SIZE + 1))
    y0 = int(rng.integers(0, sh - CROP_SIZE + 1))
    image = image[:, y0:y0 + CROP_SIZE, x0:x0 + CROP_SIZE]
    points = points - np.array([x0, y0], dtype=np.float64)
    keep = (
        (points[:, 0] >= 0) & (points[:, 0] < CROP_SIZE)
        & (points[:, 1] >= 0) & (points[:, 1] < CROP_SIZE)
    )
    points = points[keep]

    if rng.random() < flip_prob:
        image = image[:, :, ::-1]
        points = points.copy()
        points[:, 0] = (CROP_SIZE - 1) - points[:, 0]
        # reflection about the pixel-center axis pushes the half-pixel margin
        # (CROP_SIZE - 1, CROP_SIZE) below zero; those points leave the crop
        points = points[points[:, 0] >= 0]

    return AnnotatedImage(image=np.ascontiguousarray(image), points=points,
                          id=item.id)


def item_rng(seed: int, epoch: int, item_id: str) -> np.random.Generator:
    """Per-item generator derived from (seed, epoch, stable id hash).

    Parallel prefetching cannot change outputs because the stream depends
    only on these three values.
    """
    return np.random.default_rng([seed, epoch, zlib.crc32(item_id.encode("utf-8"))])


# ----------------------------------------------------------------------
# synthetic scenes
# ----------------------------------------------------------------------
def _textured_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Low-frequency blotches plus fine grain, vaguely soil-and-stems toned."""
    coarse = rng.uniform(0.10, 0.45, size=(3, 8, 8)).astype(np.float32)
    coarse[1] += 0.05  # a touch more green
    bg = bilinear_resize(coarse, size / 8.0)
    bg = bg[:, :size, :size]
    bg = bg + rng.normal(0.0, 0.02, size=bg.shape).astype(np.float32)
    return np.clip(bg, 0.0, 1.0)


def _draw_blob(image: np.ndarray, cx: float, cy: float, ra: float, rb: float,
               theta: float, color: np.ndarray) -> None:
    """Alpha-composite one anti-aliased bright ellipse in place."""
    size = image.shape[1]
    r_max = max(ra, rb) + 2.0
    x_lo, x_hi = int(max(0, np.floor(cx - r_max))), int(min(size, np.ceil(cx + r_max) + 1))
    y_lo, y_hi = int(max(0, np.floor(cy - r_max))), int(min(size, np.ceil(cy + r_max) + 1))
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    dx = xs - cx
    dy = ys - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = (dx * ct + dy * st) / ra
    vv = (-dx * st + dy * ct) / rb
    r = np.sqrt(u * u + vv * vv)
    # ~1 px feathered edge for anti-aliasing
    alpha = np.clip((1.0 - r) * min(ra, rb) + 0.5, 0.0, 1.0).astype(np.float32)
    patch = image[:, y_lo:y_hi, x_lo:x_hi]
    patch *= 1.0 - alpha
    patch += color[:, None, None] * alpha


def synth_generate(count: int, pods_per_image_range: tuple[int, int],
                   blob_radius_range: tuple[float, float] = (3.0, 6.0),
                   seed: int = 0, image_size: int = 256) -> list[AnnotatedImage]:
    """Render ``count`` scenes of bright elliptical blobs on textured ground.

    Ground truth is the blob centers.  Deterministic: every image depends
    only on (seed, index), so regenerating with the same seed is
    bit-identical.
    """
    lo_n, hi_n = int(pods_per_image_range[0]), int(pods_per_image_range[1])
    lo_r, hi_r = float(blob_radius_range[0]), float(blob_radius_range[1])
    if lo_n < 0 or hi_n < lo_n:
        raise ValueError(f"bad pod count range ({lo_n}, {hi_n})")
    if lo_r <= 0 or hi_r < lo_r:
        raise ValueError(f"bad blob radius range ({lo_r}, {hi_r})")

    items = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        image = _textured_background(rng, image_size)
        n = int(rng.integers(lo_n, hi_n + 1))
        margin = hi_r + 2.0
        centers = rng.uniform(margin, image_size - margin, size=(n, 2))
        for cx, cy in centers:
            ra = rng.uniform(lo_r, hi_r)
            rb = ra * rng.uniform(0.6, 1.0)
            theta = rng.uniform(0.0, np.pi)
            color = np.array([0.80, 0.74, 0.32], dtype=np.float32)
            color = np.clip(color + rng.uniform(-0.08, 0.08, size=3).astype(np.float32), 0.0, 1.0)
            _draw_blob(image, cx, cy, ra, rb, theta, color)
        image = np.clip(image, 0.0, 1.0)
        items.append(AnnotatedImage(image=image, points=centers.reshape(-1, 2),
                                    id=f"synth-{seed}-{i:04d}"))
    return items


def save_dataset(items: list[AnnotatedImage], out_dir: str | Path) -> None:
    """Write each item as <id>.png plus a Labelme-style <id>.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for item in items:
        h, w = item.image.shape[1:]
        save_image(out_dir / f"{item.id}.png", item.image)
        doc = {
            "imagePath": f"{item.id}.png",
            "imageWidth": w,
            "imageHeight": h,
            "shapes": [
                {"label": "pod", "points": [[float(x), float(y)]], "shape_type": "point"}
                for x, y in item.points
            ],
        }
        (out_dir / f"{item.id}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8"
        )
