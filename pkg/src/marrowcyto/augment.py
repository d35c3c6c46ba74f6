"""Training-set augmentation for annotated tiles.

Geometric ops transform pixels and boxes together; photometric ops touch
pixels only. Everywhere a box can leave the visible area the same rule
applies: a box survives iff its center survives, and survivors are
clipped to the visible bounds. Augmentation belongs to training folds
only; callers apply it to fold-scoped record views.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from PIL import Image

from .dataset import BoxAnnotation
from .detect import BBox
from .errors import DegenerateCropError


def _clip_unit(box: BBox) -> BBox | None:
    """Clip a box to the unit square; None when the center is outside."""
    if not (0.0 <= box.cx <= 1.0 and 0.0 <= box.cy <= 1.0):
        return None
    x0 = max(0.0, box.cx - box.w / 2)
    y0 = max(0.0, box.cy - box.h / 2)
    x1 = min(1.0, box.cx + box.w / 2)
    y1 = min(1.0, box.cy + box.h / 2)
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(cx=(x0 + x1) / 2, cy=(y0 + y1) / 2, w=x1 - x0, h=y1 - y0)


def _map_boxes(boxes: Sequence[BoxAnnotation], fn) -> list[BoxAnnotation]:
    out = []
    for ann in boxes:
        mapped = fn(ann.bbox)
        if mapped is not None:
            out.append(replace(ann, bbox=mapped))
    return out


# ---------------------------------------------------------------------------
# Geometric

@dataclass(frozen=True)
class GeometricParams:
    flip_h: bool = False
    flip_v: bool = False
    rot90: int = 0
    crop: tuple[float, float, float, float] | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.rot90 not in (0, 1, 2, 3):
            raise ValueError("rot90 must be 0..3 quarter turns")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.crop is not None:
            x0, y0, x1, y1 = self.crop
            if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
                raise ValueError(f"bad crop window {self.crop}")


def sample_geometric(rng: random.Random) -> GeometricParams:
    """Draw a random transform of the kinds used during training."""
    crop = None
    if rng.random() < 0.5:
        w = rng.uniform(0.6, 0.95)
        h = rng.uniform(0.6, 0.95)
        x0 = rng.uniform(0.0, 1.0 - w)
        y0 = rng.uniform(0.0, 1.0 - h)
        crop = (x0, y0, x0 + w, y0 + h)
    return GeometricParams(
        flip_h=rng.random() < 0.5,
        flip_v=rng.random() < 0.5,
        rot90=rng.randrange(4),
        crop=crop,
        scale=rng.uniform(0.8, 1.2),
    )


def _rot90_box(box: BBox) -> BBox:
    # Follows np.rot90: pixel (x, y) moves to (y, 1 - x).
    return BBox(cx=box.cy, cy=1.0 - box.cx, w=box.h, h=box.w)


def augment_geometric(
    pixels: np.ndarray,
    boxes: Sequence[BoxAnnotation],
    params: GeometricParams,
) -> tuple[np.ndarray, list[BoxAnnotation]]:
    """Apply flip / quarter-turn / crop / scale to pixels and boxes.

    Crop and scale re-render at the original resolution, so the output
    tile always has the input shape. Raises DegenerateCrop when a crop
    drops every box of a non-empty input, letting the caller resample.
    """
    out = np.asarray(pixels)
    anns = list(boxes)

    if params.flip_h:
        out = np.fliplr(out)
        anns = _map_boxes(anns, lambda b: BBox(cx=1.0 - b.cx, cy=b.cy, w=b.w, h=b.h))
    if params.flip_v:
        out = np.flipud(out)
        anns = _map_boxes(anns, lambda b: BBox(cx=b.cx, cy=1.0 - b.cy, w=b.w, h=b.h))
    for _ in range(params.rot90 % 4):
        out = np.rot90(out)
        anns = _map_boxes(anns, _rot90_box)

    if params.crop is not None:
        x0, y0, x1, y1 = params.crop
        h_px, w_px = out.shape[:2]
        px0, px1 = int(round(x0 * w_px)), int(round(x1 * w_px))
        py0, py1 = int(round(y0 * h_px)), int(round(y1 * h_px))
        window = out[py0:py1, px0:px1]
        out = np.asarray(
            Image.fromarray(np.ascontiguousarray(window)).resize((w_px, h_px), Image.BILINEAR)
        )

        def crop_box(b: BBox) -> BBox | None:
            if not (x0 <= b.cx <= x1 and y0 <= b.cy <= y1):
                return None
            sx, sy = x1 - x0, y1 - y0
            moved = BBox(cx=(b.cx - x0) / sx, cy=(b.cy - y0) / sy, w=min(b.w / sx, 1.0), h=min(b.h / sy, 1.0))
            return _clip_unit(moved)

        survivors = _map_boxes(anns, crop_box)
        if anns and not survivors:
            raise DegenerateCropError(f"crop {params.crop} removed all {len(anns)} boxes")
        anns = survivors

    if params.scale != 1.0:
        s = params.scale
        h_px, w_px = out.shape[:2]
        resized = Image.fromarray(np.ascontiguousarray(out)).resize(
            (max(1, int(round(w_px * s))), max(1, int(round(h_px * s)))), Image.BILINEAR
        )
        canvas = Image.new("RGB", (w_px, h_px), (255, 255, 255))
        # Centered paste; negative offsets crop zoomed-in content.
        canvas.paste(resized, ((w_px - resized.width) // 2, (h_px - resized.height) // 2))
        out = np.asarray(canvas)

        def scale_box(b: BBox) -> BBox | None:
            # Check the raw center first: BBox itself rejects out-of-range centers.
            cx = 0.5 + (b.cx - 0.5) * s
            cy = 0.5 + (b.cy - 0.5) * s
            if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
                return None
            return _clip_unit(BBox(cx=cx, cy=cy, w=min(b.w * s, 1.0), h=min(b.h * s, 1.0)))

        anns = [a for a in _map_boxes(anns, scale_box)]

    return np.ascontiguousarray(out), anns


# ---------------------------------------------------------------------------
# Photometric

@dataclass(frozen=True)
class PhotometricParams:
    hue_shift: float = 0.0
    saturation: float = 1.0
    brightness: float = 1.0
    contrast: float = 1.0
    noise_std: float = 0.0

    def __post_init__(self):
        if not -0.5 <= self.hue_shift <= 0.5:
            raise ValueError("hue_shift must be in [-0.5, 0.5]")
        for name in ("saturation", "brightness", "contrast"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def sample_photometric(rng: random.Random) -> PhotometricParams:
    return PhotometricParams(
        hue_shift=rng.uniform(-0.05, 0.05),
        saturation=rng.uniform(0.7, 1.3),
        brightness=rng.uniform(0.8, 1.2),
        contrast=rng.uniform(0.8, 1.2),
        noise_std=rng.uniform(0.0, 8.0),
    )


def augment_photometric(
    pixels: np.ndarray,
    boxes: Sequence[BoxAnnotation],
    params: PhotometricParams,
    seed: int = 0,
) -> tuple[np.ndarray, list[BoxAnnotation]]:
    """Hue / saturation / brightness / contrast / noise; boxes pass
    through untouched."""
    img = np.asarray(pixels, dtype=np.float64) / 255.0
    if params.hue_shift != 0.0 or params.saturation != 1.0:
        hsv = rgb_to_hsv(img)
        hsv[..., 0] = (hsv[..., 0] + params.hue_shift) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * params.saturation, 0.0, 1.0)
        img = hsv_to_rgb(hsv)
    if params.brightness != 1.0:
        img = img * params.brightness
    if params.contrast != 1.0:
        mean = img.mean(axis=(0, 1), keepdims=True)
        img = (img - mean) * params.contrast + mean
    if params.noise_std > 0.0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, params.noise_std / 255.0, size=img.shape)
    out = np.clip(img * 255.0, 0, 255).astype(np.uint8)
    return out, list(boxes)


# ---------------------------------------------------------------------------
# Mixing

def cutmix(
    a_pixels: np.ndarray,
    a_boxes: Sequence[BoxAnnotation],
    b_pixels: np.ndarray,
    b_boxes: Sequence[BoxAnnotation],
    seed: int = 0,
    region: tuple[float, float, float, float] | None = None,
) -> tuple[np.ndarray, list[BoxAnnotation]]:
    """Paste a rectangular window of b into a at the same coordinates.

    Boxes from b survive iff their center lies inside the window (then
    clipped to it). Boxes from a survive iff their center lies outside;
    when the window covers a full-width or full-height slab of such a
    box the covered slab is shaved off, otherwise the box is kept whole.
    """
    if a_pixels.shape != b_pixels.shape:
        raise ValueError(f"tile shapes differ: {a_pixels.shape} vs {b_pixels.shape}")
    if region is None:
        rng = random.Random(seed)
        side_w = (rng.uniform(0.1, 0.6)) ** 0.5
        side_h = side_w
        x0 = rng.uniform(0.0, 1.0 - side_w)
        y0 = rng.uniform(0.0, 1.0 - side_h)
        region = (x0, y0, x0 + side_w, y0 + side_h)
    x0, y0, x1, y1 = region
    if not (0.0 <= x0 <= x1 <= 1.0 and 0.0 <= y0 <= y1 <= 1.0):
        raise ValueError(f"bad paste region {region}")

    h_px, w_px = a_pixels.shape[:2]
    px0, px1 = int(round(x0 * w_px)), int(round(x1 * w_px))
    py0, py1 = int(round(y0 * h_px)), int(round(y1 * h_px))
    out = np.array(a_pixels, copy=True)
    out[py0:py1, px0:px1] = b_pixels[py0:py1, px0:px1]

    def inside(b: BBox) -> bool:
        return x0 <= b.cx <= x1 and y0 <= b.cy <= y1

    if x1 <= x0 or y1 <= y0:
        return out, list(a_boxes)

    def from_a(b: BBox) -> BBox | None:
        if inside(b):
            return None
        bx0, by0 = b.cx - b.w / 2, b.cy - b.h / 2
        bx1, by1 = b.cx + b.w / 2, b.cy + b.h / 2
        # Shave only when the window spans the box fully along one axis;
        # partial corner overlaps leave a non-rectangular visible area,
        # so the box is kept as-is.
        if x0 <= bx0 and bx1 <= x1:
            if by0 < y0 < by1 and b.cy <= y0:
                by1 = y0
            elif by0 < y1 < by1 and b.cy >= y1:
                by0 = y1
        elif y0 <= by0 and by1 <= y1:
            if bx0 < x0 < bx1 and b.cx <= x0:
                bx1 = x0
            elif bx0 < x1 < bx1 and b.cx >= x1:
                bx0 = x1
        if bx1 <= bx0 or by1 <= by0:
            return None
        return BBox(cx=(bx0 + bx1) / 2, cy=(by0 + by1) / 2, w=bx1 - bx0, h=by1 - by0)

    def from_b(b: BBox) -> BBox | None:
        if not inside(b):
            return None
        bx0 = max(b.cx - b.w / 2, x0)
        by0 = max(b.cy - b.h / 2, y0)
        bx1 = min(b.cx + b.w / 2, x1)
        by1 = min(b.cy + b.h / 2, y1)
        if bx1 <= bx0 or by1 <= by0:
            return None
        return BBox(cx=(bx0 + bx1) / 2, cy=(by0 + by1) / 2, w=bx1 - bx0, h=by1 - by0)

    survivors = _map_boxes(a_boxes, from_a) + _map_boxes(b_boxes, from_b)
    return out, survivors


def mosaic(
    inputs: Sequence[tuple[np.ndarray, Sequence[BoxAnnotation]]],
    seed: int = 0,
) -> tuple[np.ndarray, list[BoxAnnotation]]:
    """Compose four tiles into a 2x2 grid rendered at the input size.

    Each input is scaled to a half-size quadrant; boxes scale with it.
    With the fixed central junction every scaled box stays inside its
    quadrant, so counts are conserved.
    """
    if len(inputs) != 4:
        raise ValueError(f"mosaic needs exactly 4 inputs, got {len(inputs)}")
    shapes = {np.asarray(px).shape for px, _ in inputs}
    if len(shapes) != 1:
        raise ValueError(f"mosaic inputs must share one shape, got {shapes}")
    h_px, w_px = np.asarray(inputs[0][0]).shape[:2]
    half_w, half_h = w_px // 2, h_px // 2
    canvas = np.zeros_like(np.asarray(inputs[0][0]))
    boxes_out: list[BoxAnnotation] = []
    for q, (pixels, boxes) in enumerate(inputs):
        row, col = divmod(q, 2)
        scaled = np.asarray(
            Image.fromarray(np.ascontiguousarray(np.asarray(pixels))).resize(
                (half_w, half_h), Image.BILINEAR
            )
        )
        canvas[row * half_h : row * half_h + half_h, col * half_w : col * half_w + half_w] = scaled

        def place(b: BBox, col=col, row=row) -> BBox | None:
            moved = BBox(cx=col * 0.5 + b.cx / 2, cy=row * 0.5 + b.cy / 2, w=b.w / 2, h=b.h / 2)
            return _clip_unit(moved)

        boxes_out.extend(_map_boxes(boxes, place))
    return canvas, boxes_out
