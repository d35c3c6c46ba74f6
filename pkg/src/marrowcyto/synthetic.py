"""Synthetic slides and deterministic stand-in backends.

Real marrow slides and trained networks are not shippable, so the test
and calibration paths run on generated data: slides with solid-color
squares planted on a tinted background (one color per cell class), a
tile scorer that reads the non-white fraction, a detector that recovers
the planted squares exactly, and a detector that ignores pixels and
samples counts i.i.d. from a fixed marrow-like mixture at roughly 9.5
objects per tile.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image
from scipy import ndimage

from .classes import CellClass
from .detect import DetectorBackend
from .hct import HCT
from .roi import TileClassifierBackend
from .slides import MANIFEST_NAME, Tile

# One saturated, mutually distinct color per class; none of them is close
# to white, so color masks and the background never interact.
CLASS_COLORS: dict[CellClass, tuple[int, int, int]] = {
    CellClass.NEUTROPHIL: (230, 25, 75),
    CellClass.METAMYELOCYTE: (60, 180, 75),
    CellClass.MYELOCYTE: (255, 225, 25),
    CellClass.PROMYELOCYTE: (0, 130, 200),
    CellClass.BLAST: (245, 130, 48),
    CellClass.ERYTHROBLAST: (145, 30, 180),
    CellClass.MEGAKARYOCYTE_NUCLEUS: (70, 240, 240),
    CellClass.LYMPHOCYTE: (240, 50, 230),
    CellClass.MONOCYTE: (210, 245, 60),
    CellClass.PLASMA_CELL: (250, 190, 212),
    CellClass.EOSINOPHIL: (0, 128, 128),
    CellClass.BASOPHIL: (220, 190, 255),
    CellClass.MEGAKARYOCYTE: (170, 110, 40),
    CellClass.DEBRIS: (255, 250, 200),
    CellClass.HISTIOCYTE: (128, 0, 0),
    CellClass.MAST_CELL: (170, 255, 195),
    CellClass.PLATELET: (128, 128, 0),
    CellClass.PLATELET_CLUMP: (255, 215, 180),
    CellClass.OTHER_CELL: (0, 0, 128),
}

COLOR_TO_CLASS = {color: cls for cls, color in CLASS_COLORS.items()}

# Smear-like background of particle tiles; below the white cutoff so the
# ROI scorer sees the whole tile as content.
PARTICLE_TINT = (246, 222, 230)

# A pixel is "white" (background glass) when every channel clears this.
WHITE_MIN = 250

MEAN_OBJECTS_PER_TILE = 9.5

# Fixed generating mixture over all 19 classes (fraction of objects).
# Erythroid-rich marrow: the erythroblast share keeps the ratio component
# of the convergence vector well-conditioned.
MARROW_MIXTURE: dict[CellClass, float] = {
    CellClass.NEUTROPHIL: 0.21,
    CellClass.METAMYELOCYTE: 0.05,
    CellClass.MYELOCYTE: 0.06,
    CellClass.PROMYELOCYTE: 0.02,
    CellClass.BLAST: 0.02,
    CellClass.ERYTHROBLAST: 0.28,
    CellClass.MEGAKARYOCYTE_NUCLEUS: 0.005,
    CellClass.LYMPHOCYTE: 0.10,
    CellClass.MONOCYTE: 0.02,
    CellClass.PLASMA_CELL: 0.015,
    CellClass.EOSINOPHIL: 0.02,
    CellClass.BASOPHIL: 0.005,
    CellClass.MEGAKARYOCYTE: 0.005,
    CellClass.DEBRIS: 0.08,
    CellClass.HISTIOCYTE: 0.01,
    CellClass.MAST_CELL: 0.005,
    CellClass.PLATELET: 0.06,
    CellClass.PLATELET_CLUMP: 0.02,
    CellClass.OTHER_CELL: 0.015,
}


@dataclass(frozen=True)
class PlantedBox:
    """Ground truth for one planted square, tile-normalized."""

    cls: CellClass
    cx: float
    cy: float
    w: float
    h: float


@dataclass
class SyntheticSlide:
    path: Path
    width_px: int
    height_px: int
    rows: int
    cols: int
    tile_px: int
    particle_coords: list[tuple[int, int]]
    planted: dict[tuple[int, int], list[PlantedBox]]


def _plant_tile(
    rng: random.Random, tile_px: int, mean_objects: float
) -> tuple[np.ndarray, list[PlantedBox]]:
    """Render one particle tile: tinted background plus colored squares
    on disjoint slots so connected components recover them 1:1."""
    pixels = np.empty((tile_px, tile_px, 3), dtype=np.uint8)
    pixels[:] = PARTICLE_TINT
    slot_px = max(32, tile_px // 8)
    per_side = tile_px // slot_px
    slots = [(r, c) for r in range(per_side) for c in range(per_side)]
    n = min(_poisson(rng, mean_objects), len(slots))
    boxes: list[PlantedBox] = []
    classes = list(MARROW_MIXTURE)
    weights = list(MARROW_MIXTURE.values())
    for sr, sc in rng.sample(slots, n):
        cls = rng.choices(classes, weights=weights)[0]
        side = rng.randrange(max(8, slot_px // 2), slot_px - 6)
        x0 = sc * slot_px + (slot_px - side) // 2
        y0 = sr * slot_px + (slot_px - side) // 2
        pixels[y0 : y0 + side, x0 : x0 + side] = CLASS_COLORS[cls]
        boxes.append(
            PlantedBox(
                cls=cls,
                cx=(x0 + side / 2) / tile_px,
                cy=(y0 + side / 2) / tile_px,
                w=side / tile_px,
                h=side / tile_px,
            )
        )
    return pixels, boxes


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth's product method; lam stays small here.
    limit = np.exp(-lam)
    n = 0
    prod = rng.random()
    while prod > limit:
        n += 1
        prod *= rng.random()
    return n


def build_synthetic_slide(
    out_dir: str | Path,
    rows: int = 15,
    cols: int = 20,
    tile_px: int = 512,
    roi_fraction: float = 0.15,
    mean_objects: float = MEAN_OBJECTS_PER_TILE,
    seed: int = 0,
    container: str = "manifest",
) -> SyntheticSlide:
    """Write a synthetic slide and its planted ground truth.

    The slide dimensions are exact multiples of tile_px, so grid tiles
    align 1:1 with the planted rasters. Particle tiles (roi_fraction of
    the grid) carry the tint and the squares; everything else stays
    white. container selects the on-disk form: a raster-manifest
    directory or a single baseline TIFF.
    """
    if container not in ("manifest", "tiff"):
        raise ValueError(f"unknown container {container!r}")
    out = Path(out_dir)
    rng = random.Random(seed)
    width = cols * tile_px
    height = rows * tile_px
    all_coords = [(r, c) for r in range(rows) for c in range(cols)]
    n_particle = max(1, round(roi_fraction * len(all_coords)))
    particle = sorted(rng.sample(all_coords, n_particle))

    planted: dict[tuple[int, int], list[PlantedBox]] = {}
    rasters: dict[tuple[int, int], np.ndarray] = {}
    for coord in particle:
        pixels, boxes = _plant_tile(rng, tile_px, mean_objects)
        planted[coord] = boxes
        rasters[coord] = pixels

    if container == "manifest":
        out.mkdir(parents=True, exist_ok=True)
        index = []
        for (r, c), pixels in rasters.items():
            name = f"raster_{r:02d}_{c:02d}.png"
            Image.fromarray(pixels).save(out / name)
            # Sizes in the index keep reads lazy: no decode for rasters
            # outside the requested region.
            index.append(
                {"x": c * tile_px, "y": r * tile_px, "w": tile_px, "h": tile_px, "file": name}
            )
        (out / MANIFEST_NAME).write_text(
            json.dumps(
                {"width_px": width, "height_px": height, "tile_index": index},
                indent=2,
                sort_keys=True,
            )
        )
        sidecar = out / "planted.json"
    else:
        full = np.full((height, width, 3), 255, dtype=np.uint8)
        for (r, c), pixels in rasters.items():
            full[r * tile_px : (r + 1) * tile_px, c * tile_px : (c + 1) * tile_px] = pixels
        out.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(full).save(out, format="TIFF")
        sidecar = out.with_suffix(".planted.json")

    sidecar.write_text(
        json.dumps(
            {
                "rows": rows,
                "cols": cols,
                "tile_px": tile_px,
                "particle": [list(c) for c in particle],
                "tiles": {
                    f"{r},{c}": [
                        {"cls": b.cls.label, "cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}
                        for b in boxes
                    ]
                    for (r, c), boxes in planted.items()
                },
            },
            indent=2,
            sort_keys=True,
        )
    )
    return SyntheticSlide(
        path=out,
        width_px=width,
        height_px=height,
        rows=rows,
        cols=cols,
        tile_px=tile_px,
        particle_coords=particle,
        planted=planted,
    )


def load_planted(sidecar: str | Path) -> dict[tuple[int, int], list[PlantedBox]]:
    data = json.loads(Path(sidecar).read_text())
    out: dict[tuple[int, int], list[PlantedBox]] = {}
    for key, boxes in data["tiles"].items():
        r, c = (int(v) for v in key.split(","))
        out[(r, c)] = [
            PlantedBox(
                cls=CellClass.from_label(b["cls"]),
                cx=b["cx"],
                cy=b["cy"],
                w=b["w"],
                h=b["h"],
            )
            for b in boxes
        ]
    return out


class SyntheticRoiBackend(TileClassifierBackend):
    """Scores a tile by its non-white pixel fraction.

    Fully tinted particle tiles score 1.0, untouched glass scores 0.0;
    the 0.10 divisor makes even sparsely covered tiles score high.
    """

    def __init__(self, full_score_fraction: float = 0.10):
        if full_score_fraction <= 0:
            raise ValueError("full_score_fraction must be positive")
        self.full_score_fraction = full_score_fraction

    def score(self, tile: Tile) -> float:
        non_white = np.any(tile.pixels < WHITE_MIN, axis=2)
        frac = float(non_white.mean())
        return min(1.0, frac / self.full_score_fraction)


def _mix32(*parts: int) -> int:
    h = 0x811C9DC5
    for p in parts:
        h ^= p & 0xFFFFFFFF
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


class PlantedObjectDetector(DetectorBackend):
    """Recovers planted squares exactly via per-color connected components.

    Confidence is a pure function of the component geometry, so repeated
    runs see identical detections.
    """

    def detect(self, tile: Tile) -> list[dict]:
        out: list[dict] = []
        pixels = tile.pixels
        tile_px = tile.tile_px
        present = {tuple(c) for c in np.unique(pixels.reshape(-1, 3), axis=0)}
        for color, cls in COLOR_TO_CLASS.items():
            if color not in present:
                continue
            mask = np.all(pixels == np.array(color, dtype=np.uint8), axis=2)
            labeled, n = ndimage.label(mask)
            for sl in ndimage.find_objects(labeled):
                y0, y1 = sl[0].start, sl[0].stop
                x0, x1 = sl[1].start, sl[1].stop
                conf = 0.5 + (_mix32(x0, y0, x1, y1) % 499_999) / 1_000_000
                out.append(
                    {
                        "cx": (x0 + x1) / (2 * tile_px),
                        "cy": (y0 + y1) / (2 * tile_px),
                        "w": (x1 - x0) / tile_px,
                        "h": (y1 - y0) / tile_px,
                        "class_id": int(cls),
                        "confidence": conf,
                    }
                )
        return out


class DistributionDetector(DetectorBackend):
    """Ignores pixels; draws counts i.i.d. from a fixed class mixture.

    Per-tile draws are keyed on (seed, tile coordinate), so a rerun of
    the same slide reproduces the same stream regardless of tile order.
    """

    def __init__(
        self,
        seed: int = 0,
        mixture: dict[CellClass, float] | None = None,
        mean_objects: float = MEAN_OBJECTS_PER_TILE,
    ):
        self.seed = seed
        mix = mixture or MARROW_MIXTURE
        self.classes = list(mix)
        probs = np.array([mix[c] for c in self.classes], dtype=float)
        self.probs = probs / probs.sum()
        self.mean_objects = mean_objects

    def detect(self, tile: Tile) -> list[dict]:
        r, c = tile.grid_coord
        rng = np.random.default_rng([self.seed, r, c])
        n = int(rng.poisson(self.mean_objects))
        out: list[dict] = []
        for idx in rng.choice(len(self.classes), size=n, p=self.probs):
            w = float(rng.uniform(0.04, 0.12))
            h = float(rng.uniform(0.04, 0.12))
            out.append(
                {
                    "cx": float(rng.uniform(w / 2, 1 - w / 2)),
                    "cy": float(rng.uniform(h / 2, 1 - h / 2)),
                    "w": w,
                    "h": h,
                    "class_id": int(self.classes[idx]),
                    "confidence": float(rng.uniform(0.3, 1.0)),
                }
            )
        return out


def hct_stream(
    seed: int,
    mixture: dict[CellClass, float] | None = None,
    mean_objects: float = MEAN_OBJECTS_PER_TILE,
) -> Iterator[HCT]:
    """Endless i.i.d. per-tile histograms from the fixed mixture.

    Per-class counts are independent Poisson draws whose means sum to
    mean_objects, which is the same law as a Poisson total split by the
    mixture. This is the calibration stream for the convergence
    defaults.
    """
    mix = mixture or MARROW_MIXTURE
    classes = list(mix)
    probs = np.array([mix[c] for c in classes], dtype=float)
    lam = probs / probs.sum() * mean_objects
    rng = np.random.default_rng(seed)
    while True:
        draws = rng.poisson(lam)
        yield HCT(counts={cls: int(k) for cls, k in zip(classes, draws)})
