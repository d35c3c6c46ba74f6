"""Slide containers, sampling grid construction and tile streaming.

Two desk-scale containers are supported:

* a directory manifest: ``manifest.json`` with ``{width_px, height_px,
  tile_index: [{x, y, file}]}`` next to lossless RGB rasters (PNG), and
* a baseline tiled TIFF, level 0 only.

Regions of a manifest slide not covered by any indexed raster read as
white, matching unscanned glass.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptHeaderError,
    InvalidGeometryError,
    OutOfGridError,
    ReadFailureError,
    SlideNotFoundError,
    UnsupportedFormatError,
)

MANIFEST_NAME = "manifest.json"
_TIFF_SUFFIXES = {".tif", ".tiff"}

# Pillow refuses huge rasters by default; slides are trusted local files.
Image.MAX_IMAGE_PIXELS = None


class _ManifestReader:
    """Composes read regions from the PNG rasters listed in manifest.json."""

    def __init__(self, root: Path, index: list[dict]):
        self.root = root
        self.index = index
        self._cache: dict[str, np.ndarray] = {}

    def _tile_array(self, entry: dict) -> np.ndarray:
        name = entry["file"]
        if name not in self._cache:
            path = self.root / name
            try:
                with Image.open(path) as im:
                    self._cache[name] = np.asarray(im.convert("RGB"))
            except (OSError, UnidentifiedImageError) as exc:
                raise ReadFailureError(f"cannot read tile raster {path}: {exc}") from exc
        return self._cache[name]

    def _entry_size(self, entry: dict) -> tuple[int, int]:
        if "w" not in entry or "h" not in entry:
            th, tw = self._tile_array(entry).shape[:2]
            entry["w"], entry["h"] = tw, th
        return int(entry["w"]), int(entry["h"])

    def read_region(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        out = np.full((h, w, 3), 255, dtype=np.uint8)
        for entry in self.index:
            tx, ty = int(entry["x"]), int(entry["y"])
            tw, th = self._entry_size(entry)
            ix0, iy0 = max(x, tx), max(y, ty)
            ix1, iy1 = min(x + w, tx + tw), min(y + h, ty + th)
            if ix1 <= ix0 or iy1 <= iy0:
                continue
            arr = self._tile_array(entry)
            out[iy0 - y : iy1 - y, ix0 - x : ix1 - x] = arr[
                iy0 - ty : iy1 - ty, ix0 - tx : ix1 - tx
            ]
        return out


class _TiffReader:
    """Level-0 reads from a baseline (optionally tiled) RGB TIFF."""

    def __init__(self, path: Path):
        self.path = path
        self._image: Image.Image | None = None

    def _img(self) -> Image.Image:
        if self._image is None:
            try:
                self._image = Image.open(self.path)
            except (OSError, UnidentifiedImageError) as exc:
                raise ReadFailureError(f"cannot decode {self.path}: {exc}") from exc
        return self._image

    def read_region(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        region = self._img().crop((x, y, x + w, y + h)).convert("RGB")
        return np.asarray(region)


@dataclass
class SlideHandle:
    """An opened slide: level-0 dimensions plus a lazy region reader."""

    id: str
    width_px: int
    height_px: int
    source: str
    mpp: float | None = None
    _reader: object = field(default=None, repr=False, compare=False)

    def read_region(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        """Read an RGB region; coordinates are level-0 pixels, in bounds."""
        if w <= 0 or h <= 0:
            raise ReadFailureError(f"non-positive region size {w}x{h}")
        if x < 0 or y < 0 or x + w > self.width_px or y + h > self.height_px:
            raise ReadFailureError(
                f"region ({x},{y},{w},{h}) outside slide {self.width_px}x{self.height_px}"
            )
        return self._reader.read_region(x, y, w, h)


@dataclass(frozen=True)
class TileGrid:
    """Even partition of a slide into rows x cols cells."""

    rows: int = 15
    cols: int = 20
    tile_px: int = 512
    slide_width: int = 0
    slide_height: int = 0

    @property
    def cell_width(self) -> float:
        return self.slide_width / self.cols

    @property
    def cell_height(self) -> float:
        return self.slide_height / self.rows

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        """Pixel center of cell (row, col): ((c+0.5)*w/cols, (r+0.5)*h/rows)."""
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise OutOfGridError(f"cell ({row},{col}) outside {self.rows}x{self.cols} grid")
        return ((col + 0.5) * self.cell_width, (row + 0.5) * self.cell_height)

    def coords(self) -> list[tuple[int, int]]:
        """All cell coordinates in row-major order."""
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def __len__(self) -> int:
        return self.rows * self.cols


@dataclass
class Tile:
    """A tile_px x tile_px RGB raster cut around a grid-cell center."""

    grid_coord: tuple[int, int]
    origin_px: tuple[int, int]
    pixels: np.ndarray
    slide_id: str

    def __post_init__(self):
        h, w = self.pixels.shape[:2]
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ReadFailureError("tile raster must be HxWx3 RGB")
        if h != w:
            raise ReadFailureError(f"tile raster must be square, got {w}x{h}")

    @property
    def tile_px(self) -> int:
        return self.pixels.shape[0]


def open_slide(source: str | Path) -> SlideHandle:
    """Open a slide container and return its handle.

    No pixel data is decoded here; dimensions come from the container
    header (manifest.json or the TIFF IFD).
    """
    path = Path(source)
    if not path.exists():
        raise SlideNotFoundError(f"no such slide: {source}")

    if path.is_dir():
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise UnsupportedFormatError(f"directory {path} has no {MANIFEST_NAME}")
        try:
            manifest = json.loads(manifest_path.read_text())
            width = int(manifest["width_px"])
            height = int(manifest["height_px"])
            index = list(manifest["tile_index"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptHeaderError(f"bad manifest in {path}: {exc}") from exc
        if width <= 0 or height <= 0:
            raise CorruptHeaderError(f"non-positive dimensions {width}x{height} in {path}")
        return SlideHandle(
            id=path.name,
            width_px=width,
            height_px=height,
            source=str(path),
            mpp=manifest.get("mpp"),
            _reader=_ManifestReader(path, index),
        )

    if path.suffix.lower() in _TIFF_SUFFIXES:
        try:
            with Image.open(path) as im:
                width, height = im.size
        except UnidentifiedImageError as exc:
            raise CorruptHeaderError(f"cannot parse TIFF header of {path}: {exc}") from exc
        except OSError as exc:
            raise CorruptHeaderError(f"cannot open {path}: {exc}") from exc
        return SlideHandle(
            id=path.stem,
            width_px=width,
            height_px=height,
            source=str(path),
            mpp=None,
            _reader=_TiffReader(path),
        )

    raise UnsupportedFormatError(f"unsupported slide container: {path.name}")


def make_grid(slide: SlideHandle, rows: int = 15, cols: int = 20, tile_px: int = 512) -> TileGrid:
    """Build the rows x cols sampling grid over a slide."""
    if rows <= 0 or cols <= 0 or tile_px <= 0:
        raise InvalidGeometryError(
            f"rows, cols and tile_px must be positive (got {rows}, {cols}, {tile_px})"
        )
    grid = TileGrid(
        rows=rows,
        cols=cols,
        tile_px=tile_px,
        slide_width=slide.width_px,
        slide_height=slide.height_px,
    )
    if grid.cell_width < tile_px or grid.cell_height < tile_px:
        warnings.warn(
            f"grid cells ({grid.cell_width:.0f}x{grid.cell_height:.0f} px) are smaller "
            f"than tile_px={tile_px}; adjacent tiles will overlap",
            stacklevel=2,
        )
    return grid


def tile_origin(slide: SlideHandle, grid: TileGrid, coord: tuple[int, int]) -> tuple[int, int]:
    """Top-left pixel of the tile for a grid cell, clamped into the slide."""
    cx, cy = grid.cell_center(*coord)
    half = grid.tile_px / 2
    max_x = slide.width_px - grid.tile_px
    max_y = slide.height_px - grid.tile_px
    if max_x < 0 or max_y < 0:
        raise ReadFailureError(
            f"slide {slide.width_px}x{slide.height_px} smaller than tile_px={grid.tile_px}"
        )
    x = min(max(int(round(cx - half)), 0), max_x)
    y = min(max(int(round(cy - half)), 0), max_y)
    return x, y


def extract_tile(slide: SlideHandle, grid: TileGrid, coord: tuple[int, int]) -> Tile:
    """Cut the tile centered on a grid cell, clamped at slide edges."""
    row, col = coord
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise OutOfGridError(f"cell ({row},{col}) outside {grid.rows}x{grid.cols} grid")
    x, y = tile_origin(slide, grid, coord)
    pixels = slide.read_region(x, y, grid.tile_px, grid.tile_px)
    return Tile(grid_coord=(row, col), origin_px=(x, y), pixels=pixels, slide_id=slide.id)


def iterate_tiles(
    slide: SlideHandle,
    grid: TileGrid,
    order: str = "row-major",
    seed: int | None = None,
    on_error: Callable[[tuple[int, int], Exception], None] | None = None,
) -> Iterator[Tile]:
    """Stream every grid tile exactly once in a deterministic order.

    ``order`` is ``row-major`` or ``seeded-shuffle`` (requires ``seed``).
    A per-tile read failure aborts the stream unless ``on_error`` is
    given, in which case it is reported there and the stream continues.
    """
    coords = grid.coords()
    if order == "row-major":
        pass
    elif order == "seeded-shuffle":
        if seed is None:
            raise InvalidGeometryError("seeded-shuffle order requires a seed")
        random.Random(seed).shuffle(coords)
    else:
        raise InvalidGeometryError(f"unknown tile order: {order!r}")

    for coord in coords:
        try:
            yield extract_tile(slide, grid, coord)
        except ReadFailureError as exc:
            if on_error is None:
                raise
            on_error(coord, exc)
