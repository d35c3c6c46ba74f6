import json

import numpy as np
import pytest

from marrowcyto.errors import (
    CorruptHeaderError,
    InvalidGeometryError,
    OutOfGridError,
    ReadFailureError,
    SlideNotFoundError,
    UnsupportedFormatError,
)
from marrowcyto.slides import (
    TileGrid,
    extract_tile,
    iterate_tiles,
    make_grid,
    open_slide,
    tile_origin,
)
from marrowcyto.synthetic import WHITE_MIN, build_synthetic_slide


@pytest.fixture()
def manifest_slide(tmp_path):
    return build_synthetic_slide(tmp_path / "slide", rows=3, cols=4, tile_px=64, seed=5)


# ---------------------------------------------------------------------------
# Containers


def test_open_manifest_slide(manifest_slide):
    slide = open_slide(manifest_slide.path)
    assert slide.id == "slide"
    assert (slide.width_px, slide.height_px) == (256, 192)
    assert slide.source == str(manifest_slide.path)


def test_open_reads_dimensions_from_header_only(manifest_slide):
    # Breaking every raster must not break opening: dimensions come from
    # the manifest alone and pixel decode stays lazy.
    for png in manifest_slide.path.glob("*.png"):
        png.write_bytes(b"not a png")
    slide = open_slide(manifest_slide.path)
    assert (slide.width_px, slide.height_px) == (256, 192)


def test_manifest_uncovered_regions_read_white(manifest_slide):
    slide = open_slide(manifest_slide.path)
    covered = {
        (e["x"], e["y"])
        for e in json.loads((manifest_slide.path / "manifest.json").read_text())["tile_index"]
    }
    white_origin = next(
        (c * 64, r * 64)
        for r in range(3)
        for c in range(4)
        if (c * 64, r * 64) not in covered
    )
    region = slide.read_region(*white_origin, 64, 64)
    assert region.shape == (64, 64, 3)
    assert (region == 255).all()


def test_manifest_particle_regions_have_pigment(manifest_slide):
    slide = open_slide(manifest_slide.path)
    r, c = manifest_slide.particle_coords[0]
    region = slide.read_region(c * 64, r * 64, 64, 64)
    assert region.min() < WHITE_MIN


def test_read_region_bounds(manifest_slide):
    slide = open_slide(manifest_slide.path)
    with pytest.raises(ReadFailureError):
        slide.read_region(-1, 0, 64, 64)
    with pytest.raises(ReadFailureError):
        slide.read_region(200, 0, 64, 64)
    with pytest.raises(ReadFailureError):
        slide.read_region(0, 0, 0, 64)


def test_tiff_container_matches_manifest(tmp_path):
    built_dir = build_synthetic_slide(tmp_path / "as_dir", rows=2, cols=3, tile_px=64, seed=9)
    built_tif = build_synthetic_slide(
        tmp_path / "as_file.tif", rows=2, cols=3, tile_px=64, seed=9, container="tiff"
    )
    a = open_slide(built_dir.path)
    b = open_slide(built_tif.path)
    assert b.id == "as_file"
    assert (a.width_px, a.height_px) == (b.width_px, b.height_px)
    # Same seed, same pixels, regardless of the container.
    for origin in [(0, 0), (64, 64), (128, 0)]:
        np.testing.assert_array_equal(
            a.read_region(*origin, 64, 64), b.read_region(*origin, 64, 64)
        )


def test_open_slide_failure_modes(tmp_path):
    with pytest.raises(SlideNotFoundError):
        open_slide(tmp_path / "missing")

    empty = tmp_path / "empty_dir"
    empty.mkdir()
    with pytest.raises(UnsupportedFormatError):
        open_slide(empty)

    oddball = tmp_path / "slide.xyz"
    oddball.write_bytes(b"???")
    with pytest.raises(UnsupportedFormatError):
        open_slide(oddball)

    bad_json = tmp_path / "bad_json"
    bad_json.mkdir()
    (bad_json / "manifest.json").write_text("{nope")
    with pytest.raises(CorruptHeaderError):
        open_slide(bad_json)

    missing_keys = tmp_path / "missing_keys"
    missing_keys.mkdir()
    (missing_keys / "manifest.json").write_text(json.dumps({"width_px": 100}))
    with pytest.raises(CorruptHeaderError):
        open_slide(missing_keys)

    negative = tmp_path / "negative"
    negative.mkdir()
    (negative / "manifest.json").write_text(
        json.dumps({"width_px": -5, "height_px": 100, "tile_index": []})
    )
    with pytest.raises(CorruptHeaderError):
        open_slide(negative)

    fake_tiff = tmp_path / "fake.tif"
    fake_tiff.write_bytes(b"certainly not a tiff")
    with pytest.raises(CorruptHeaderError):
        open_slide(fake_tiff)


# ---------------------------------------------------------------------------
# Grid geometry


def test_grid_cell_centers():
    grid = TileGrid(rows=15, cols=20, tile_px=512, slide_width=10240, slide_height=7680)
    assert grid.cell_width == 512
    assert grid.cell_height == 512
    assert grid.cell_center(0, 0) == (256.0, 256.0)
    assert grid.cell_center(14, 19) == (19.5 * 512, 14.5 * 512)
    assert len(grid) == 300
    coords = grid.coords()
    assert coords[0] == (0, 0)
    assert coords[1] == (0, 1)
    assert coords[-1] == (14, 19)
    assert len(set(coords)) == 300


def test_grid_rejects_out_of_range_cells():
    grid = TileGrid(rows=3, cols=4, tile_px=64, slide_width=256, slide_height=192)
    for bad in [(-1, 0), (0, -1), (3, 0), (0, 4)]:
        with pytest.raises(OutOfGridError):
            grid.cell_center(*bad)


def test_make_grid_guards_and_overlap_warning(manifest_slide):
    slide = open_slide(manifest_slide.path)
    with pytest.raises(InvalidGeometryError):
        make_grid(slide, rows=0)
    with pytest.warns(UserWarning, match="overlap"):
        make_grid(slide, rows=3, cols=4, tile_px=128)


def test_tile_origin_interior_and_clamped(manifest_slide):
    slide = open_slide(manifest_slide.path)
    grid = make_grid(slide, rows=3, cols=4, tile_px=64)
    assert tile_origin(slide, grid, (0, 0)) == (0, 0)
    assert tile_origin(slide, grid, (2, 3)) == (192, 128)

    with pytest.warns(UserWarning):
        wide = make_grid(slide, rows=3, cols=4, tile_px=128)
    # Centers near the edges clamp into the slide.
    assert tile_origin(slide, wide, (0, 0)) == (0, 0)
    assert tile_origin(slide, wide, (2, 3)) == (128, 64)


def test_tile_origin_slide_smaller_than_tile(manifest_slide):
    slide = open_slide(manifest_slide.path)
    grid = TileGrid(rows=3, cols=4, tile_px=512, slide_width=256, slide_height=192)
    with pytest.raises(ReadFailureError):
        tile_origin(slide, grid, (0, 0))


# ---------------------------------------------------------------------------
# Tile extraction and streaming


def test_extract_tile_contents(manifest_slide):
    slide = open_slide(manifest_slide.path)
    grid = make_grid(slide, rows=3, cols=4, tile_px=64)
    particle = set(manifest_slide.particle_coords)
    blank = next(c for c in grid.coords() if c not in particle)

    tile = extract_tile(slide, grid, blank)
    assert tile.pixels.shape == (64, 64, 3)
    assert tile.grid_coord == blank
    assert tile.slide_id == "slide"
    assert (tile.pixels == 255).all()

    tinted = extract_tile(slide, grid, manifest_slide.particle_coords[0])
    assert tinted.pixels.min() < WHITE_MIN
    assert tinted.tile_px == 64

    with pytest.raises(OutOfGridError):
        extract_tile(slide, grid, (5, 0))


def test_iterate_tiles_row_major_and_exactly_once(manifest_slide):
    slide = open_slide(manifest_slide.path)
    grid = make_grid(slide, rows=3, cols=4, tile_px=64)
    tiles = list(iterate_tiles(slide, grid))
    assert [t.grid_coord for t in tiles] == grid.coords()


def test_iterate_tiles_seeded_shuffle(manifest_slide):
    slide = open_slide(manifest_slide.path)
    grid = make_grid(slide, rows=3, cols=4, tile_px=64)
    first = [t.grid_coord for t in iterate_tiles(slide, grid, order="seeded-shuffle", seed=3)]
    again = [t.grid_coord for t in iterate_tiles(slide, grid, order="seeded-shuffle", seed=3)]
    other = [t.grid_coord for t in iterate_tiles(slide, grid, order="seeded-shuffle", seed=4)]
    assert first == again
    assert sorted(first) == grid.coords()
    assert first != grid.coords() or first != other

    with pytest.raises(InvalidGeometryError):
        next(iterate_tiles(slide, grid, order="seeded-shuffle"))
    with pytest.raises(InvalidGeometryError):
        next(iterate_tiles(slide, grid, order="spiral"))


def test_iterate_tiles_error_policy(manifest_slide):
    r, c = manifest_slide.particle_coords[0]
    raster = manifest_slide.path / f"raster_{r:02d}_{c:02d}.png"
    raster.write_bytes(b"broken")

    slide = open_slide(manifest_slide.path)
    grid = make_grid(slide, rows=3, cols=4, tile_px=64)
    with pytest.raises(ReadFailureError):
        list(iterate_tiles(slide, grid))

    slide = open_slide(manifest_slide.path)
    failures = []
    tiles = list(iterate_tiles(slide, grid, on_error=lambda coord, exc: failures.append(coord)))
    assert failures == [(r, c)]
    assert len(tiles) == len(grid) - 1
    assert (r, c) not in {t.grid_coord for t in tiles}
