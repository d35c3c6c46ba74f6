import random

import numpy as np
import pytest

from marrowcyto.classes import ALL_CLASSES, CellClass
from marrowcyto.slides import Tile, extract_tile, make_grid, open_slide
from marrowcyto.synthetic import (
    CLASS_COLORS,
    MARROW_MIXTURE,
    MEAN_OBJECTS_PER_TILE,
    WHITE_MIN,
    DistributionDetector,
    PlantedObjectDetector,
    SyntheticRoiBackend,
    _poisson,
    build_synthetic_slide,
    hct_stream,
    load_planted,
)


def _tile(pixels, coord=(0, 0)):
    return Tile(grid_coord=coord, origin_px=(0, 0), pixels=pixels, slide_id="t")


# ---------------------------------------------------------------------------
# Constants


def test_class_colors_cover_every_class_distinctly():
    assert set(CLASS_COLORS) == set(ALL_CLASSES)
    assert len(set(CLASS_COLORS.values())) == len(ALL_CLASSES)
    for color in CLASS_COLORS.values():
        # Every palette entry must trip the non-white mask.
        assert min(color) < WHITE_MIN


def test_marrow_mixture_is_a_distribution():
    assert set(MARROW_MIXTURE) == set(ALL_CLASSES)
    assert all(p > 0 for p in MARROW_MIXTURE.values())
    assert sum(MARROW_MIXTURE.values()) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Slide builder


def test_builder_geometry_and_particle_budget(tmp_path):
    slide = build_synthetic_slide(
        tmp_path / "s", rows=4, cols=5, tile_px=64, roi_fraction=0.2, seed=3
    )
    assert slide.width_px == 5 * 64
    assert slide.height_px == 4 * 64
    assert len(slide.particle_coords) == round(0.2 * 20)
    assert set(slide.planted) == set(slide.particle_coords)
    for boxes in slide.planted.values():
        for box in boxes:
            assert box.cls in ALL_CLASSES
            assert box.w == box.h
            assert 0.0 < box.cx - box.w / 2 and box.cx + box.w / 2 < 1.0
            assert 0.0 < box.cy - box.h / 2 and box.cy + box.h / 2 < 1.0


def test_builder_is_deterministic_per_seed(tmp_path):
    a = build_synthetic_slide(tmp_path / "a", rows=3, cols=3, tile_px=64, seed=7)
    b = build_synthetic_slide(tmp_path / "b", rows=3, cols=3, tile_px=64, seed=7)
    c = build_synthetic_slide(tmp_path / "c", rows=3, cols=3, tile_px=64, seed=8)
    assert a.particle_coords == b.particle_coords
    assert a.planted == b.planted
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.planted != c.planted


def test_planted_sidecar_round_trips(tmp_path):
    slide = build_synthetic_slide(tmp_path / "s", rows=3, cols=4, tile_px=64, seed=11)
    assert load_planted(tmp_path / "s" / "planted.json") == slide.planted

    tiff = build_synthetic_slide(
        tmp_path / "t.tiff", rows=3, cols=4, tile_px=64, seed=11, container="tiff"
    )
    assert load_planted(tmp_path / "t.planted.json") == tiff.planted == slide.planted


def test_builder_rejects_unknown_container(tmp_path):
    with pytest.raises(ValueError):
        build_synthetic_slide(tmp_path / "s", container="zarr")


# ---------------------------------------------------------------------------
# Planted detector


def test_planted_detector_recovers_ground_truth_exactly(tmp_path):
    slide = build_synthetic_slide(
        tmp_path / "s", rows=3, cols=4, tile_px=64, roi_fraction=0.5, seed=21
    )
    handle = open_slide(slide.path)
    grid = make_grid(handle, rows=3, cols=4, tile_px=64)
    detector = PlantedObjectDetector()
    for coord in slide.particle_coords:
        tile = extract_tile(handle, grid, coord)
        got = detector.detect(tile)
        want = slide.planted[coord]
        assert len(got) == len(want)
        got_keys = sorted((d["class_id"], d["cx"], d["cy"], d["w"], d["h"]) for d in got)
        want_keys = sorted((int(b.cls), b.cx, b.cy, b.w, b.h) for b in want)
        assert got_keys == want_keys
        for d in got:
            assert 0.5 <= d["confidence"] < 1.0


def test_planted_detector_is_pixel_deterministic(tmp_path):
    slide = build_synthetic_slide(tmp_path / "s", rows=2, cols=2, tile_px=64, seed=4)
    handle = open_slide(slide.path)
    grid = make_grid(handle, rows=2, cols=2, tile_px=64)
    tile = extract_tile(handle, grid, slide.particle_coords[0])
    assert PlantedObjectDetector().detect(tile) == PlantedObjectDetector().detect(tile)


def test_planted_detector_sees_nothing_on_glass():
    white = np.full((64, 64, 3), 255, dtype=np.uint8)
    assert PlantedObjectDetector().detect(_tile(white)) == []


# ---------------------------------------------------------------------------
# Distribution detector


def test_distribution_detector_keys_on_seed_and_coord():
    white = np.full((64, 64, 3), 255, dtype=np.uint8)
    noisy = np.random.default_rng(0).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    det = DistributionDetector(seed=12)
    same_coord = det.detect(_tile(white, (2, 3)))
    assert det.detect(_tile(noisy, (2, 3))) == same_coord
    assert DistributionDetector(seed=12).detect(_tile(white, (2, 3))) == same_coord
    assert det.detect(_tile(white, (3, 2))) != same_coord
    assert DistributionDetector(seed=13).detect(_tile(white, (2, 3))) != same_coord


def test_distribution_detector_emits_valid_payloads():
    det = DistributionDetector(seed=1)
    seen = 0
    for r in range(6):
        for c in range(6):
            for d in det.detect(_tile(np.zeros((8, 8, 3), np.uint8), (r, c))):
                seen += 1
                assert d["class_id"] in {int(cls) for cls in ALL_CLASSES}
                assert 0.3 <= d["confidence"] <= 1.0
                assert 0.04 <= d["w"] <= 0.12 and 0.04 <= d["h"] <= 0.12
                assert d["w"] / 2 <= d["cx"] <= 1 - d["w"] / 2
                assert d["h"] / 2 <= d["cy"] <= 1 - d["h"] / 2
    assert seen > 0


def test_distribution_detector_honors_custom_mixture():
    det = DistributionDetector(seed=2, mixture={CellClass.BLAST: 1.0}, mean_objects=20.0)
    dets = det.detect(_tile(np.zeros((8, 8, 3), np.uint8), (0, 0)))
    assert dets
    assert {d["class_id"] for d in dets} == {int(CellClass.BLAST)}


# ---------------------------------------------------------------------------
# HCT stream


def test_hct_stream_is_deterministic():
    a = hct_stream(seed=3)
    b = hct_stream(seed=3)
    for _ in range(10):
        assert next(a).counts == next(b).counts


def test_hct_stream_matches_the_generating_law():
    stream = hct_stream(seed=5)
    totals = {cls: 0 for cls in ALL_CLASSES}
    n = 4000
    for _ in range(n):
        for cls, k in next(stream).counts.items():
            totals[cls] += k
    grand = sum(totals.values())
    assert grand / n == pytest.approx(MEAN_OBJECTS_PER_TILE, abs=0.3)
    assert totals[CellClass.ERYTHROBLAST] / grand == pytest.approx(
        MARROW_MIXTURE[CellClass.ERYTHROBLAST], abs=0.03
    )


def test_hct_stream_custom_mixture_restricts_support():
    stream = hct_stream(seed=9, mixture={CellClass.LYMPHOCYTE: 1.0}, mean_objects=3.0)
    drawn = 0
    for _ in range(200):
        counts = next(stream).counts
        assert all(k == 0 for cls, k in counts.items() if cls is not CellClass.LYMPHOCYTE)
        drawn += counts[CellClass.LYMPHOCYTE]
    assert drawn / 200 == pytest.approx(3.0, abs=0.5)


# ---------------------------------------------------------------------------
# Helpers


def test_poisson_sampler_mean_and_degenerate_rate():
    rng = random.Random(31)
    draws = [_poisson(rng, 9.5) for _ in range(5000)]
    assert sum(draws) / len(draws) == pytest.approx(9.5, abs=0.3)
    assert all(_poisson(rng, 0.0) == 0 for _ in range(100))


def test_roi_backend_score_is_coverage_over_divisor():
    pixels = np.full((8, 8, 3), 255, dtype=np.uint8)
    pixels[:4] = 0
    assert SyntheticRoiBackend().score(_tile(pixels)) == 1.0
    assert SyntheticRoiBackend(full_score_fraction=0.6).score(_tile(pixels)) == pytest.approx(
        0.5 / 0.6
    )
    with pytest.raises(ValueError):
        SyntheticRoiBackend(full_score_fraction=0.0)
