import random

import numpy as np
import pytest

from marrowcyto.errors import InferenceFailureError
from marrowcyto.roi import (
    DEFAULT_ROI_THRESHOLD,
    RoiDecision,
    RoiScore,
    decisions_from_jsonl,
    decisions_to_jsonl,
    expected_roi_fraction_check,
    gate,
    roi_fraction,
    score_tile,
)
from marrowcyto.slides import Tile
from marrowcyto.synthetic import SyntheticRoiBackend, build_synthetic_slide


def _tile(coord=(0, 0), fill=255):
    pixels = np.full((64, 64, 3), fill, dtype=np.uint8)
    return Tile(grid_coord=coord, origin_px=(0, 0), pixels=pixels, slide_id="s")


class _FixedBackend:
    def __init__(self, value):
        self.value = value

    def score(self, tile):
        return self.value


def test_score_tile_validates_backend_range():
    assert score_tile(_FixedBackend(0.75), _tile()).score == 0.75
    assert score_tile(_FixedBackend(0), _tile()).score == 0.0
    with pytest.raises(InferenceFailureError):
        score_tile(_FixedBackend(1.5), _tile())
    with pytest.raises(InferenceFailureError):
        score_tile(_FixedBackend(-0.1), _tile())


def test_roi_score_rejects_out_of_range():
    with pytest.raises(ValueError):
        RoiScore(tile_coord=(0, 0), score=1.01)


def test_gate_threshold_is_inclusive():
    at = gate(RoiScore(tile_coord=(0, 0), score=0.5), threshold=0.5)
    below = gate(RoiScore(tile_coord=(0, 1), score=0.4999), threshold=0.5)
    assert at.accepted is True
    assert below.accepted is False
    assert at.threshold == 0.5
    assert DEFAULT_ROI_THRESHOLD == 0.5


def test_gate_validates_threshold():
    with pytest.raises(ValueError):
        gate(RoiScore(tile_coord=(0, 0), score=0.5), threshold=1.5)


def test_roi_fraction_and_expected_band():
    decisions = [
        RoiDecision(tile_coord=(0, i), score=0.9, threshold=0.5, accepted=i < 3)
        for i in range(10)
    ]
    assert roi_fraction(decisions) == 0.3
    frac, ok = expected_roi_fraction_check(decisions)
    assert (frac, ok) == (0.3, True)

    none_accepted = [
        RoiDecision(tile_coord=(0, i), score=0.0, threshold=0.5, accepted=False)
        for i in range(10)
    ]
    frac, ok = expected_roi_fraction_check(none_accepted)
    assert (frac, ok) == (0.0, False)

    with pytest.raises(ValueError):
        roi_fraction([])


def test_decisions_jsonl_round_trip():
    rng = random.Random(41)
    decisions = []
    for i in range(50):
        score = rng.randint(0, 128) / 128
        decisions.append(
            RoiDecision(
                tile_coord=(i // 10, i % 10),
                score=score,
                threshold=0.5,
                accepted=score >= 0.5,
            )
        )
    text = decisions_to_jsonl(decisions)
    assert text.endswith("\n")
    assert len(text.strip().splitlines()) == 50
    assert decisions_from_jsonl(text) == decisions
    assert decisions_to_jsonl([]) == ""
    assert decisions_from_jsonl("") == []


def test_synthetic_backend_separates_particle_from_white(tmp_path):
    built = build_synthetic_slide(tmp_path / "slide", rows=3, cols=4, tile_px=64, seed=2)
    backend = SyntheticRoiBackend()
    particle = set(built.particle_coords)

    blank_tile = _tile(fill=255)
    assert score_tile(backend, blank_tile).score < 0.5

    from marrowcyto.slides import make_grid, open_slide, extract_tile

    slide = open_slide(built.path)
    grid = make_grid(slide, rows=3, cols=4, tile_px=64)
    for coord in grid.coords():
        tile = extract_tile(slide, grid, coord)
        decision = gate(score_tile(backend, tile))
        assert decision.accepted == (coord in particle)
