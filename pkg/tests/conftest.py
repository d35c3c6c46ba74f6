"""Shared generators for the metric and geometry tests.

Random boxes live on a dyadic grid (centers in 1/64 steps, sizes in
1/32 steps) so every corner, area, intersection and center distance is
exact in float arithmetic; the only rounding anywhere is the final
correctly-rounded division of a ratio. That makes two independent
implementations of the same formula agree bit for bit, which is what
lets the oracle comparisons demand exact equality.

Confidences are quantized to 1/128 steps so rank ties actually occur,
and image counts are powers of two so FPPI values are dyadic and can
never collide with the irrational log-spaced sample points.
"""

from __future__ import annotations

import random

import pytest

from marrowcyto.classes import CellClass
from marrowcyto.detect import BBox, Detection
from marrowcyto.evalmetrics import EvalSample, GroundTruthBox

Box = tuple[float, float, float, float]


def quantized_box(rng: random.Random) -> Box:
    wk = rng.randint(1, 16)
    hk = rng.randint(1, 16)
    m = rng.randint(wk, 64 - wk)
    n = rng.randint(hk, 64 - hk)
    return (m / 64, n / 64, wk / 32, hk / 32)


def quantized_conf(rng: random.Random) -> float:
    return rng.randint(0, 128) / 128


def raw_detections(
    rng: random.Random, n: int, n_classes: int = 5
) -> list[tuple[Box, int, float]]:
    return [
        (quantized_box(rng), rng.randrange(n_classes), quantized_conf(rng))
        for _ in range(n)
    ]


def raw_truths(rng: random.Random, n: int, n_classes: int = 5) -> list[tuple[Box, int]]:
    return [(quantized_box(rng), rng.randrange(n_classes)) for _ in range(n)]


def to_detection(raw: tuple[Box, int, float], coord=(0, 0), slide_id="s") -> Detection:
    box, cls_id, conf = raw
    return Detection(
        bbox=BBox(*box),
        cls=CellClass(cls_id),
        confidence=conf,
        tile_coord=coord,
        slide_id=slide_id,
    )


def to_truth(raw: tuple[Box, int]) -> GroundTruthBox:
    box, cls_id = raw
    return GroundTruthBox(bbox=BBox(*box), cls=CellClass(cls_id))


def make_sample(
    rng: random.Random,
    sample_id: str,
    max_dets: int = 20,
    max_gts: int = 20,
    n_classes: int = 5,
) -> tuple[EvalSample, list[tuple[Box, int, float]], list[tuple[Box, int]]]:
    raw_d = raw_detections(rng, rng.randint(0, max_dets), n_classes)
    raw_g = raw_truths(rng, rng.randint(0, max_gts), n_classes)
    sample = EvalSample(
        sample_id=sample_id,
        detections=[to_detection(d) for d in raw_d],
        truths=[to_truth(g) for g in raw_g],
    )
    return sample, raw_d, raw_g


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC17)
