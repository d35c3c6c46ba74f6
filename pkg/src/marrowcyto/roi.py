"""Region-of-interest gating: decide which tiles are worth detecting on.

A tile classifier scores each 512x512 tile in [0, 1]; tiles at or above
the acceptance threshold proceed to detection, the rest are skipped.
Typically only 10-20% of a marrow slide's tiles carry countable
particles, so the gate is where most of the runtime is saved.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import BackendUnavailableError, InferenceFailureError
from .slides import Tile

DEFAULT_ROI_THRESHOLD = 0.5

# Advisory band: over a whole slide the accepted fraction is expected to
# land between these bounds. Outside the band the run is flagged, not
# failed, because atypical slides legitimately fall outside it.
EXPECTED_ROI_FRACTION_LOW = 0.05
EXPECTED_ROI_FRACTION_HIGH = 0.5


@dataclass(frozen=True)
class RoiScore:
    """Classifier output for one tile."""

    tile_coord: tuple[int, int]
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class RoiDecision:
    """Gate outcome for one tile; accepted is score >= threshold."""

    tile_coord: tuple[int, int]
    score: float
    threshold: float
    accepted: bool


class TileClassifierBackend(ABC):
    """Scores tiles for particle content; 1.0 means certainly countable."""

    @abstractmethod
    def score(self, tile: Tile) -> float:
        """Return a score in [0, 1] for one tile."""


def score_tile(backend: TileClassifierBackend, tile: Tile) -> RoiScore:
    raw = float(backend.score(tile))
    if not 0.0 <= raw <= 1.0:
        raise InferenceFailureError(
            f"backend returned out-of-range score {raw} for tile {tile.grid_coord}"
        )
    return RoiScore(tile_coord=tile.grid_coord, score=raw)


def gate(score: RoiScore, threshold: float = DEFAULT_ROI_THRESHOLD) -> RoiDecision:
    """Accept a tile iff its score is at or above the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return RoiDecision(
        tile_coord=score.tile_coord,
        score=score.score,
        threshold=threshold,
        accepted=score.score >= threshold,
    )


def roi_fraction(decisions: Sequence[RoiDecision]) -> float:
    if not decisions:
        raise ValueError("no decisions to summarize")
    return sum(1 for d in decisions if d.accepted) / len(decisions)


def expected_roi_fraction_check(decisions: Sequence[RoiDecision]) -> tuple[float, bool]:
    """Return (accepted fraction, within-expected-band flag)."""
    frac = roi_fraction(decisions)
    return frac, EXPECTED_ROI_FRACTION_LOW <= frac <= EXPECTED_ROI_FRACTION_HIGH


def decisions_to_jsonl(decisions: Iterable[RoiDecision]) -> str:
    """One JSON object per line, in the order decisions were made."""
    lines = []
    for d in decisions:
        lines.append(
            json.dumps(
                {
                    "tile": list(d.tile_coord),
                    "score": d.score,
                    "threshold": d.threshold,
                    "accepted": d.accepted,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def decisions_from_jsonl(text: str) -> list[RoiDecision]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        out.append(
            RoiDecision(
                tile_coord=tuple(rec["tile"]),
                score=float(rec["score"]),
                threshold=float(rec["threshold"]),
                accepted=bool(rec["accepted"]),
            )
        )
    return out


class RemoteTileClassifier(TileClassifierBackend):
    """HTTP tile classifier: POST {image: <base64 png>} -> {score: float}."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def score(self, tile: Tile) -> float:
        import requests

        from .detect import encode_tile_png

        payload = {"image": encode_tile_png(tile.pixels)}
        try:
            resp = requests.post(
                f"{self.url}/score", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"tile classifier unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise InferenceFailureError(
                f"tile classifier returned HTTP {resp.status_code}"
            )
        try:
            return float(resp.json()["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InferenceFailureError(f"malformed classifier response: {exc}") from exc
