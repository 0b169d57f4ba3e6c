"""Point prompt selection.

Filters detection candidates with a density-adaptive similarity
threshold (looser as the object count grows) plus a spatial gate that
keeps only points lying inside at least one grounded detection box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .imgproc import std_normal_cdf
from .raster import BoundingBox, pixel_round

__all__ = [
    "SimilarityField",
    "SelectedPrompt",
    "NORM_FACTOR",
    "adaptive_threshold",
    "exceed_probability",
    "select_prompts",
    "selected_to_json",
]

log = logging.getLogger(__name__)

# Normalization constant k in the adaptive threshold s_max * k / count.
NORM_FACTOR = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SimilarityField:
    """Per-pixel query/support similarity scores (cosine scale)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("similarity field must be a non-empty 2-D grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("similarity scores must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def max_score(self) -> float:
        return float(self.values.max())

    def score_at(self, x: float, y: float) -> float:
        xi, yi = pixel_round(x), pixel_round(y)
        if not (0 <= xi < self.width and 0 <= yi < self.height):
            raise ValueError(f"point ({x}, {y}) outside similarity field")
        return float(self.values[yi, xi])


@dataclass(frozen=True)
class SelectedPrompt:
    """A candidate that survived selection.

    gate_box is the index of the first detection box containing the
    point (-1 only for ungated ablation arms that bypass selection).
    """

    x: float
    y: float
    score: float
    gate_box: int


def adaptive_threshold(s_max: float, count: int, k: float = NORM_FACTOR) -> float | None:
    """Similarity cutoff s_max * k / count for count > 1.

    The cutoff loosens as the count grows, so dense scenes keep weakly
    scoring but valid points.  For count == 1 the caller must select
    only the point carrying the maximum score; that mode is signalled by
    returning None.
    """
    if count == 0:
        raise ValueError("no objects")
    if count < 0:
        raise ValueError(f"object count must be >= 1, got {count}")
    if not math.isfinite(s_max):
        raise ValueError("s_max must be finite")
    if not k > 0:
        raise ValueError("normalization factor must be > 0")
    if count == 1:
        return None
    return s_max * k / count


def exceed_probability(t_adapt: float, mu: float, sigma: float) -> float:
    """P(score > t_adapt) for Gaussian scores; diagnostic only."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return 1.0 - std_normal_cdf((t_adapt - mu) / sigma)


def _first_gate(boxes, x: float, y: float) -> int | None:
    for i, box in enumerate(boxes):
        if box.contains(x, y):
            return i
    return None


def select_prompts(candidates,
                   sim: SimilarityField,
                   boxes: list[BoundingBox],
                   count: int | None = None,
                   k: float = NORM_FACTOR) -> list[SelectedPrompt]:
    """Keep candidates that score above the adaptive threshold and sit
    inside at least one detection box.

    count defaults to the number of candidates (the only instance count
    available at this stage).  Comparison against the threshold is
    strict, box containment includes edges, and each point records the
    first box that admitted it.  Candidates landing on the same rounded
    pixel are emitted once, which also prunes the redundant parent point
    of a split composite.  An empty box list gates out everything and is
    reported as a warning.
    """
    candidates = list(candidates)
    if not candidates:
        return []
    if count is None:
        count = len(candidates)
    if not boxes:
        log.warning("no detection boxes: box gate rejects all %d candidates",
                    len(candidates))
        return []

    threshold = adaptive_threshold(sim.max_score(), count, k)

    if threshold is None:
        # single-object mode: only the best-scoring gated candidate
        best: SelectedPrompt | None = None
        for c in candidates:
            gate = _first_gate(boxes, c.x, c.y)
            if gate is None:
                continue
            score = sim.score_at(c.x, c.y)
            if best is None or score > best.score:
                best = SelectedPrompt(x=c.x, y=c.y, score=score, gate_box=gate)
        return [] if best is None else [best]

    selected: list[SelectedPrompt] = []
    seen_pixels: set[tuple[int, int]] = set()
    for c in candidates:
        score = sim.score_at(c.x, c.y)
        if not score > threshold:
            continue
        gate = _first_gate(boxes, c.x, c.y)
        if gate is None:
            continue
        pixel = (pixel_round(c.x), pixel_round(c.y))
        if pixel in seen_pixels:
            continue
        seen_pixels.add(pixel)
        selected.append(SelectedPrompt(x=c.x, y=c.y, score=score, gate_box=gate))
    return selected


def selected_to_json(prompts) -> list[dict]:
    """Wire format for selected prompts."""
    return [{"x": p.x, "y": p.y, "score": p.score, "gate_box": p.gate_box}
            for p in prompts]
