"""Instance detection on density maps.

Converts a density map into candidate instance point prompts: normalize
to gray, threshold, erode, extract contours, flag composite contours as
area outliers above mu + 2*sigma of the contour-area distribution, and
split each composite into children by re-thresholding its distance
transform at half the peak distance.  Centroids of all top-level
contours plus the children of composites become the candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imgproc import (
    Contour,
    centroid,
    distance_transform,
    erode3x3,
    find_contours,
    std_normal_cdf,
    threshold_binary,
)
from .raster import BinaryImage, DensityMap, GrayImage, normalize_to_gray

__all__ = [
    "ContourStats",
    "CandidatePrompt",
    "DetectionResult",
    "DEFAULT_THRESHOLD",
    "contour_stats",
    "composite_probability",
    "split_composite",
    "extract_candidates",
    "candidates_to_json",
]

# Default intensity threshold for binarizing the normalized density map.
DEFAULT_THRESHOLD = 30


@dataclass(frozen=True)
class ContourStats:
    """Population statistics of the contour-area distribution.

    t_comp = mu + 2*sigma is the composite-contour cutoff: contours whose
    area strictly exceeds it are treated as multiple merged instances.
    """

    mu: float
    sigma: float
    t_comp: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("stats need at least one contour")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not math.isclose(self.t_comp, self.mu + 2.0 * self.sigma, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("t_comp must equal mu + 2*sigma")


@dataclass(frozen=True)
class CandidatePrompt:
    """A candidate instance location.

    source is "parent" for a top-level contour centroid and "child" for
    a sub-contour obtained by splitting a composite; parent_area is the
    area of the originating top-level contour in both cases.
    """

    x: float
    y: float
    source: str
    parent_area: float

    def __post_init__(self):
        if self.source not in ("parent", "child"):
            raise ValueError(f"unknown candidate source {self.source!r}")


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Candidates plus the intermediate rasters for auditing."""

    candidates: tuple[CandidatePrompt, ...]
    gray: GrayImage
    binary: BinaryImage
    eroded: BinaryImage
    contours: tuple[Contour, ...]
    stats: ContourStats | None
    composite_indices: tuple[int, ...] = field(default=())


def contour_stats(areas) -> ContourStats:
    """Mean, population standard deviation, and mu + 2*sigma cutoff."""
    arr = np.asarray(list(areas), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no contours")
    if float(arr.min()) <= 0.0:
        raise ValueError("contour areas must be > 0")
    mu = float(arr.mean())
    sigma = float(arr.std())  # divisor n, not n-1
    return ContourStats(mu=mu, sigma=sigma, t_comp=mu + 2.0 * sigma, n=int(arr.size))


def composite_probability(stats: ContourStats) -> float:
    """P(area > t_comp) under the fitted Gaussian; 1 - Phi(2) when sigma > 0.

    Exposed for diagnostics.  A zero-variance population has no
    outliers, so the probability is defined as 0 there.
    """
    if stats.sigma == 0.0:
        return 0.0
    return 1.0 - std_normal_cdf((stats.t_comp - stats.mu) / stats.sigma)


def split_composite(contour: Contour, binary: BinaryImage) -> list[Contour]:
    """Split one composite contour into child contours.

    The Euclidean distance transform restricted to the contour's pixels
    is re-thresholded at half its peak (strictly greater), and the
    surviving cores are extracted as 8-connected components.  Returns a
    single child when the region has no separable cores.  Children are
    expressed in full-image coordinates and never leave the parent's
    pixel set.
    """
    x0, y0, x1, y1 = contour.bounding_box
    # one-pixel margin so region pixels on the bbox edge see background
    region = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=np.uint8)
    region[contour.pixels[:, 1] - y0 + 1, contour.pixels[:, 0] - x0 + 1] = 1
    dist = distance_transform(BinaryImage(region)).values
    cores = (dist > 0.5 * float(dist.max())).astype(np.uint8)
    children = []
    for child in find_contours(BinaryImage(cores)):
        pixels = child.pixels + np.array([[x0 - 1, y0 - 1]], dtype=child.pixels.dtype)
        boundary = child.boundary + np.array([[x0 - 1, y0 - 1]], dtype=child.boundary.dtype)
        m00 = child.moments[0]
        m10 = float(pixels[:, 0].sum())
        m01 = float(pixels[:, 1].sum())
        children.append(Contour(pixels=pixels, boundary=boundary,
                                area=child.area, moments=(m00, m10, m01)))
    return children


def extract_candidates(dm: DensityMap,
                       threshold: int = DEFAULT_THRESHOLD,
                       emit_composite_parents: bool = True) -> DetectionResult:
    """Run the full detection pass over a density map.

    Emits one "parent" candidate per contour, in contour order, followed
    by the "child" candidates of every composite contour.  With
    emit_composite_parents=False the composites' own centroids are
    dropped and only their children are kept (ablation switch; the
    downstream selection stage is responsible for pruning redundant
    parent points in the default mode).
    """
    gray = normalize_to_gray(dm)
    binary = threshold_binary(gray, threshold)
    eroded = erode3x3(binary)
    contours = find_contours(eroded)
    if not contours:
        return DetectionResult(candidates=(), gray=gray, binary=binary,
                               eroded=eroded, contours=(), stats=None)

    stats = contour_stats([c.area for c in contours])
    composite_indices = tuple(i for i, c in enumerate(contours) if c.area > stats.t_comp)
    composite_set = frozenset(composite_indices)

    candidates: list[CandidatePrompt] = []
    for i, contour in enumerate(contours):
        if i in composite_set and not emit_composite_parents:
            continue
        cx, cy = centroid(contour)
        candidates.append(CandidatePrompt(x=cx, y=cy, source="parent",
                                          parent_area=contour.area))
    for i in composite_indices:
        parent = contours[i]
        for child in split_composite(parent, eroded):
            cx, cy = centroid(child)
            candidates.append(CandidatePrompt(x=cx, y=cy, source="child",
                                              parent_area=parent.area))

    return DetectionResult(candidates=tuple(candidates), gray=gray, binary=binary,
                           eroded=eroded, contours=tuple(contours), stats=stats,
                           composite_indices=composite_indices)


def candidates_to_json(candidates) -> list[dict]:
    """Wire format for candidate prompts."""
    return [{"x": c.x, "y": c.y, "source": c.source} for c in candidates]
