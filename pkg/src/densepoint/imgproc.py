"""Classical image-processing primitives used by instance detection.

Thresholding, 3x3 erosion, 8-connected component extraction, exact
Euclidean distance transform, spatial moments, and the standard normal
CDF.  Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import BinaryImage, GrayImage

__all__ = [
    "Contour",
    "DistanceField",
    "CENTROID_EPS",
    "threshold_binary",
    "erode3x3",
    "find_contours",
    "distance_transform",
    "centroid",
    "std_normal_cdf",
]

# Perturbation added to m00 when dividing; small enough that centroids of
# any region with at least one pixel move by less than 1e-3.
CENTROID_EPS = 1e-5

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True, eq=False)
class Contour:
    """One 8-connected foreground component.

    pixels and boundary are (n, 2) int arrays of (x, y) coordinates in
    raster scan order; boundary pixels are those with at least one
    4-neighbour outside the component (image edges count as outside).
    moments are the raw spatial moments (m00, m10, m01) of the unit
    indicator over the pixel set.
    """

    pixels: np.ndarray
    boundary: np.ndarray
    area: float
    moments: tuple[float, float, float]

    def __post_init__(self):
        if self.pixels.shape[0] == 0:
            raise ValueError("contour must contain at least one pixel")
        if self.area != float(self.pixels.shape[0]):
            raise ValueError("contour area must equal its pixel count")
        self.pixels.flags.writeable = False
        self.boundary.flags.writeable = False

    @property
    def bounding_box(self) -> tuple[int, int, int, int]:
        xs = self.pixels[:, 0]
        ys = self.pixels[:, 1]
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Per-pixel Euclidean distance to the nearest zero pixel."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("distance field must be a non-empty 2-D grid")
        if float(arr.min()) < 0.0:
            raise ValueError("distances must be >= 0")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def threshold_binary(gray: GrayImage, threshold: int) -> BinaryImage:
    """1 where intensity >= threshold, else 0 (boundary inclusive)."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold {threshold} outside [0, 255]")
    return BinaryImage((gray.values >= threshold).astype(np.uint8))


def erode3x3(binary: BinaryImage) -> BinaryImage:
    """Morphological erosion with a full 3x3 kernel.

    Out-of-bounds neighbours count as background, so foreground touching
    the image edge is always eroded.
    """
    padded = np.pad(binary.values, 1, constant_values=0)
    out = padded[1:-1, 1:-1].copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            np.minimum(out, padded[1 + dy:padded.shape[0] - 1 + dy,
                                   1 + dx:padded.shape[1] - 1 + dx], out=out)
    return BinaryImage(out)


def _boundary_mask(values: np.ndarray) -> np.ndarray:
    # foreground pixels with a 4-neighbour that is background or off-image
    padded = np.pad(values, 1, constant_values=0)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return values.astype(bool) & ~interior.astype(bool)


def find_contours(binary: BinaryImage) -> list[Contour]:
    """Extract one contour per 8-connected foreground component.

    External components only, no hole topology.  Components are ordered
    by (min-y, min-x) of their pixel sets, pixels within a component in
    raster scan order.  An empty image yields an empty list.
    """
    values = binary.values
    labels, count = ndimage.label(values, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    boundary = _boundary_mask(values)
    slices = ndimage.find_objects(labels)
    order = sorted(range(count), key=lambda i: (slices[i][0].start, slices[i][1].start))
    contours = []
    for idx in order:
        sl = slices[idx]
        local = labels[sl] == idx + 1
        ys, xs = np.nonzero(local)
        xs = (xs + sl[1].start).astype(np.int32)
        ys = (ys + sl[0].start).astype(np.int32)
        pixels = np.column_stack([xs, ys])
        on_boundary = boundary[ys, xs]
        m00 = float(xs.size)
        m10 = float(xs.sum())
        m01 = float(ys.sum())
        contours.append(Contour(
            pixels=pixels,
            boundary=pixels[on_boundary],
            area=m00,
            moments=(m00, m10, m01),
        ))
    return contours


def distance_transform(binary: BinaryImage) -> DistanceField:
    """Exact Euclidean distance to the nearest zero pixel.

    Everything outside the image counts as zero, so an all-ones image
    still has finite distances (3.0 at the centre of a 5x5 grid).
    """
    padded = np.pad(binary.values, 1, constant_values=0)
    dist = ndimage.distance_transform_edt(padded)
    return DistanceField(dist[1:-1, 1:-1])


def centroid(contour: Contour) -> tuple[float, float]:
    """Moment centroid (m10 / (m00 + eps), m01 / (m00 + eps))."""
    m00, m10, m01 = contour.moments
    return m10 / (m00 + CENTROID_EPS), m01 / (m00 + CENTROID_EPS)


_SQRT2 = math.sqrt(2.0)


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF, absolute error below 1e-7 everywhere."""
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    p = 0.5 * (1.0 + math.erf(z / _SQRT2))
    # keep the value in the open interval (0, 1) for extreme arguments
    return min(max(p, 5e-324), 1.0 - 2.0 ** -53)
