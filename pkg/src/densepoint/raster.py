"""Core raster types, conversions, and file I/O shared by all modules.

Conventions (inherited by the whole package): row-major storage, origin
at the top-left, and (x, y) = (column, row).  All raster values are
frozen after construction, so instances can be shared freely across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "RasterError",
    "DensityMap",
    "GrayImage",
    "BinaryImage",
    "BoundingBox",
    "Mask",
    "pixel_round",
    "normalize_to_gray",
    "mask_apply",
    "read_raster",
    "write_raster",
]


class RasterError(ValueError):
    """Malformed or unsupported raster data.

    ``offset`` carries the byte offset of the offending data when the
    format makes one meaningful (binary formats), otherwise None.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True, order="C")
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("raster must be a non-empty 2-D grid")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DensityMap:
    """Non-negative per-pixel object density; its integral tracks count."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("density values must be finite")
        if float(arr.min()) < 0.0:
            raise ValueError("density values must be >= 0")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def integral(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image with intensities in [0, 255]."""

    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.dtype != np.uint8:
            if raw.size and (raw.min() < 0 or raw.max() > 255):
                raise ValueError("gray intensities must lie in [0, 255]")
        object.__setattr__(self, "values", _frozen_array(raw, np.uint8))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Image whose pixels are exactly 0 or 1."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, np.uint8)
        if arr.size and int(arr.max()) > 1:
            raise ValueError("binary pixels must be 0 or 1")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def foreground_count(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with inclusive pixel corners and a confidence."""

    x0: int
    y0: int
    x1: int
    y1: int
    confidence: float = 1.0

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate box corners ({self.x0},{self.y0})..({self.x1},{self.y1})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("box confidence must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        # edges are inclusive
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary segmentation mask plus the decoder's confidence score."""

    values: np.ndarray
    score: float = 1.0

    def __post_init__(self):
        arr = _frozen_array(self.values, np.uint8)
        if arr.size and int(arr.max()) > 1:
            raise ValueError("mask pixels must be 0 or 1")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("mask score must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def area(self) -> int:
        return int(self.values.sum())

    def bounding_box(self) -> BoundingBox:
        ys, xs = np.nonzero(self.values)
        if ys.size == 0:
            raise ValueError("empty mask has no bounding box")
        return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()),
                           confidence=self.score)


def pixel_round(value: float) -> int:
    """Round half up; the package-wide rule for snapping coordinates."""
    return int(math.floor(value + 0.5))


def normalize_to_gray(dm: DensityMap) -> GrayImage:
    """Linear max-normalization of a density map to 8-bit gray.

    value -> round(255 * v / v_max) with round-half-up; an all-zero map
    produces an all-zero image.  Scale-invariant: multiplying the map by
    any positive constant leaves the output unchanged.
    """
    vmax = float(dm.values.max())
    if vmax == 0.0:
        return GrayImage(np.zeros(dm.values.shape, dtype=np.uint8))
    scaled = np.floor(255.0 * dm.values / vmax + 0.5)
    return GrayImage(scaled.astype(np.uint8))


def mask_apply(image: GrayImage, mask: BinaryImage) -> GrayImage:
    """Pixelwise product of an image with a {0,1} mask."""
    if image.values.shape != mask.values.shape:
        raise ValueError(
            f"dimension mismatch: image {image.values.shape} vs mask {mask.values.shape}")
    return GrayImage(image.values * mask.values)


# --------------------------------------------------------------------------
# File formats: binary PGM (P5, maxval 255), 8-bit grayscale PNG, and a JSON
# float grid {"width": W, "height": H, "values": [row-major floats]}.
# --------------------------------------------------------------------------

def _write_pgm(img: GrayImage, path: Path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    path.write_bytes(header + img.values.tobytes())


def _read_pgm(path: Path) -> GrayImage:
    data = path.read_bytes()
    pos = 0

    def skip_separators(p: int) -> int:
        while p < len(data):
            if data[p:p + 1].isspace():
                p += 1
            elif data[p:p + 1] == b"#":
                while p < len(data) and data[p] != 0x0A:
                    p += 1
            else:
                break
        return p

    def read_token(p: int) -> tuple[bytes, int, int]:
        p = skip_separators(p)
        start = p
        while p < len(data) and not data[p:p + 1].isspace():
            p += 1
        if start == p:
            raise RasterError("truncated PGM header", offset=start)
        return data[start:p], start, p

    magic, start, pos = read_token(pos)
    if magic != b"P5":
        raise RasterError(f"not a binary PGM (magic {magic!r})", offset=start)
    fields = []
    for name in ("width", "height", "maxval"):
        token, start, pos = read_token(pos)
        try:
            value = int(token)
        except ValueError:
            raise RasterError(f"invalid PGM {name} {token!r}", offset=start) from None
        if value <= 0:
            raise RasterError(f"invalid PGM {name} {value}", offset=start)
        fields.append((value, start))
    (width, _), (height, _), (maxval, maxval_off) = fields
    if maxval != 255:
        raise RasterError(f"unsupported PGM maxval {maxval}, only 255 is supported",
                          offset=maxval_off)
    pos += 1  # single whitespace byte after maxval
    expected = width * height
    pixels = data[pos:pos + expected]
    if len(pixels) != expected:
        raise RasterError(
            f"PGM pixel data truncated: expected {expected} bytes, found {len(pixels)}",
            offset=len(data))
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
    return GrayImage(arr)


def _write_png(img: GrayImage, path: Path) -> None:
    Image.fromarray(np.asarray(img.values), mode="L").save(path, format="PNG")


def _read_png(path: Path) -> GrayImage:
    with Image.open(path) as im:
        if im.format != "PNG":
            raise RasterError(f"not a PNG file ({im.format})")
        if im.mode != "L":
            raise RasterError(f"unsupported PNG mode {im.mode!r}, need 8-bit grayscale")
        return GrayImage(np.asarray(im, dtype=np.uint8))


def _write_json_grid(dm: DensityMap, path: Path) -> None:
    doc = {
        "width": dm.width,
        "height": dm.height,
        "values": [float(v) for v in dm.values.ravel()],
    }
    path.write_text(json.dumps(doc))


def _read_json_grid(path: Path) -> DensityMap:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RasterError(f"invalid JSON grid: {exc}") from exc
    for key in ("width", "height", "values"):
        if key not in doc:
            raise RasterError(f"JSON grid missing field {key!r}")
    width, height = doc["width"], doc["height"]
    if not (isinstance(width, int) and isinstance(height, int)) or width <= 0 or height <= 0:
        raise RasterError(f"invalid JSON grid dimensions {width}x{height}")
    values = doc["values"]
    if len(values) != width * height:
        raise RasterError(
            f"JSON grid has {len(values)} values, expected {width * height}")
    arr = np.asarray(values, dtype=np.float64).reshape(height, width)
    if not np.all(np.isfinite(arr)):
        raise RasterError("JSON grid contains non-finite values")
    if float(arr.min()) < 0.0:
        raise RasterError("JSON grid contains a negative density value")
    return DensityMap(arr)


_FORMATS = ("pgm", "png", "json")


def write_raster(img: GrayImage | DensityMap, path: str | Path, format: str) -> None:
    """Write a raster in one of the supported formats.

    GrayImage goes to "pgm" or "png"; DensityMap goes to "json".
    """
    path = Path(path)
    if format not in _FORMATS:
        raise ValueError(f"unknown raster format {format!r}, expected one of {_FORMATS}")
    if format == "json":
        if not isinstance(img, DensityMap):
            raise ValueError("JSON grids store density maps, not gray images")
        _write_json_grid(img, path)
        return
    if not isinstance(img, GrayImage):
        raise ValueError(f"{format} stores gray images, not {type(img).__name__}")
    if format == "pgm":
        _write_pgm(img, path)
    else:
        _write_png(img, path)


def read_raster(path: str | Path, format: str) -> GrayImage | DensityMap:
    """Read a raster written by :func:`write_raster` (lossless round trip)."""
    path = Path(path)
    if format == "pgm":
        return _read_pgm(path)
    if format == "png":
        return _read_png(path)
    if format == "json":
        return _read_json_grid(path)
    raise ValueError(f"unknown raster format {format!r}, expected one of {_FORMATS}")
