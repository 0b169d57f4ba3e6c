"""PNG overlay rendering for visual audits of pipeline stages."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .raster import BoundingBox

__all__ = ["save_png", "gray_to_rgb", "draw_cross", "draw_box", "stage_images"]

RED = (220, 40, 40)
GREEN = (60, 220, 60)
YELLOW = (235, 200, 40)
BLUE = (70, 120, 235)


def gray_to_rgb(values: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=np.uint8)[:, :, None], 3, axis=2).copy()


def draw_cross(rgb: np.ndarray, x: float, y: float, color, size: int = 4) -> None:
    h, w = rgb.shape[:2]
    xi, yi = int(round(x)), int(round(y))
    for d in range(-size, size + 1):
        if 0 <= yi < h and 0 <= xi + d < w:
            rgb[yi, xi + d] = color
        if 0 <= yi + d < h and 0 <= xi < w:
            rgb[yi + d, xi] = color


def draw_box(rgb: np.ndarray, box: BoundingBox, color) -> None:
    h, w = rgb.shape[:2]
    x0, y0 = max(0, box.x0), max(0, box.y0)
    x1, y1 = min(w - 1, box.x1), min(h - 1, box.y1)
    rgb[y0, x0:x1 + 1] = color
    rgb[y1, x0:x1 + 1] = color
    rgb[y0:y1 + 1, x0] = color
    rgb[y0:y1 + 1, x1] = color


def save_png(pixels: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(pixels, dtype=np.uint8)
    mode = "RGB" if arr.ndim == 3 else "L"
    Image.fromarray(arr, mode=mode).save(Path(path), format="PNG")


def stage_images(result, boxes: list[BoundingBox]) -> list[tuple[str, np.ndarray]]:
    """Six per-stage audit images for one pipeline result.

    Density gray, binary, eroded, candidate crosses, selected crosses,
    and the final mask overlay, all drawn over the final pass.
    """
    trace = result.passes[-1]
    gray = trace.detection.gray.values
    images: list[tuple[str, np.ndarray]] = [
        ("01_density", gray.copy()),
        ("02_binary", (trace.detection.binary.values * 255).astype(np.uint8)),
        ("03_eroded", (trace.detection.eroded.values * 255).astype(np.uint8)),
    ]

    cand = gray_to_rgb(gray)
    for box in boxes:
        draw_box(cand, box, YELLOW)
    for c in trace.detection.candidates:
        draw_cross(cand, c.x, c.y, RED)
    images.append(("04_candidates", cand))

    sel = gray_to_rgb(gray)
    for box in boxes:
        draw_box(sel, box, YELLOW)
    for p in trace.prompts:
        draw_cross(sel, p.x, p.y, GREEN)
    images.append(("05_selected", sel))

    final = gray_to_rgb(gray)
    merged = result.merged_mask.values.astype(bool)
    final[merged] = (0.45 * np.array(BLUE) + 0.55 * final[merged]).astype(np.uint8)
    for p in result.prompts:
        draw_cross(final, p.x, p.y, GREEN)
    images.append(("06_masks", final))
    return images
