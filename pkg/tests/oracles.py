"""Brute-force reference implementations used only by tests.

These deliberately share no code with the library: flood-fill component
labelling, all-pairs distance search, a literal min filter, quadrature
for the normal CDF, and a direct transcription of the selection rule.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np
from scipy.integrate import quad


def flood_fill_components(values: np.ndarray) -> list[set[tuple[int, int]]]:
    """8-connected components as sets of (x, y), ordered by (min-y, min-x)."""
    h, w = values.shape
    seen = np.zeros_like(values, dtype=bool)
    components = []
    for y in range(h):
        for x in range(w):
            if values[y, x] == 0 or seen[y, x]:
                continue
            comp = set()
            queue = deque([(x, y)])
            seen[y, x] = True
            while queue:
                cx, cy = queue.popleft()
                comp.add((cx, cy))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < w and 0 <= ny < h and values[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((nx, ny))
            components.append(comp)
    components.sort(key=lambda c: (min(p[1] for p in c), min(p[0] for p in c)))
    return components


def all_pairs_edt(values: np.ndarray) -> np.ndarray:
    """Exact distance to the nearest zero, exterior counted as zero."""
    h, w = values.shape
    out = np.zeros((h, w), dtype=np.float64)
    zys, zxs = np.nonzero(values == 0)
    for y in range(h):
        for x in range(w):
            if values[y, x] == 0:
                continue
            border = min(x + 1, w - x, y + 1, h - y)
            best = float(border) ** 2
            if zxs.size:
                d2 = (zxs - x) ** 2 + (zys - y) ** 2
                best = min(best, float(d2.min()))
            out[y, x] = math.sqrt(best)
    return out


def min_filter_3x3(values: np.ndarray) -> np.ndarray:
    """Literal 3x3 minimum filter with zeros outside the image."""
    h, w = values.shape
    out = np.zeros_like(values)
    for y in range(h):
        for x in range(w):
            lo = 1
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    v = values[ny, nx] if 0 <= ny < h and 0 <= nx < w else 0
                    lo = min(lo, int(v))
            out[y, x] = lo
    return out


def normal_cdf_by_quadrature(z: float) -> float:
    """Phi(z) via adaptive quadrature of the standard normal density."""
    pdf = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    tail, _err = quad(pdf, 0.0, abs(z), epsabs=1e-12, epsrel=1e-12)
    return 0.5 + tail if z >= 0 else 0.5 - tail


def selection_transcription(points, sim_values: np.ndarray, count: int, boxes):
    """Literal selection rule: threshold from the field max, then the
    per-point, per-box loop.  Points inside several boxes repeat, so
    callers compare against the order-preserving unique list."""
    max_score = sim_values.max()
    threshold = max_score / (count / math.sqrt(2.0))
    selected = []
    for (x, y) in points:
        xi = int(math.floor(x + 0.5))
        yi = int(math.floor(y + 0.5))
        score = sim_values[yi, xi]
        for box in boxes:
            if score > threshold and box.x0 <= x <= box.x1 and box.y0 <= y <= box.y1:
                selected.append((x, y))
    return selected
