"""Synthetic scene world and analytic provider implementations.

Everything the pipeline would normally get from neural models comes from
here instead: a scene generator with exact ground truth, a density-map
generator whose per-object visibility depends on how close the object's
scale is to the exemplars' scales, a label-selective similarity field, a
grounding detector with tunable recall and confidence behaviour, and a
mask decoder that returns (noisy) ground-truth masks with a
centre-quality score.  Real models can be swapped in through the small
provider protocols at the bottom of the module.

All randomness flows from a single 64-bit scene seed through
counter-based Philox substreams keyed by purpose, so each provider can
be re-run independently and reproduces bit-identical integer rasters.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .raster import BinaryImage, BoundingBox, DensityMap, GrayImage, Mask, pixel_round
from .select import SimilarityField

__all__ = [
    "SceneError",
    "SceneObject",
    "SceneSpec",
    "Exemplar",
    "ProviderConfig",
    "SupportSample",
    "substream",
    "generate_scene",
    "generate_two_group_scene",
    "scale_affinity",
    "synth_density",
    "synth_similarity",
    "synth_groundings",
    "synth_decode",
    "grounding_prompt",
    "make_support",
    "rle_encode",
    "rle_decode",
    "scene_to_json",
    "scene_from_json",
    "DensityMapGenerator",
    "SimilarityProvider",
    "GroundingDetector",
    "MaskDecoder",
    "ClassLabelExtractor",
    "SyntheticLabelExtractor",
    "ProviderBundle",
    "synthetic_providers",
]

_MASK64 = (1 << 64) - 1


class SceneError(RuntimeError):
    """Scene construction failed (usually an unsatisfiable placement)."""


def substream(seed: int, tag: str) -> np.random.Generator:
    """Independent reproducible RNG stream for (seed, tag).

    Philox is counter based, so streams never collide and never depend
    on how many draws other streams made.
    """
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    word = int.from_bytes(digest, "little")
    key = np.array([seed & _MASK64, word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# --------------------------------------------------------------------------
# Scene model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneObject:
    """One ellipse instance with integer centre coordinates."""

    id: int
    center: tuple[float, float]
    radii: tuple[float, float]
    angle: float
    label: str

    @property
    def scale(self) -> float:
        # side of the square with the same area as the tight axis box
        return 2.0 * math.sqrt(self.radii[0] * self.radii[1])

    @property
    def mean_radius(self) -> float:
        return 0.5 * (self.radii[0] + self.radii[1])


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Synthetic ground truth: objects plus their per-instance masks."""

    width: int
    height: int
    seed: int
    objects: tuple[SceneObject, ...]
    masks: tuple[Mask, ...]

    def __post_init__(self):
        if len(self.objects) != len(self.masks):
            raise ValueError("one mask per object required")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        for obj, mask in zip(self.objects, self.masks):
            if mask.values.shape != (self.height, self.width):
                raise ValueError(f"mask of object {obj.id} has wrong shape")
            if mask.area() == 0:
                raise ValueError(f"mask of object {obj.id} is empty")

    @property
    def object_count(self) -> int:
        return len(self.objects)

    def achieved_scale_cv(self) -> float:
        """Population coefficient of variation of the object scales."""
        scales = np.array([o.scale for o in self.objects], dtype=np.float64)
        if scales.size < 2:
            return 0.0
        return float(scales.std() / scales.mean())


@dataclass(frozen=True)
class Exemplar:
    """A box around one instance, conditioning the density generator."""

    box: BoundingBox

    @property
    def scale(self) -> float:
        return math.sqrt(self.box.area)


def _render_ellipse(width: int, height: int, center, radii, angle: float) -> np.ndarray:
    cx, cy = center
    rx, ry = radii
    reach = int(math.ceil(max(rx, ry))) + 1
    x0 = max(0, pixel_round(cx) - reach)
    x1 = min(width - 1, pixel_round(cx) + reach)
    y0 = max(0, pixel_round(cy) - reach)
    y1 = min(height - 1, pixel_round(cy) + reach)
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    dx = xs - cx
    dy = ys - cy
    ca, sa = math.cos(angle), math.sin(angle)
    u = (dx * ca + dy * sa) / rx
    v = (-dx * sa + dy * ca) / ry
    out = np.zeros((height, width), dtype=np.uint8)
    out[y0:y1 + 1, x0:x1 + 1] = (u * u + v * v <= 1.0).astype(np.uint8)
    return out


MIN_RADIUS = 3.0


def _radii_for_cv(rng: np.random.Generator, n: int, cv: float,
                  base_radius: float) -> np.ndarray:
    """Radii whose sample CV matches the target, despite the size floor.

    Log-normal shape scaled by bisection until the clipped sample's
    coefficient of variation hits the request.
    """
    if n < 2 or cv <= 0.0:
        return np.full(n, max(MIN_RADIUS, base_radius))
    z = rng.normal(0.0, 1.0, n)
    z -= z.mean()
    if not np.any(z):
        z = np.linspace(-1.0, 1.0, n)
        z -= z.mean()
    z /= z.std()

    def radii(t: float) -> np.ndarray:
        return np.maximum(MIN_RADIUS, base_radius * np.exp(t * z))

    def sample_cv(t: float) -> float:
        r = radii(t)
        return float(r.std() / r.mean())

    lo, hi = 0.0, 1.0
    while sample_cv(hi) < cv and hi < 64.0:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if sample_cv(mid) < cv:
            lo = mid
        else:
            hi = mid
    return radii(hi)


def _place_centers(rng, width, height, radii, n_overlap, overlap_distance,
                   gap, max_tries):
    n = len(radii)
    centers: list[tuple[int, int]] = []
    n_separated = n - n_overlap
    used_anchors: set[int] = set()
    for i in range(n):
        r = radii[i]
        reach = int(math.ceil(r)) + 1
        lo_x, hi_x = reach, width - 1 - reach
        lo_y, hi_y = reach, height - 1 - reach
        if hi_x < lo_x or hi_y < lo_y:
            raise SceneError(f"object radius {r:.1f} does not fit a "
                             f"{width}x{height} canvas")
        is_overlap = i >= n_separated and i > 0
        placed = False
        for _ in range(max_tries):
            if is_overlap:
                choices = [j for j in range(min(i, n_separated)) if j not in used_anchors]
                if not choices:
                    raise SceneError("not enough anchors for the requested overlaps")
                anchor = choices[int(rng.integers(0, len(choices)))]
                ax, ay = centers[anchor]
                # axis-aligned at an exact integer distance, so the pair
                # geometry is identical across seeds and orientations
                target = int(round(overlap_distance * (r + radii[anchor])))
                if target >= r + radii[anchor]:
                    target = int(math.floor(r + radii[anchor])) - 1
                dx, dy = ((target, 0), (-target, 0), (0, target), (0, -target))[
                    int(rng.integers(0, 4))]
                cx, cy = ax + dx, ay + dy
                if not (lo_x <= cx <= hi_x and lo_y <= cy <= hi_y):
                    continue
                clear = all(
                    j == anchor or math.hypot(cx - px, cy - py) >= r + radii[j] + gap
                    for j, (px, py) in enumerate(centers))
                if clear:
                    used_anchors.add(anchor)
                    centers.append((cx, cy))
                    placed = True
                    break
            else:
                cx = int(rng.integers(lo_x, hi_x + 1))
                cy = int(rng.integers(lo_y, hi_y + 1))
                clear = all(math.hypot(cx - px, cy - py) >= r + radii[j] + gap
                            for j, (px, py) in enumerate(centers))
                if clear:
                    centers.append((cx, cy))
                    placed = True
                    break
        if not placed:
            raise SceneError(
                f"could not place object {i} after {max_tries} tries; "
                f"use fewer objects or a larger canvas")
    return centers


def _build_scene(seed, width, height, radii_pairs, label, n_overlap,
                 overlap_distance, gap, max_tries) -> SceneSpec:
    rng = substream(seed, "scene-placement")
    spacing = [max(rx, ry) for rx, ry in radii_pairs]
    centers = _place_centers(rng, width, height, spacing, n_overlap,
                             overlap_distance, gap, max_tries)
    objects = []
    masks = []
    for i, ((cx, cy), (rx, ry)) in enumerate(zip(centers, radii_pairs)):
        obj = SceneObject(id=i, center=(float(cx), float(cy)),
                          radii=(rx, ry), angle=0.0, label=label)
        objects.append(obj)
        masks.append(Mask(_render_ellipse(width, height, obj.center, obj.radii,
                                          obj.angle), score=1.0))
    return SceneSpec(width=width, height=height, seed=seed,
                     objects=tuple(objects), masks=tuple(masks))


def generate_scene(seed: int,
                   n_objects: int,
                   scale_cv: float = 0.0,
                   overlap_fraction: float = 0.0,
                   *,
                   width: int = 512,
                   height: int = 512,
                   label: str = "widget",
                   base_radius: float = 10.0,
                   overlap_distance: float = 0.8,
                   gap: float = 2.0,
                   max_tries: int = 4000) -> SceneSpec:
    """Deterministically place n_objects ellipses with a target scale CV.

    overlap_fraction of the objects are forced to overlap a previously
    placed object (centres closer than the sum of radii, at
    overlap_distance times that sum); the rest keep a clearance of at
    least ``gap`` pixels.  Identical seeds give identical scenes.
    """
    if n_objects < 1:
        raise ValueError("need at least one object")
    if scale_cv < 0:
        raise ValueError("scale_cv must be >= 0")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    rng = substream(seed, "scene-scales")
    radii = _radii_for_cv(rng, n_objects, scale_cv, base_radius)
    n_overlap = min(n_objects - 1, int(round(overlap_fraction * n_objects)))
    return _build_scene(seed, width, height, [(r, r) for r in radii], label,
                        n_overlap, overlap_distance, gap, max_tries)


def generate_two_group_scene(seed: int,
                             n_small: int,
                             n_big: int,
                             *,
                             scale_ratio: float = 3.0,
                             small_cv: float = 0.25,
                             base_radius: float = 6.0,
                             width: int = 256,
                             height: int = 256,
                             label: str = "widget",
                             gap: float = 2.0,
                             max_tries: int = 4000) -> SceneSpec:
    """Scene with two object-scale groups (big first, then small).

    The big group is uniform at scale_ratio times the base radius; the
    small group spreads around the base radius with the given CV.  Used
    to exercise exemplar-scale effects in the density generator.
    """
    if n_small < 1 or n_big < 1:
        raise ValueError("both groups need at least one object")
    rng = substream(seed, "scene-scales")
    small = _radii_for_cv(rng, n_small, small_cv, base_radius)
    big = np.full(n_big, base_radius * scale_ratio)
    radii = np.concatenate([big, small])
    return _build_scene(seed, width, height, [(r, r) for r in radii], label,
                        n_overlap=0, overlap_distance=0.8, gap=gap,
                        max_tries=max_tries)


# --------------------------------------------------------------------------
# Run-length encoding and scene serialization
# --------------------------------------------------------------------------

def rle_encode(values: np.ndarray) -> list[int]:
    """Row-major run lengths, starting with the leading zero run."""
    flat = np.asarray(values, dtype=np.uint8).ravel(order="C")
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    counts = (ends - starts).tolist()
    if int(flat[0]) == 1:
        counts = [0] + counts
    return counts


def rle_decode(counts: Sequence[int], width: int, height: int) -> np.ndarray:
    total = sum(counts)
    if total != width * height:
        raise ValueError(f"run lengths cover {total} pixels, expected {width * height}")
    flat = np.zeros(total, dtype=np.uint8)
    pos = 0
    value = 0
    for run in counts:
        if value:
            flat[pos:pos + run] = 1
        pos += run
        value ^= 1
    return flat.reshape(height, width)


def scene_to_json(scene: SceneSpec) -> dict:
    return {
        "width": scene.width,
        "height": scene.height,
        "seed": scene.seed,
        "achieved_scale_cv": scene.achieved_scale_cv(),
        "objects": [
            {
                "id": o.id,
                "center": [o.center[0], o.center[1]],
                "radii": [o.radii[0], o.radii[1]],
                "angle": o.angle,
                "label": o.label,
            }
            for o in scene.objects
        ],
        "masks": [
            {"object_id": o.id, "rle": rle_encode(m.values)}
            for o, m in zip(scene.objects, scene.masks)
        ],
    }


def scene_from_json(doc: dict) -> SceneSpec:
    objects = tuple(
        SceneObject(id=int(o["id"]),
                    center=(float(o["center"][0]), float(o["center"][1])),
                    radii=(float(o["radii"][0]), float(o["radii"][1])),
                    angle=float(o["angle"]), label=str(o["label"]))
        for o in doc["objects"])
    width, height = int(doc["width"]), int(doc["height"])
    by_id = {m["object_id"]: m["rle"] for m in doc["masks"]}
    masks = tuple(Mask(rle_decode(by_id[o.id], width, height), score=1.0)
                  for o in objects)
    return SceneSpec(width=width, height=height, seed=int(doc["seed"]),
                     objects=objects, masks=masks)


# --------------------------------------------------------------------------
# Provider configuration and the analytic providers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProviderConfig:
    """Tunables for the synthetic providers.

    blob_sigma_factor: density blob sigma as a fraction of object radius.
    scale_tolerance: log-scale reach of exemplar/object affinity.
    sim_noise: std dev of additive similarity noise.
    box_jitter: max detection-box corner displacement, pixels.
    grounding_threshold: detections below this confidence are dropped.
    detector_recall: fraction of objects the detector finds.
    confidence_range: detection confidences are drawn uniformly here.
    confidence_scale_bias: 0 = random confidence, 1 = proportional to
        object scale (big objects win the most-confident box).
    decode_noise: boundary erosion/dilation steps applied to decoded masks.
    """

    blob_sigma_factor: float = 0.5
    scale_tolerance: float = 0.3
    sim_noise: float = 0.02
    box_jitter: float = 0.0
    grounding_threshold: float = 0.15
    detector_recall: float = 1.0
    confidence_range: tuple[float, float] = (0.0, 1.0)
    confidence_scale_bias: float = 0.0
    decode_noise: float = 1.0

    def __post_init__(self):
        for name in ("blob_sigma_factor", "scale_tolerance", "sim_noise",
                     "box_jitter", "decode_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.grounding_threshold <= 1.0:
            raise ValueError("grounding_threshold must lie in [0, 1]")
        if not 0.0 <= self.detector_recall <= 1.0:
            raise ValueError("detector_recall must lie in [0, 1]")
        lo, hi = self.confidence_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("confidence_range must be an ordered pair in [0, 1]")
        if not 0.0 <= self.confidence_scale_bias <= 1.0:
            raise ValueError("confidence_scale_bias must lie in [0, 1]")


def scale_affinity(object_scale: float, exemplar_scale: float,
                   tolerance: float) -> float:
    """exp(-(ln(s_obj / s_ex))^2 / (2 tol^2)): 1 at matched scales,
    decaying as the scales drift apart in log space."""
    if object_scale <= 0 or exemplar_scale <= 0:
        raise ValueError("scales must be positive")
    if tolerance == 0.0:
        return 1.0 if object_scale == exemplar_scale else 0.0
    log_ratio = math.log(object_scale / exemplar_scale)
    return math.exp(-(log_ratio * log_ratio) / (2.0 * tolerance * tolerance))


def _stamp_blob(acc: np.ndarray, center, sigma: float, weight: float) -> None:
    height, width = acc.shape
    cx, cy = center
    if weight == 0.0:
        return
    if sigma <= 0.0:
        xi, yi = pixel_round(cx), pixel_round(cy)
        if 0 <= xi < width and 0 <= yi < height:
            acc[yi, xi] += weight
        return
    support = 2.0 * sigma
    reach = int(math.ceil(support))
    xi, yi = pixel_round(cx), pixel_round(cy)
    xs = np.arange(xi - reach, xi + reach + 1)
    ys = np.arange(yi - reach, yi + reach + 1)
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    d2 = dx * dx + dy * dy
    kernel = np.exp(-d2 / (2.0 * sigma * sigma))
    kernel[d2 > support * support] = 0.0
    kernel *= weight / kernel.sum()  # unit mass before border truncation
    x_lo = max(0, xs[0]); x_hi = min(width - 1, xs[-1])
    y_lo = max(0, ys[0]); y_hi = min(height - 1, ys[-1])
    if x_lo > x_hi or y_lo > y_hi:
        return
    acc[y_lo:y_hi + 1, x_lo:x_hi + 1] += kernel[y_lo - ys[0]:y_hi - ys[0] + 1,
                                                x_lo - xs[0]:x_hi - xs[0] + 1]


def synth_density(scene: SceneSpec, exemplars: Sequence[Exemplar],
                  cfg: ProviderConfig) -> DensityMap:
    """Density map: one truncated Gaussian blob per object, weighted by
    the best scale affinity against the exemplar set.

    Each interior blob contributes exactly its weight to the map's
    integral; blobs clipped by the image border lose the clipped mass.
    """
    if not exemplars:
        raise ValueError("at least one exemplar is required")
    acc = np.zeros((scene.height, scene.width), dtype=np.float64)
    for obj in scene.objects:
        weight = max(scale_affinity(obj.scale, e.scale, cfg.scale_tolerance)
                     for e in exemplars)
        _stamp_blob(acc, obj.center, cfg.blob_sigma_factor * obj.mean_radius, weight)
    return DensityMap(acc)


def synth_similarity(scene: SceneSpec, support_label: str,
                     cfg: ProviderConfig) -> SimilarityField:
    """Label-selective similarity: per-instance base score in [0.6, 0.95]
    inside matching objects, 0.05 background, plus Gaussian noise."""
    rng = substream(scene.seed, f"similarity:{support_label}")
    field = np.full((scene.height, scene.width), 0.05, dtype=np.float64)
    for obj, mask in zip(scene.objects, scene.masks):
        if obj.label != support_label:
            continue
        base = float(rng.uniform(0.6, 0.95))
        region = mask.values.astype(bool)
        np.maximum(field, np.where(region, base, -np.inf), out=field)
    if cfg.sim_noise > 0:
        field = field + rng.normal(0.0, cfg.sim_noise, field.shape)
    return SimilarityField(field)


def synth_groundings(scene: SceneSpec, label: str,
                     cfg: ProviderConfig) -> list[BoundingBox]:
    """Per-object detection boxes with jitter, confidence draw, recall
    misses, and the confidence threshold applied."""
    rng = substream(scene.seed, f"grounding:{label}")
    targets = [(o, m) for o, m in zip(scene.objects, scene.masks) if o.label == label]
    if not targets:
        return []
    max_scale = max(o.scale for o, _ in targets)
    boxes = []
    for obj, mask in targets:
        # fixed draw order keeps the stream stable across config changes
        u = float(rng.uniform(*cfg.confidence_range))
        recall_roll = float(rng.random())
        jitter = rng.uniform(-cfg.box_jitter, cfg.box_jitter, 4)
        confidence = ((1.0 - cfg.confidence_scale_bias) * u
                      + cfg.confidence_scale_bias * (obj.scale / max_scale))
        confidence = min(1.0, max(0.0, confidence))
        if recall_roll >= cfg.detector_recall:
            continue
        if confidence < cfg.grounding_threshold:
            continue
        tight = mask.bounding_box()
        x0 = min(max(0, tight.x0 + pixel_round(jitter[0])), scene.width - 1)
        y0 = min(max(0, tight.y0 + pixel_round(jitter[1])), scene.height - 1)
        x1 = min(max(x0, tight.x1 + pixel_round(jitter[2])), scene.width - 1)
        y1 = min(max(y0, tight.y1 + pixel_round(jitter[3])), scene.height - 1)
        boxes.append(BoundingBox(x0, y0, x1, y1, confidence=confidence))
    return boxes


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return 1.0 if union == 0 else inter / union


def synth_decode(point: tuple[float, float], scene: SceneSpec,
                 cfg: ProviderConfig) -> Mask:
    """Decode a point prompt against the scene's ground truth.

    A point inside an object returns that object's mask with
    decode_noise steps of boundary erosion or dilation; the score is the
    returned mask's overlap with the clean mask, damped by how far the
    prompt sits from the object centre.  Background points yield a small
    low-score blob around the point.
    """
    x, y = point
    xi, yi = pixel_round(x), pixel_round(y)
    if not (0 <= xi < scene.width and 0 <= yi < scene.height):
        raise ValueError(f"prompt point ({x}, {y}) outside the scene")
    containing = [i for i, m in enumerate(scene.masks) if m.values[yi, xi]]
    if not containing:
        rng = substream(scene.seed, f"decode-bg:{xi}:{yi}")
        score = float(rng.uniform(0.05, 0.2))
        blob = np.zeros((scene.height, scene.width), dtype=np.uint8)
        ys, xs = np.mgrid[max(0, yi - 3):min(scene.height, yi + 4),
                          max(0, xi - 3):min(scene.width, xi + 4)]
        blob[ys, xs] = ((xs - xi) ** 2 + (ys - yi) ** 2 <= 9).astype(np.uint8)
        return Mask(blob, score=score)

    idx = min(containing, key=lambda i: (
        (x - scene.objects[i].center[0]) ** 2 + (y - scene.objects[i].center[1]) ** 2, i))
    obj = scene.objects[idx]
    clean = scene.masks[idx].values
    out = clean
    steps = pixel_round(cfg.decode_noise)
    if steps > 0:
        rng = substream(scene.seed, f"decode:{xi}:{yi}")
        grow = rng.random() < 0.5
        structure = np.ones((3, 3), dtype=bool)
        if grow:
            noisy = ndimage.binary_dilation(clean, structure=structure,
                                            iterations=steps)
        else:
            noisy = ndimage.binary_erosion(clean, structure=structure,
                                           iterations=steps, border_value=0)
        if noisy.any():
            out = noisy.astype(np.uint8)

    # whole-pixel centre distance: sub-pixel prompt wobble must not
    # reorder mask scores between passes
    d_px = pixel_round(math.hypot(x - obj.center[0], y - obj.center[1]))
    d_rel = min(1.0, d_px / obj.mean_radius)
    score = _mask_iou(out, clean) * (1.0 - 0.3 * d_rel)
    return Mask(out, score=min(1.0, max(0.0, score)))


# --------------------------------------------------------------------------
# Support samples and class labelling
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SupportSample:
    """One-shot support: an image, its coarse object mask, and the label."""

    image: GrayImage
    mask: BinaryImage
    label: str


def make_support(label: str, *, radius: float = 10.0, width: int = 64,
                 height: int = 64) -> SupportSample:
    """Render a minimal single-instance support sample."""
    shape = _render_ellipse(width, height, (width / 2.0, height / 2.0),
                            (radius, radius), 0.0)
    image = np.where(shape == 1, 180, 40).astype(np.uint8)
    return SupportSample(image=GrayImage(image), mask=BinaryImage(shape), label=label)


def grounding_prompt(label: str) -> str:
    """Detector prompt asking for every instance of the category."""
    label = label.strip()
    if not label:
        raise ValueError("empty class label")
    return "all " + label


class SyntheticLabelExtractor:
    """Stands in for a vision-language class-label extractor.

    Real extractors answer "Name the object in the image?" from pixels;
    this stub returns the label recorded with the support sample.
    """

    def __init__(self, support: SupportSample):
        self._label = support.label

    def extract(self, masked_support: GrayImage) -> str:
        label = self._label.strip()
        if not label:
            raise ValueError("support sample carries no class label")
        return label


# --------------------------------------------------------------------------
# Provider seams
# --------------------------------------------------------------------------

class DensityMapGenerator(Protocol):
    def generate(self, exemplars: Sequence[Exemplar]) -> DensityMap: ...


class SimilarityProvider(Protocol):
    def similarity(self, label: str) -> SimilarityField: ...


class GroundingDetector(Protocol):
    def detect(self, prompt: str) -> list[BoundingBox]: ...


class MaskDecoder(Protocol):
    def decode(self, point: tuple[float, float]) -> Mask: ...


class ClassLabelExtractor(Protocol):
    def extract(self, masked_support: GrayImage) -> str: ...


class SyntheticDensityGenerator:
    def __init__(self, scene: SceneSpec, cfg: ProviderConfig):
        self._scene = scene
        self._cfg = cfg

    def generate(self, exemplars: Sequence[Exemplar]) -> DensityMap:
        return synth_density(self._scene, exemplars, self._cfg)


class SyntheticSimilarityProvider:
    def __init__(self, scene: SceneSpec, cfg: ProviderConfig):
        self._scene = scene
        self._cfg = cfg

    def similarity(self, label: str) -> SimilarityField:
        return synth_similarity(self._scene, label, self._cfg)


class SyntheticGroundingDetector:
    def __init__(self, scene: SceneSpec, cfg: ProviderConfig):
        self._scene = scene
        self._cfg = cfg

    def detect(self, prompt: str) -> list[BoundingBox]:
        label = prompt[4:] if prompt.startswith("all ") else prompt
        return synth_groundings(self._scene, label, self._cfg)


class SyntheticMaskDecoder:
    def __init__(self, scene: SceneSpec, cfg: ProviderConfig):
        self._scene = scene
        self._cfg = cfg

    def decode(self, point: tuple[float, float]) -> Mask:
        return synth_decode(point, self._scene, self._cfg)


@dataclass(frozen=True, eq=False)
class ProviderBundle:
    """The five seams a real model stack would implement."""

    density: DensityMapGenerator
    similarity: SimilarityProvider
    grounding: GroundingDetector
    decoder: MaskDecoder
    labeler: ClassLabelExtractor


def synthetic_providers(scene: SceneSpec, support: SupportSample,
                        cfg: ProviderConfig | None = None) -> ProviderBundle:
    cfg = cfg or ProviderConfig()
    return ProviderBundle(
        density=SyntheticDensityGenerator(scene, cfg),
        similarity=SyntheticSimilarityProvider(scene, cfg),
        grounding=SyntheticGroundingDetector(scene, cfg),
        decoder=SyntheticMaskDecoder(scene, cfg),
        labeler=SyntheticLabelExtractor(support),
    )
