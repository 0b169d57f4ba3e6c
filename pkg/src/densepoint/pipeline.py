"""End-to-end orchestration.

One run proceeds: support masking and labelling, grounded detection,
similarity, initial exemplar selection, then one or more passes of
density generation, instance detection, prompt selection, and mask
decoding.  After the first pass the top-scoring masks are fed back as
additional exemplars so the next density map covers instances the
initial single exemplar under-represented.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detect import DEFAULT_THRESHOLD, DetectionResult, extract_candidates
from .raster import BoundingBox, DensityMap, Mask, mask_apply, pixel_round
from .select import NORM_FACTOR, SelectedPrompt, SimilarityField, select_prompts
from .synth import (
    Exemplar,
    ProviderBundle,
    ProviderConfig,
    SceneSpec,
    SupportSample,
    grounding_prompt,
    synthetic_providers,
)

__all__ = [
    "PipelineError",
    "PipelineConfig",
    "PassTrace",
    "SegmentationResult",
    "select_initial_exemplar",
    "select_feedback_exemplars",
    "run_pipeline",
    "run_ablation",
]

COUNT_MODES = ("candidates", "dm_integral")
ABLATION_ARMS = ("baseline", "selection", "full")


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline tunables.

    threshold: binarization intensity for the normalized density map.
    norm_factor: k in the adaptive similarity threshold s_max * k / C.
    feedback_exemplars: how many top masks become feedback exemplars.
    feedback_iterations: extra density passes after the initial one.
    emit_composite_parents: keep composite contours' own centroids.
    count_mode: object count fed to selection, from the candidate list
        or from the density-map integral.
    provider: settings for the synthetic providers.
    """

    threshold: int = DEFAULT_THRESHOLD
    norm_factor: float = NORM_FACTOR
    feedback_exemplars: int = 4
    feedback_iterations: int = 1
    emit_composite_parents: bool = True
    count_mode: str = "candidates"
    provider: ProviderConfig = field(default_factory=ProviderConfig)

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise ValueError("threshold must lie in [0, 255]")
        if self.feedback_exemplars < 1:
            raise ValueError("feedback_exemplars must be >= 1")
        if self.feedback_iterations < 0:
            raise ValueError("feedback_iterations must be >= 0")
        if not self.norm_factor > 0:
            raise ValueError("norm_factor must be > 0")
        if self.count_mode not in COUNT_MODES:
            raise ValueError(f"count_mode must be one of {COUNT_MODES}")

    def to_dict(self) -> dict:
        prov = self.provider
        return {
            "threshold": self.threshold,
            "norm_factor": self.norm_factor,
            "feedback_exemplars": self.feedback_exemplars,
            "feedback_iterations": self.feedback_iterations,
            "emit_composite_parents": self.emit_composite_parents,
            "count_mode": self.count_mode,
            "provider": {
                "blob_sigma_factor": prov.blob_sigma_factor,
                "scale_tolerance": prov.scale_tolerance,
                "sim_noise": prov.sim_noise,
                "box_jitter": prov.box_jitter,
                "grounding_threshold": prov.grounding_threshold,
                "detector_recall": prov.detector_recall,
                "confidence_range": list(prov.confidence_range),
                "confidence_scale_bias": prov.confidence_scale_bias,
                "decode_noise": prov.decode_noise,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        prov_doc = dict(doc.pop("provider", {}))
        known_prov = ProviderConfig.__dataclass_fields__
        unknown = set(prov_doc) - set(known_prov)
        if unknown:
            raise ValueError(f"unknown provider config field: {sorted(unknown)[0]}")
        if "confidence_range" in prov_doc:
            prov_doc["confidence_range"] = tuple(prov_doc["confidence_range"])
        unknown = set(doc) - {f for f in cls.__dataclass_fields__ if f != "provider"}
        if unknown:
            raise ValueError(f"unknown pipeline config field: {sorted(unknown)[0]}")
        return cls(provider=ProviderConfig(**prov_doc), **doc)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class PassTrace:
    """Everything one density pass produced, kept for auditing."""

    exemplars: tuple[Exemplar, ...]
    density: DensityMap
    detection: DetectionResult
    prompts: tuple[SelectedPrompt, ...]
    masks: tuple[Mask, ...]


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    """Final prompts and masks plus per-pass artifacts and timings."""

    prompts: tuple[SelectedPrompt, ...]
    masks: tuple[Mask, ...]
    merged_mask: Mask
    passes: tuple[PassTrace, ...]
    timings: dict

    def __post_init__(self):
        if len(self.prompts) != len(self.masks):
            raise ValueError("one mask per prompt required")

    @property
    def initial(self) -> PassTrace:
        return self.passes[0]

    @property
    def final(self) -> PassTrace:
        return self.passes[-1]


def _merge_masks(masks: Sequence[Mask], height: int, width: int) -> Mask:
    merged = np.zeros((height, width), dtype=np.uint8)
    for m in masks:
        np.bitwise_or(merged, m.values, out=merged)
    score = max((m.score for m in masks), default=0.0)
    return Mask(merged, score=score)


def select_initial_exemplar(sim: SimilarityField, boxes: Sequence[BoundingBox],
                            decoder) -> tuple[Exemplar, Mask]:
    """Seed exemplar: decode the best point inside the best detection.

    The most confident box wins (ties broken by smallest (y0, x0)); the
    point with the highest similarity inside it is decoded, and the tight
    box of the resulting mask becomes the exemplar.
    """
    if not boxes:
        raise PipelineError("grounding failed: no detection boxes")
    best = min(range(len(boxes)),
               key=lambda i: (-boxes[i].confidence, boxes[i].y0, boxes[i].x0))
    box = boxes[best]
    window = sim.values[box.y0:box.y1 + 1, box.x0:box.x1 + 1]
    flat = int(np.argmax(window))  # first maximum in raster order
    py, px = divmod(flat, window.shape[1])
    point = (float(box.x0 + px), float(box.y0 + py))
    mask = decoder.decode(point)
    if mask.area() == 0:
        raise PipelineError("initial decode produced an empty mask")
    return Exemplar(box=mask.bounding_box()), mask


def select_feedback_exemplars(masks: Sequence[Mask], m: int) -> list[Exemplar]:
    """Top masks by decoder score, as exemplar boxes.

    Ties go to the larger mask, then to the earlier index; at most m
    exemplars are returned, fewer when fewer masks exist.
    """
    if not masks:
        raise ValueError("no masks to pick exemplars from")
    if m < 1:
        raise ValueError("m must be >= 1")
    order = sorted(range(len(masks)),
                   key=lambda i: (-masks[i].score, -masks[i].area(), i))
    return [Exemplar(box=masks[i].bounding_box()) for i in order[:m]]


def _object_count(detection: DetectionResult, dm: DensityMap, mode: str) -> int:
    if mode == "dm_integral":
        return max(1, pixel_round(dm.integral()))
    return len(detection.candidates)


def _decode_all(decoder, points) -> tuple[Mask, ...]:
    return tuple(decoder.decode((p.x, p.y)) for p in points)


def _run(scene: SceneSpec, support: SupportSample, config: PipelineConfig,
         providers: ProviderBundle | None, use_selection: bool,
         iterations: int) -> SegmentationResult:
    if providers is None:
        providers = synthetic_providers(scene, support, config.provider)
    timings: dict = {}
    t_start = time.perf_counter()

    def staged(stage, fn, *args):
        t0 = time.perf_counter()
        try:
            out = fn(*args)
        except (PipelineError, ValueError, RuntimeError) as exc:
            if isinstance(exc, PipelineError):
                raise
            raise PipelineError(f"{stage}: {exc}") from exc
        timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - t0)
        return out

    masked = staged("support_masking", mask_apply, support.image, support.mask)
    label = staged("class_label", providers.labeler.extract, masked)
    boxes = staged("grounding", providers.grounding.detect, grounding_prompt(label))
    sim = staged("similarity", providers.similarity.similarity, label)
    exemplar0, _seed_mask = staged("initial_exemplar", select_initial_exemplar,
                                   sim, boxes, providers.decoder)

    exemplars: list[Exemplar] = [exemplar0]
    passes: list[PassTrace] = []
    for pass_idx in range(1 + iterations):
        dm = staged("density", providers.density.generate, list(exemplars))
        detection = staged("detect", extract_candidates, dm, config.threshold,
                           config.emit_composite_parents)
        if use_selection:
            count = _object_count(detection, dm, config.count_mode)
            prompts = tuple(staged("select", select_prompts, detection.candidates,
                                   sim, boxes, count, config.norm_factor))
        else:
            # ablation arm: every candidate goes straight to the decoder
            prompts = tuple(
                SelectedPrompt(x=c.x, y=c.y, score=sim.score_at(c.x, c.y), gate_box=-1)
                for c in detection.candidates)
        masks = staged("decode", _decode_all, providers.decoder, prompts)
        passes.append(PassTrace(exemplars=tuple(exemplars), density=dm,
                                detection=detection, prompts=prompts, masks=masks))
        if pass_idx < iterations and masks:
            exemplars = select_feedback_exemplars(masks, config.feedback_exemplars)

    final = passes[-1]
    merged = _merge_masks(final.masks, scene.height, scene.width)
    timings["total"] = time.perf_counter() - t_start
    return SegmentationResult(prompts=final.prompts, masks=final.masks,
                              merged_mask=merged, passes=tuple(passes),
                              timings=timings)


def run_pipeline(scene: SceneSpec, support: SupportSample,
                 config: PipelineConfig | None = None,
                 providers: ProviderBundle | None = None) -> SegmentationResult:
    """Run the full pipeline on one scene.

    Deterministic for a fixed (scene, config): two runs return identical
    prompts and masks.  An empty prompt set yields a result with zero
    masks, not an error.
    """
    config = config or PipelineConfig()
    return _run(scene, support, config, providers, use_selection=True,
                iterations=config.feedback_iterations)


def run_ablation(scene: SceneSpec, support: SupportSample,
                 config: PipelineConfig | None = None,
                 providers: ProviderBundle | None = None) -> dict:
    """Run the three ablation arms on one scene.

    "baseline" decodes every detection candidate with no selection and
    no feedback, "selection" adds prompt selection, and "full" adds the
    feedback pass(es) on top.
    """
    config = config or PipelineConfig()
    full_iters = max(1, config.feedback_iterations)
    return {
        "baseline": _run(scene, support, config, providers,
                         use_selection=False, iterations=0),
        "selection": _run(scene, support, config, providers,
                          use_selection=True, iterations=0),
        "full": _run(scene, support, config, providers,
                     use_selection=True, iterations=full_iters),
    }
