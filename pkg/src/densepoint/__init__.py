"""densepoint: instance point prompts from density maps.

A library and CLI that turns per-class object density maps into
instance-level point prompts for promptable mask decoders, filters them
with a density-adaptive similarity threshold and detection-box gating,
and sharpens the density map through a mask-score-driven exemplar
feedback loop.  All model-facing pieces (density generator, similarity,
grounding, decoding, class labelling) sit behind small provider
interfaces; the package ships deterministic synthetic implementations
with exact ground truth so the whole pipeline is testable at desk scale.
"""

from .detect import extract_candidates
from .metrics import density_bin, miou, prompt_prf
from .pipeline import PipelineConfig, SegmentationResult, run_ablation, run_pipeline
from .raster import BinaryImage, BoundingBox, DensityMap, GrayImage, Mask
from .select import adaptive_threshold, select_prompts
from .synth import (
    Exemplar,
    ProviderConfig,
    SceneSpec,
    generate_scene,
    make_support,
    synthetic_providers,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BinaryImage",
    "BoundingBox",
    "DensityMap",
    "GrayImage",
    "Mask",
    "Exemplar",
    "ProviderConfig",
    "SceneSpec",
    "PipelineConfig",
    "SegmentationResult",
    "adaptive_threshold",
    "density_bin",
    "extract_candidates",
    "generate_scene",
    "make_support",
    "miou",
    "prompt_prf",
    "run_ablation",
    "run_pipeline",
    "select_prompts",
    "synthetic_providers",
]
