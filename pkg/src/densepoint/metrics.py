"""Evaluation: mask mIoU, prompt precision/recall, density-level bins,
and report aggregation with JSON / text-table / CSV output."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .raster import Mask, pixel_round
from .synth import SceneSpec

__all__ = [
    "mask_iou",
    "miou",
    "prompt_prf",
    "density_bin",
    "DENSITY_BINS",
    "PRF",
    "SceneRow",
    "EvalReport",
    "evaluate_scene",
    "build_report",
]

DENSITY_BINS = ("Low", "Medium", "High")


def mask_iou(a: Mask, b: Mask) -> float:
    if a.values.shape != b.values.shape:
        raise ValueError(f"mask dimension mismatch: {a.values.shape} vs {b.values.shape}")
    inter = int(np.logical_and(a.values, b.values).sum())
    union = int(np.logical_or(a.values, b.values).sum())
    return 1.0 if union == 0 else inter / union


def miou(pred: Sequence[Mask], gt: Sequence[Mask], *, matching: str = "greedy") -> float:
    """Mean IoU under one-to-one matching.

    Greedy matching by descending IoU is the default; "hungarian" picks
    the assignment maximizing total IoU instead.  Matched pairs
    contribute their IoU, unmatched masks on either side contribute 0,
    and the mean runs over max(len(pred), len(gt)).  Two empty sets
    score 1.0.
    """
    if matching not in ("greedy", "hungarian"):
        raise ValueError(f"unknown matching {matching!r}")
    n_pred, n_gt = len(pred), len(gt)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    table = np.zeros((n_pred, n_gt), dtype=np.float64)
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            table[i, j] = mask_iou(p, g)
    total = 0.0
    if matching == "hungarian":
        from scipy.optimize import linear_sum_assignment
        rows, cols = linear_sum_assignment(-table)
        total = float(table[rows, cols].sum())
    else:
        pairs = [(table[i, j], i, j) for i in range(n_pred) for j in range(n_gt)
                 if table[i, j] > 0.0]
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        used_pred: set[int] = set()
        used_gt: set[int] = set()
        for value, i, j in pairs:
            if i in used_pred or j in used_gt:
                continue
            used_pred.add(i)
            used_gt.add(j)
            total += value
    return total / max(n_pred, n_gt)


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _prompt_xy(prompt) -> tuple[float, float]:
    if hasattr(prompt, "x"):
        return float(prompt.x), float(prompt.y)
    x, y = prompt
    return float(x), float(y)


def prompt_prf(prompts, scene: SceneSpec) -> PRF:
    """Prompt precision/recall against the scene's instances.

    A prompt is a true positive when it lands inside a ground-truth mask
    no earlier prompt has claimed (nearest object centre wins when masks
    overlap).  Empty prompt lists score precision 1.0 and recall 0.
    """
    prompts = list(prompts)
    claimed: set[int] = set()
    tp = 0
    for prompt in prompts:
        x, y = _prompt_xy(prompt)
        xi, yi = pixel_round(x), pixel_round(y)
        if not (0 <= xi < scene.width and 0 <= yi < scene.height):
            continue
        hits = [i for i, m in enumerate(scene.masks)
                if i not in claimed and m.values[yi, xi]]
        if not hits:
            continue
        winner = min(hits, key=lambda i: (
            (x - scene.objects[i].center[0]) ** 2
            + (y - scene.objects[i].center[1]) ** 2, i))
        claimed.add(winner)
        tp += 1
    precision = 1.0 if not prompts else tp / len(prompts)
    recall = tp / max(1, scene.object_count)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return PRF(precision, recall, f1)


def density_bin(count: int) -> str:
    """Low for counts up to 30, Medium up to 60, High above."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count <= 30:
        return "Low"
    if count <= 60:
        return "Medium"
    return "High"


@dataclass(frozen=True)
class SceneRow:
    scene_id: str
    n_objects: int
    bin: str
    miou: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    miou: float
    precision: float
    recall: float
    f1: float
    bins: dict
    scenes: tuple[SceneRow, ...]
    config_fingerprint: str = ""

    def __post_init__(self):
        for name in ("miou", "precision", "recall", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {v}")
        if sum(b["count"] for b in self.bins.values()) != len(self.scenes):
            raise ValueError("bin counts must sum to the scene count")

    def to_json_dict(self) -> dict:
        return {
            "miou": self.miou,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "bins": {name: dict(stats) for name, stats in self.bins.items()},
            "scenes": [
                {
                    "scene_id": r.scene_id,
                    "n_objects": r.n_objects,
                    "bin": r.bin,
                    "miou": r.miou,
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                }
                for r in self.scenes
            ],
            "config_fingerprint": self.config_fingerprint,
        }

    def to_text_table(self) -> str:
        lines = []
        header = f"{'group':<10} {'scenes':>6} {'mIoU':>8} {'prec':>8} {'recall':>8} {'f1':>8}"
        lines.append(header)
        lines.append("-" * len(header))
        lines.append(f"{'overall':<10} {len(self.scenes):>6} {self.miou:>8.4f} "
                     f"{self.precision:>8.4f} {self.recall:>8.4f} {self.f1:>8.4f}")
        for name in DENSITY_BINS:
            stats = self.bins[name]
            miou_txt = f"{stats['miou']:>8.4f}" if stats["count"] else f"{'-':>8}"
            lines.append(f"{name:<10} {stats['count']:>6} {miou_txt} "
                         f"{'':>8} {'':>8} {'':>8}".rstrip())
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("scene_id,n_objects,bin,miou,precision,recall,f1\n")
        for r in self.scenes:
            buf.write(f"{r.scene_id},{r.n_objects},{r.bin},{r.miou!r},"
                      f"{r.precision!r},{r.recall!r},{r.f1!r}\n")
        return buf.getvalue()


def evaluate_scene(scene_id: str, scene: SceneSpec, masks: Sequence[Mask],
                   prompts, *, matching: str = "greedy") -> SceneRow:
    score = miou(list(masks), list(scene.masks), matching=matching)
    prf = prompt_prf(prompts, scene)
    return SceneRow(scene_id=scene_id, n_objects=scene.object_count,
                    bin=density_bin(scene.object_count), miou=score,
                    precision=prf.precision, recall=prf.recall, f1=prf.f1)


def build_report(rows: Sequence[SceneRow], config_fingerprint: str = "") -> EvalReport:
    """Aggregate per-scene rows; every density bin appears in the report."""
    rows = sorted(rows, key=lambda r: r.scene_id)
    if not rows:
        raise ValueError("no scenes to report on")
    bins = {}
    for name in DENSITY_BINS:
        members = [r for r in rows if r.bin == name]
        bins[name] = {
            "count": len(members),
            "miou": float(np.mean([r.miou for r in members])) if members else 0.0,
            "recall": float(np.mean([r.recall for r in members])) if members else 0.0,
        }
    return EvalReport(
        miou=float(np.mean([r.miou for r in rows])),
        precision=float(np.mean([r.precision for r in rows])),
        recall=float(np.mean([r.recall for r in rows])),
        f1=float(np.mean([r.f1 for r in rows])),
        bins=bins,
        scenes=tuple(rows),
        config_fingerprint=config_fingerprint,
    )
