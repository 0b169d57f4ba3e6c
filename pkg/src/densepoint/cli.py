"""Command-line interface.

    densepoint synth --out runs/scenes --preset standard --seeds 50
    densepoint run   --scenes runs/scenes --out runs/exp1 [--ablation]
    densepoint eval  --results runs/exp1 --scenes runs/scenes --out runs/exp1
    densepoint sweep --param k --values 1,1.4142,1.7321,2.2361 \\
                     --scenes runs/scenes --out runs/sweep_k

Every command writes a manifest.json with the resolved configuration and
seed list, so a run can be reproduced from its output directory alone.
Exit codes: 0 success, 1 evaluation thresholds unmet, 2 usage or config
error, 3 I/O or provider failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import build_report, evaluate_scene
from .pipeline import (
    PipelineConfig,
    PipelineError,
    run_ablation,
    run_pipeline,
)
from .raster import Mask, RasterError
from .scenarios import LABEL, build_suite, scene_id
from .select import selected_to_json
from .synth import (
    SceneError,
    SceneSpec,
    make_support,
    rle_decode,
    rle_encode,
    scene_from_json,
    scene_to_json,
)
from .viz import save_png, stage_images

log = logging.getLogger("densepoint.cli")

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

SWEEP_PARAMS = {
    "k": ("norm_factor", float),
    "m": ("feedback_exemplars", int),
    "T": ("threshold", int),
    "iterations": ("feedback_iterations", int),
}

_CONFIG_SECTIONS = ("pipeline", "scenes", "eval")
_EVAL_THRESHOLDS = ("min_miou", "min_precision", "min_recall", "min_f1")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Config plumbing: flags > config file > defaults
# --------------------------------------------------------------------------

def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(text.decode("utf-8"))
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid JSON config: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config root must be a table/object")
    for key in doc:
        if key not in _CONFIG_SECTIONS:
            raise UsageError(f"unknown config section: {key}")
    evaldoc = doc.get("eval", {})
    for key in evaldoc:
        if key not in _EVAL_THRESHOLDS:
            raise UsageError(f"unknown eval config field: {key}")
    return doc


def _pipeline_config(base: dict | None, file_doc: dict, args) -> PipelineConfig:
    merged = dict(base or {})
    file_pipeline = file_doc.get("pipeline", {})
    prov = dict(merged.pop("provider", {}))
    prov.update(file_pipeline.get("provider", {}))
    merged.update({k: v for k, v in file_pipeline.items() if k != "provider"})
    if prov:
        merged["provider"] = prov
    try:
        config = PipelineConfig.from_dict(merged)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    overrides = {}
    for flag, field_name in (("threshold", "threshold"),
                             ("norm_factor", "norm_factor"),
                             ("exemplars", "feedback_exemplars"),
                             ("iterations", "feedback_iterations")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "no_feedback", False):
        overrides["feedback_iterations"] = 0
    if overrides:
        try:
            config = replace(config, **overrides)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return config


def _write_manifest(out_dir: Path, command: str, config: PipelineConfig,
                    seeds: list[int], extra: dict) -> None:
    doc = {
        "tool_version": __version__,
        "command": command,
        "config_fingerprint": config.fingerprint(),
        "pipeline": config.to_dict(),
        "seeds": seeds,
    }
    doc.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _read_manifest(directory: Path) -> dict:
    path = directory / "manifest.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text())


# --------------------------------------------------------------------------
# Scene and result files
# --------------------------------------------------------------------------

def _load_scenes(scenes_dir: Path) -> list[tuple[str, SceneSpec]]:
    files = sorted((scenes_dir / "scenes").glob("scene_*.json"))
    if not files:
        files = sorted(scenes_dir.glob("scene_*.json"))
    if not files:
        raise UsageError(f"no scene files under {scenes_dir}")
    out = []
    for f in files:
        out.append((f.stem, scene_from_json(json.loads(f.read_text()))))
    return out


def _masks_json(masks) -> list[dict]:
    return [{"rle": rle_encode(m.values), "score": m.score} for m in masks]


def _result_json(sid: str, scene: SceneSpec, result, fingerprint: str) -> dict:
    return {
        "scene_id": sid,
        "config_fingerprint": fingerprint,
        "width": scene.width,
        "height": scene.height,
        "passes": len(result.passes),
        "prompts": selected_to_json(result.prompts),
        "masks": _masks_json(result.masks),
        "merged": {"rle": rle_encode(result.merged_mask.values)},
        "initial": {
            "prompts": selected_to_json(result.initial.prompts),
            "masks": _masks_json(result.initial.masks),
        },
        "timings": result.timings,
    }


def _arm_json(result) -> dict:
    return {
        "prompts": selected_to_json(result.prompts),
        "masks": _masks_json(result.masks),
    }


def _load_result_arm(doc: dict, arm: str) -> tuple[list, list[Mask]]:
    """Prompts and masks from a result file; ablation files carry arms."""
    if "arms" in doc:
        if arm not in doc["arms"]:
            raise ValueError(f"result {doc.get('scene_id')} has no arm {arm!r}")
        payload = doc["arms"][arm]
    else:
        payload = doc
    width, height = doc["width"], doc["height"]
    masks = [Mask(rle_decode(m["rle"], width, height), score=m["score"])
             for m in payload["masks"]]
    prompts = [(p["x"], p["y"]) for p in payload["prompts"]]
    return prompts, masks


def _parallel(items, fn, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    file_doc = _load_config_file(args.config)
    scene_cfg = dict(file_doc.get("scenes", {}))
    preset = args.preset or scene_cfg.pop("preset", "standard")
    seeds = scene_cfg.pop("seeds", None)
    if args.seeds is not None:
        seeds = list(range(args.seed_start, args.seed_start + args.seeds))
    elif isinstance(seeds, dict):
        seeds = list(range(seeds.get("start", 1), seeds.get("start", 1) + seeds["count"]))
    elif seeds is None:
        seeds = list(range(1, 21))
    try:
        suite = build_suite(preset, seeds, **scene_cfg)
    except (ValueError, TypeError, SceneError) as exc:
        raise UsageError(str(exc)) from exc

    out_dir = Path(args.out)
    scenes_dir = out_dir / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    for sid, scene in suite.scenes:
        (scenes_dir / f"{sid}.json").write_text(json.dumps(scene_to_json(scene)))
        preview = np.zeros((scene.height, scene.width), dtype=np.uint8)
        for mask in scene.masks:
            np.maximum(preview, mask.values * 200, out=preview)
        save_png(preview, scenes_dir / f"{sid}_preview.png")
    config = _pipeline_config(suite.config.to_dict(), file_doc, args)
    _write_manifest(out_dir, "synth", config, seeds, {
        "preset": preset,
        "scene_params": scene_cfg,
        "support": {"label": suite.support.label},
        "layout": {"scenes": "scenes/"},
    })
    log.info("wrote %d scenes to %s", len(suite.scenes), scenes_dir)
    return EXIT_OK


def _run_one(sid, scene, support, config, args, results_dir, stages_dir):
    try:
        if args.ablation:
            arms = run_ablation(scene, support, config)
            doc = {
                "scene_id": sid,
                "config_fingerprint": config.fingerprint(),
                "width": scene.width,
                "height": scene.height,
                "arms": {name: _arm_json(res) for name, res in arms.items()},
            }
            result_for_stages = arms["full"]
        else:
            result = run_pipeline(scene, support, config)
            doc = _result_json(sid, scene, result, config.fingerprint())
            result_for_stages = result
        (results_dir / f"{sid}.json").write_text(json.dumps(doc))
        if args.stage_dumps:
            from .synth import synthetic_providers
            boxes = synthetic_providers(scene, support, config.provider) \
                .grounding.detect("all " + support.label)
            for name, pixels in stage_images(result_for_stages, boxes):
                save_png(pixels, stages_dir / f"{sid}_{name}.png")
        return sid, None
    except Exception as exc:  # per-scene isolation; the run continues
        return sid, exc


def cmd_run(args) -> int:
    scenes_dir = Path(args.scenes)
    manifest = _read_manifest(scenes_dir)
    file_doc = _load_config_file(args.config)
    config = _pipeline_config(manifest.get("pipeline"), file_doc, args)
    support = make_support(manifest.get("support", {}).get("label", LABEL))
    scenes = _load_scenes(scenes_dir)

    out_dir = Path(args.out)
    results_dir = out_dir / "results"
    results_dir.mkdir(parents=True, exist_ok=True)
    stages_dir = out_dir / "stages"
    if args.stage_dumps:
        stages_dir.mkdir(parents=True, exist_ok=True)

    outcomes = _parallel(
        scenes,
        lambda item: _run_one(item[0], item[1], support, config, args,
                              results_dir, stages_dir),
        args.jobs)
    failures = [(sid, exc) for sid, exc in outcomes if exc is not None]
    for sid, exc in failures:
        log.error("scene %s failed: %s", sid, exc)
    _write_manifest(out_dir, "run", config,
                    manifest.get("seeds", []), {
                        "scenes_dir": str(scenes_dir),
                        "ablation": bool(args.ablation),
                        "layout": {"results": "results/", "stages": "stages/"},
                    })
    log.info("ran %d scenes (%d failed)", len(scenes), len(failures))
    return EXIT_RUNTIME if failures else EXIT_OK


def _evaluate_dir(results_dir: Path, scenes: list[tuple[str, SceneSpec]],
                  arm: str, fingerprint: str, matching: str = "greedy"):
    by_id = {sid: scene for sid, scene in scenes}
    rows = []
    seen = set()
    for f in sorted(results_dir.glob("*.json")):
        doc = json.loads(f.read_text())
        sid = doc["scene_id"]
        if sid not in by_id:
            raise ValueError(f"result {sid} has no matching scene")
        prompts, masks = _load_result_arm(doc, arm)
        rows.append(evaluate_scene(sid, by_id[sid], masks, prompts,
                                   matching=matching))
        seen.add(sid)
    missing = sorted(set(by_id) - seen)
    if missing:
        raise ValueError(f"missing results for scenes: {', '.join(missing)}")
    if not rows:
        raise ValueError(f"no result files under {results_dir}")
    return build_report(rows, config_fingerprint=fingerprint)


def cmd_eval(args) -> int:
    file_doc = _load_config_file(args.config)
    scenes = _load_scenes(Path(args.scenes))
    results_dir = Path(args.results)
    if (results_dir / "results").is_dir():
        results_dir = results_dir / "results"
    run_manifest = _read_manifest(Path(args.results))
    fingerprint = run_manifest.get("config_fingerprint", "")
    report = _evaluate_dir(results_dir, scenes, args.arm, fingerprint,
                           matching=args.matching)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    (out_dir / "report.txt").write_text(report.to_text_table())
    (out_dir / "scenes.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_text_table())

    thresholds = file_doc.get("eval", {})
    unmet = []
    for key, metric in (("min_miou", report.miou), ("min_precision", report.precision),
                        ("min_recall", report.recall), ("min_f1", report.f1)):
        if key in thresholds and metric < thresholds[key]:
            unmet.append(f"{key}={thresholds[key]} (got {metric:.4f})")
    for line in unmet:
        log.error("threshold unmet: %s", line)
    return EXIT_THRESHOLD if unmet else EXIT_OK


def cmd_sweep(args) -> int:
    field_name, caster = SWEEP_PARAMS[args.param]
    raw = [v for v in (s.strip() for s in args.values.split(",")) if v]
    if not raw:
        raise UsageError("empty sweep value list")
    try:
        values = [caster(v) for v in raw]
    except ValueError as exc:
        raise UsageError(f"bad sweep value: {exc}") from exc

    scenes_dir = Path(args.scenes)
    manifest = _read_manifest(scenes_dir)
    file_doc = _load_config_file(args.config)
    base_config = _pipeline_config(manifest.get("pipeline"), file_doc, args)
    support = make_support(manifest.get("support", {}).get("label", LABEL))
    scenes = _load_scenes(scenes_dir)

    rows = []
    for value in values:
        try:
            config = replace(base_config, **{field_name: value})
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        t0 = time.perf_counter()
        results = _parallel(
            scenes,
            lambda item, cfg=config: (item[0],
                                      run_pipeline(item[1], support, cfg)),
            args.jobs)
        elapsed = time.perf_counter() - t0
        scene_rows = [evaluate_scene(sid, dict(scenes)[sid], res.masks, res.prompts)
                      for sid, res in results]
        report = build_report(scene_rows, config_fingerprint=config.fingerprint())
        rows.append({"value": value, "miou": report.miou, "recall": report.recall,
                     "runtime_s": elapsed})

    rows.sort(key=lambda r: r["value"])
    best = max(range(len(rows)), key=lambda i: rows[i]["miou"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.json").write_text(json.dumps(
        {"param": args.param, "rows": rows, "best_value": rows[best]["value"]},
        indent=2) + "\n")
    lines = [f"{'':2} {args.param:>12} {'mIoU':>8} {'recall':>8} {'runtime_s':>10}"]
    for i, row in enumerate(rows):
        flag = "*" if i == best else " "
        lines.append(f"{flag:2} {row['value']:>12.4f} {row['miou']:>8.4f} "
                     f"{row['recall']:>8.4f} {row['runtime_s']:>10.3f}")
    table = "\n".join(lines) + "\n"
    (out_dir / "sweep.txt").write_text(table)
    sys.stdout.write(table)
    _write_manifest(out_dir, "sweep", base_config, manifest.get("seeds", []), {
        "param": args.param,
        "values": values,
        "scenes_dir": str(scenes_dir),
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densepoint",
        description="Density-map-driven instance point prompts: scene synthesis, "
                    "pipeline runs, evaluation, and parameter sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--jobs", type=int, default=1, help="parallel scenes")
        p.add_argument("--threshold", type=int, help="density binarization threshold")
        p.add_argument("--norm-factor", dest="norm_factor", type=float,
                       help="adaptive-threshold normalization factor")
        p.add_argument("--exemplars", type=int, help="feedback exemplar count")
        p.add_argument("--iterations", type=int, help="feedback iterations")
        p.add_argument("--no-feedback", dest="no_feedback", action="store_true",
                       help="disable the feedback pass")

    p_synth = sub.add_parser("synth", help="generate a scene suite")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--preset", choices=("uniform", "standard", "low_count",
                                              "two_scale", "merged_pair"))
    p_synth.add_argument("--seeds", type=int, help="number of seeds")
    p_synth.add_argument("--seed-start", dest="seed_start", type=int, default=1)
    add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="run the pipeline over scenes")
    p_run.add_argument("--scenes", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--ablation", action="store_true",
                       help="emit baseline / selection / full arms per scene")
    p_run.add_argument("--stage-dumps", dest="stage_dumps", action="store_true",
                       help="write six per-stage PNGs per scene")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="aggregate results into a report")
    p_eval.add_argument("--results", required=True)
    p_eval.add_argument("--scenes", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--arm", default="full",
                        help="which ablation arm to evaluate (default full)")
    p_eval.add_argument("--matching", default="greedy",
                        choices=("greedy", "hungarian"),
                        help="mask matching rule for mIoU")
    add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter")
    p_sweep.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--scenes", required=True)
    p_sweep.add_argument("--out", required=True)
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RasterError, SceneError, PipelineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
