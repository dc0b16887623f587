"""Command-line entry points: scene, run, ablate, metrics, replay.

Exit codes: 0 success, 1 replay hash mismatch, 2 usage, 3 I/O, 4 numeric
failure.  ``LAV_THREADS`` bounds the number of concurrent ablation runs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cla import ClaConfig
from .frames import read_video, write_f32, write_frames
from .lightworld import SceneFormatError, SceneParams, generate_scene, load_scene, render, save_scene
from .metrics import evaluate
from .pipeline import FusionSchedule, NumericError, PipelineConfig, PipelineError, run
from .relighter import RelightRequest, relight

log = logging.getLogger("vidrelight")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4

ABLATION_COLUMNS = [
    "run_id", "gamma", "schedule", "k", "lambda_const", "sigma",
    "flicker_index", "temporal_consistency", "motion_preservation", "relight_rmse",
]


class UsageError(Exception):
    pass


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _hash_tree(root: Path, skip=("manifest.json",)) -> dict:
    return {str(p.relative_to(root)): sha256(p)
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


def _write_manifest(out: Path, argv: list[str], config: dict | None, inputs: list[Path],
                    seeds: dict, started: float) -> Path:
    manifest = {
        "version": __version__,
        "command": argv,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": _hash_tree(out),
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return PipelineConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _load_scene(path: str):
    if not Path(path).is_file():
        raise FileNotFoundError(f"scene file not found: {path}")
    return load_scene(path)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def cmd_scene(args) -> int:
    started = time.perf_counter()
    height = args.height or args.size
    width = args.width or args.size
    params = SceneParams(frames=args.frames, height=height, width=width, n_lights=args.lights,
                         object_size=args.object_size, start=tuple(args.start), velocity=tuple(args.velocity))
    try:
        params.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = generate_scene(params, seed=args.seed)
    save_scene(scene, out / "scene.lavscn")
    default = list(PipelineConfig().source_light[:params.n_lights])
    light = args.light or default + [0.0] * (params.n_lights - len(default))
    if len(light) != params.n_lights:
        raise UsageError(f"--light needs {params.n_lights} values")
    write_frames(out / "preview", render(scene, np.asarray(light, dtype=float)))
    _write_manifest(out, _argv(args), None, [], {"scene": args.seed}, started)
    log.info("wrote %s", out / "scene.lavscn")
    return EXIT_OK


def _export_run(out: Path, result) -> None:
    write_frames(out / "frames", result.video)
    write_f32(out / "video.f32", result.video)
    report = result.metrics.to_dict()
    report.update(result.extras)
    _write_json(out / "metrics.json", report)
    rows = [s.row() for s in result.trace]
    with open(out / "trace.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def cmd_run(args) -> int:
    started = time.perf_counter()
    cfg = _load_config(args.config)
    if args.mode:
        cfg = cfg.replace(mode=args.mode)
    scene = _load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run(scene, cfg.source_light, cfg)
    _export_run(out, result)
    inputs = [Path(args.scene)] + ([Path(args.config)] if args.config else [])
    _write_manifest(out, _argv(args), cfg.to_dict(), inputs,
                    {"noise": cfg.noise_seed, "relight": cfg.relight_seed}, started)
    m = result.metrics
    log.info("flicker %.5f  consistency %.5f  motion %.4f  relight_rmse %.5f",
             m.flicker_index, m.temporal_consistency, m.motion_preservation, m.relight_rmse)
    return EXIT_OK


def _parse_floats(key: str, text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"grid {key}: {exc}") from exc
    if not values:
        raise UsageError(f"grid {key} has no values")
    return values


def parse_grid(entries: list[str]) -> dict[str, list[float]]:
    """``gamma=0,0.5`` / ``sigma=..`` / ``k=..`` (power decay) / ``lambda=..`` (constant)."""
    grid = {}
    for entry in entries:
        key, sep, values = entry.partition("=")
        key = key.strip()
        if not sep or key not in ("gamma", "sigma", "k", "lambda"):
            raise UsageError(f"bad grid entry {entry!r}; use gamma=, sigma=, k= or lambda=")
        grid.setdefault(key, []).extend(_parse_floats(key, values))
    return grid


def ablation_configs(base: PipelineConfig, grid: dict[str, list[float]]) -> list[PipelineConfig]:
    if not any(grid.values()):
        raise UsageError("ablation grid is empty")
    gammas = grid.get("gamma", [base.gamma])
    sigmas = grid.get("sigma", [base.jitter])
    fusions = [FusionSchedule("power", k=k) for k in grid.get("k", [])]
    fusions += [FusionSchedule("constant", value=v) for v in grid.get("lambda", [])]
    fusions = fusions or [base.fusion]
    try:
        return [base.replace(gamma=g, jitter=s, fusion=f)
                for g, f, s in itertools.product(gammas, fusions, sigmas)]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _ablation_row(job) -> dict:
    run_id, scene_path, cfg_dict = job
    cfg = PipelineConfig.from_dict(cfg_dict)
    result = run(load_scene(scene_path), cfg.source_light, cfg)
    m = result.metrics
    return {
        "run_id": run_id,
        "gamma": cfg.gamma,
        "schedule": cfg.fusion.kind,
        "k": cfg.fusion.k if cfg.fusion.kind == "power" else "",
        "lambda_const": cfg.fusion.value if cfg.fusion.kind == "constant" else "",
        "sigma": cfg.jitter,
        "flicker_index": m.flicker_index,
        "temporal_consistency": m.temporal_consistency,
        "motion_preservation": m.motion_preservation,
        "relight_rmse": m.relight_rmse,
    }


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LAV_THREADS", "1")))
    except ValueError:
        return 1


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    base = _load_config(args.config)
    configs = ablation_configs(base, parse_grid(args.grid or []))
    _load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(f"run{i:03d}", args.scene, cfg.to_dict()) for i, cfg in enumerate(configs)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_ablation_row, jobs))
    else:
        rows = [_ablation_row(job) for job in jobs]
    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    inputs = [Path(args.scene)] + ([Path(args.config)] if args.config else [])
    _write_manifest(out, _argv(args), base.to_dict(), inputs,
                    {"noise": base.noise_seed, "relight": base.relight_seed}, started)
    log.info("wrote %d rows to %s", len(rows), out / "ablation.csv")
    return EXIT_OK


def cmd_metrics(args) -> int:
    a = read_video(args.frames_a)
    b = read_video(args.frames_b)
    if a.shape != b.shape:
        raise UsageError(f"sequences differ: {a.shape} vs {b.shape}")
    reference = None
    if args.scene:
        cfg = _load_config(args.config)
        reference = render(_load_scene(args.scene), np.asarray(cfg.target_light))
        if reference.shape != b.shape:
            raise UsageError(f"scene renders {reference.shape}, frames are {b.shape}")
    report = evaluate(b, a, reference).to_dict()
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_baseline(args) -> int:
    """Frame-by-frame relighting without the denoising loop."""
    cfg = _load_config(args.config)
    scene = _load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source = render(scene, np.asarray(cfg.source_light))
    gamma = cfg.gamma if args.gamma is None else args.gamma
    video = relight(RelightRequest(source, scene, cfg.condition, ClaConfig(gamma)))
    write_frames(out / "frames", video)
    write_f32(out / "video.f32", video)
    report = evaluate(video, source, render(scene, np.asarray(cfg.target_light)))
    _write_json(out / "metrics.json", report.to_dict())
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    argv = list(manifest["command"])
    out = Path(args.out) if args.out else manifest_path.parent
    if "--out" in argv:
        argv[argv.index("--out") + 1] = str(out)
    code = main(argv)
    if code != EXIT_OK:
        return code
    produced = _hash_tree(out)
    expected = manifest["outputs"]
    bad = sorted(k for k in expected if produced.get(k) != expected[k])
    for name in bad:
        print(f"mismatch: {name}", file=sys.stderr)
    print(f"replayed {len(expected)} outputs, {len(bad)} mismatched")
    return EXIT_MISMATCH if bad else EXIT_OK


def _argv(args) -> list[str]:
    return list(args._argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidrelight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene", help="generate a synthetic scene file and preview frames")
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--lights", type=int, default=4)
    p.add_argument("--object-size", type=int, default=20)
    p.add_argument("--start", type=int, nargs=2, default=(8, 6), metavar=("Y", "X"))
    p.add_argument("--velocity", type=int, nargs=2, default=(1, 2), metavar=("DY", "DX"))
    p.add_argument("--light", type=float, nargs="+", help="preview illumination (K values)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scene)

    p = sub.add_parser("run", help="relight a scene with the denoising loop")
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--mode", choices=["full-video", "background-generation"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="sweep gamma / fusion schedule / jitter")
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--grid", action="append", help="e.g. gamma=0,0.5,1  k=0.5,1,2  lambda=1  sigma=0.1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("metrics", help="compare two frame sequences")
    p.add_argument("--frames-a", required=True, help="reference (source) sequence")
    p.add_argument("--frames-b", required=True, help="sequence under test")
    p.add_argument("--scene", help="scene file; enables relight_rmse")
    p.add_argument("--config", help="config supplying the target light")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("baseline", help="frame-by-frame relighting only")
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--gamma", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("replay", help="re-run a manifest and verify output hashes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    args._argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, SceneFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
