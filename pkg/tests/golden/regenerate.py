"""Rewrite default_run.json from the current code.

    python tests/golden/regenerate.py
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from vidrelight.cla import ClaConfig
from vidrelight.lightworld import generate_scene
from vidrelight.metrics import evaluate
from vidrelight.pipeline import PipelineConfig, run
from vidrelight.relighter import RelightRequest, relight

SCENE_SEED = 7


def golden() -> dict:
    scene = generate_scene(seed=SCENE_SEED)
    cfg = PipelineConfig()
    result = run(scene, cfg.source_light, cfg)
    per_frame = relight(RelightRequest(result.source, scene, cfg.condition, ClaConfig(0.0)))
    return {
        "scene_seed": SCENE_SEED,
        "config": cfg.to_dict(),
        "baseline_gamma0": evaluate(per_frame, result.source, result.reference).to_dict(),
        "pipeline": result.metrics.to_dict(),
        "video_sha256": hashlib.sha256(np.ascontiguousarray(result.video).tobytes()).hexdigest(),
    }


if __name__ == "__main__":
    path = Path(__file__).with_name("default_run.json")
    path.write_text(json.dumps(golden(), indent=2) + "\n")
    print(f"wrote {path}")
