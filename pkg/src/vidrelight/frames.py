"""Frame export: 8-bit binary PPM previews and exact float32 dumps."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def to_8bit(frame) -> np.ndarray:
    """Clamp linear radiance to [0, 1] and quantize; no gamma curve."""
    frame = np.asarray(frame, dtype=np.float64)
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, frame) -> None:
    """Write a ``(c, h, w)`` frame as P6; single-channel frames become gray RGB."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[0] not in (1, 3):
        raise ValueError(f"expected a (1|3, h, w) frame, got shape {frame.shape}")
    rgb = np.repeat(frame, 3, axis=0) if frame.shape[0] == 1 else frame
    _, h, w = rgb.shape
    pixels = to_8bit(rgb).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P6 file written by ``write_ppm`` into a ``(3, h, w)`` array in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only 8-bit P6 files are supported")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1) / 255.0


def write_frames(directory, video) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(np.asarray(video)):
        path = directory / f"frame_{i:04d}.ppm"
        write_ppm(path, frame)
        paths.append(path)
    return paths


def write_f32(path, video) -> Path:
    """Raw little-endian float32 dump plus a ``.json`` sidecar with the dims."""
    path = Path(path)
    video = np.asarray(video)
    path.write_bytes(np.ascontiguousarray(video, dtype="<f4").tobytes())
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "shape": list(video.shape),
        "dtype": "float32",
        "byte_order": "little",
        "layout": ["frames", "channels", "height", "width"],
    }, indent=2) + "\n")
    return sidecar


def read_f32(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    return data.reshape(meta["shape"]).astype(np.float64)


def read_video(path) -> np.ndarray:
    """Load a ``.f32`` dump, or a directory holding one dump or PPM frames."""
    path = Path(path)
    if path.is_file():
        return read_f32(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no such file or directory: {path}")
    dumps = sorted(path.glob("*.f32"))
    if len(dumps) == 1:
        return read_f32(dumps[0])
    frames = sorted(path.glob("*.ppm"))
    if not frames:
        raise FileNotFoundError(f"{path}: no .f32 dump or .ppm frames found")
    return np.stack([read_ppm(p) for p in frames])
