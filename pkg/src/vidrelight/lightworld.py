"""Synthetic scenes with exactly linear light transport.

Each frame stores ``K`` basis images, one per light (albedo times that
light's shading), so rendering under an illumination vector ``L`` is the
weighted sum ``sum_k L[k] * basis[f, k]``.  A textured square moves over a
static textured background by an integer offset per frame, which makes
the true optical flow known exactly.

Flow and offsets use ``(dy, dx)`` order throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LAVSCN1\x00"
_HEADER = struct.Struct("<6I")

AMBIENT_GAIN = 0.35
DIRECTIONAL_GAIN = 0.5


class SceneFormatError(ValueError):
    """A scene file that is not a well-formed LAVSCN1 file."""


@dataclass(frozen=True)
class SceneParams:
    frames: int = 16
    height: int = 64
    width: int = 64
    channels: int = 3
    n_lights: int = 4
    object_size: int = 20
    start: tuple[int, int] = (8, 6)
    velocity: tuple[int, int] = (1, 2)

    def validate(self):
        if self.frames < 2:
            raise ValueError(f"need at least 2 frames, got {self.frames}")
        if self.height < 16 or self.width < 16:
            raise ValueError(f"frame size must be at least 16x16, got {self.height}x{self.width}")
        if self.n_lights < 2:
            raise ValueError(f"need at least 2 lights (ambient + one directional), got {self.n_lights}")
        if self.channels < 1:
            raise ValueError("channels must be positive")
        s = self.object_size
        if s < 1 or s > min(self.height, self.width):
            raise ValueError(f"object size {s} does not fit a {self.height}x{self.width} frame")
        for f in (0, self.frames - 1):
            y = self.start[0] + f * self.velocity[0]
            x = self.start[1] + f * self.velocity[1]
            if y < 0 or x < 0 or y + s > self.height or x + s > self.width:
                raise ValueError(f"object leaves the frame at frame {f} (top-left {y},{x})")


@dataclass(frozen=True, eq=False)
class Scene:
    """Per-frame transport as basis images ``(f, K, c, h, w)`` plus geometry."""

    basis: np.ndarray
    masks: np.ndarray
    offsets: np.ndarray
    params: SceneParams = field(default_factory=SceneParams)

    @property
    def frames(self) -> int:
        return self.basis.shape[0]

    @property
    def n_lights(self) -> int:
        return self.basis.shape[1]

    @property
    def video_shape(self) -> tuple[int, int, int, int]:
        f, _, c, h, w = self.basis.shape
        return (f, c, h, w)


def illumination(values) -> np.ndarray:
    """Validate a nonnegative K-vector (entry 0 ambient, rest directional)."""
    L = np.asarray(values, dtype=np.float64)
    if L.ndim != 1 or L.size < 1:
        raise ValueError(f"illumination must be a non-empty vector, got shape {L.shape}")
    if not np.all(np.isfinite(L)) or np.any(L < 0):
        raise ValueError(f"illumination entries must be finite and nonnegative: {L}")
    return L


@dataclass(frozen=True)
class LightingCondition:
    """Target illumination plus the per-frame instability of the image relighter."""

    target: tuple[float, ...]
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(float(v) for v in illumination(self.target)))
        if not self.jitter >= 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")


def _directional_shading(n_lights: int, u: np.ndarray, v: np.ndarray) -> list[np.ndarray]:
    """Ambient term followed by planar gradients, one per directional light.

    ``u`` and ``v`` are horizontal / vertical coordinates in [-1, 1].
    """
    shading = [np.full_like(u, AMBIENT_GAIN)]
    for k in range(1, n_lights):
        theta = 2.0 * np.pi * (k - 1) / (n_lights - 1)
        ramp = 0.5 + 0.5 * (np.cos(theta) * u + np.sin(theta) * v)
        shading.append(DIRECTIONAL_GAIN * ramp)
    return shading


def _texture(rng: np.random.Generator, channels: int, h: int, w: int, cell: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(channels, -(-h // cell), -(-w // cell)))
    blocks = np.kron(coarse, np.ones((1, cell, cell)))[:, :h, :w]
    fine = rng.uniform(-1.0, 1.0, size=(channels, h, w))
    return blocks, fine


def generate_scene(params: SceneParams | None = None, seed: int = 0) -> Scene:
    params = params or SceneParams()
    params.validate()
    rng = np.random.default_rng(seed)
    f, h, w, c, K, s = (params.frames, params.height, params.width,
                        params.channels, params.n_lights, params.object_size)

    yy, xx = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    bg_shading = _directional_shading(K, xx, yy)
    blocks, fine = _texture(rng, c, h, w, cell=8)
    bg_albedo = 0.35 + 0.35 * blocks + 0.1 * fine

    oy, ox = np.meshgrid(np.linspace(-1, 1, s), np.linspace(-1, 1, s), indexing="ij")
    obj_shading = _directional_shading(K, ox, oy)
    checker = ((np.arange(s)[:, None] // 4 + np.arange(s)[None, :] // 4) % 2).astype(float)
    obj_blocks, obj_fine = _texture(rng, c, s, s, cell=4)
    obj_albedo = 0.25 + 0.3 * checker + 0.25 * obj_blocks + 0.15 * obj_fine

    offsets = np.array([[params.start[0] + i * params.velocity[0],
                         params.start[1] + i * params.velocity[1]] for i in range(f)], dtype=np.int64)
    basis = np.empty((f, K, c, h, w))
    masks = np.zeros((f, h, w), dtype=bool)
    for i, (y, x) in enumerate(offsets):
        for k in range(K):
            basis[i, k] = bg_albedo * bg_shading[k]
            basis[i, k, :, y:y + s, x:x + s] = obj_albedo * obj_shading[k]
        masks[i, y:y + s, x:x + s] = True
    # float32-representable so the binary scene file round-trips exactly
    basis = basis.astype(np.float32).astype(np.float64)
    return Scene(basis=basis, masks=masks, offsets=offsets, params=params)


def _check_illumination(scene: Scene, L) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.shape[-1] != scene.n_lights:
        raise ValueError(f"illumination has {L.shape[-1]} components, scene has {scene.n_lights} lights")
    return L


def render(scene: Scene, L) -> np.ndarray:
    """Video ``(f, c, h, w)`` lit by one illumination vector for every frame."""
    L = _check_illumination(scene, L)
    if L.ndim != 1:
        raise ValueError("render expects a single K-vector; use render_frames for per-frame lights")
    return np.einsum("fkchw,k->fchw", scene.basis, L)


def render_frames(scene: Scene, Ls) -> np.ndarray:
    """Video lit by a per-frame illumination sequence of shape ``(f, K)``."""
    Ls = _check_illumination(scene, Ls)
    if Ls.shape != (scene.frames, scene.n_lights):
        raise ValueError(f"expected illuminations of shape {(scene.frames, scene.n_lights)}, got {Ls.shape}")
    return np.einsum("fkchw,fk->fchw", scene.basis, Ls)


def render_frame(scene: Scene, frame: int, L) -> np.ndarray:
    L = _check_illumination(scene, L)
    return np.einsum("kchw,k->chw", scene.basis[frame], L)


def ground_truth_flow(scene: Scene) -> np.ndarray:
    """Displacement ``(f-1, h, w, 2)`` from each frame to the next."""
    f = scene.frames
    _, _, h, w = scene.video_shape
    flow = np.zeros((f - 1, h, w, 2))
    steps = np.diff(scene.offsets, axis=0)
    for i in range(f - 1):
        flow[i][scene.masks[i]] = steps[i]
    return flow


def save_scene(scene: Scene, path) -> None:
    """Write the LAVSCN1 binary layout.

    Layout: 8-byte magic, six little-endian uint32 (frames, channels,
    height, width, K, object_size), ``frames`` pairs of int32 offsets,
    float32 basis ``(f, K, c, h, w)``, then uint8 masks ``(f, h, w)``.
    """
    f, K, c, h, w = scene.basis.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(f, c, h, w, K, scene.params.object_size))
        fh.write(np.ascontiguousarray(scene.offsets, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(scene.basis, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(scene.masks, dtype=np.uint8).tobytes())


def load_scene(path) -> Scene:
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise SceneFormatError(f"{path}: not a LAVSCN1 scene file")
    pos = len(MAGIC)
    try:
        f, c, h, w, K, size = _HEADER.unpack_from(data, pos)
    except struct.error as exc:
        raise SceneFormatError(f"{path}: truncated header") from exc
    pos += _HEADER.size
    n_off, n_basis, n_mask = f * 2 * 4, f * K * c * h * w * 4, f * h * w
    if len(data) != pos + n_off + n_basis + n_mask:
        raise SceneFormatError(f"{path}: size {len(data)} does not match header dims")
    offsets = np.frombuffer(data, dtype="<i4", count=f * 2, offset=pos).reshape(f, 2).astype(np.int64)
    pos += n_off
    basis = np.frombuffer(data, dtype="<f4", count=f * K * c * h * w, offset=pos)
    basis = basis.reshape(f, K, c, h, w).astype(np.float64)
    pos += n_basis
    masks = np.frombuffer(data, dtype=np.uint8, count=n_mask, offset=pos).reshape(f, h, w).astype(bool)
    velocity = tuple(int(v) for v in (offsets[1] - offsets[0])) if f > 1 else (0, 0)
    params = SceneParams(frames=f, height=h, width=w, channels=c, n_lights=K, object_size=size,
                         start=(int(offsets[0, 0]), int(offsets[0, 1])), velocity=velocity)
    return Scene(basis=basis, masks=masks, offsets=offsets, params=params)
