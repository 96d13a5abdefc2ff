"""Deterministic stand-ins for the learned pieces: procedural multi-room
scene generation and a texture generator that colors every pixel as a pure
function of the 3D surface point it sees.

Because the texture depends only on (position block, room, surface class),
any two views of the same surface point agree exactly, which makes
cross-node consistency a property of the pipeline rather than the imagery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .floorplan import Doorway, FloorplanSpec, Room, TargetNode
from .geometry import DEFAULT_CAMERA_HEIGHT, PanoPose
from .images import PanoImage
from .panocam import pixel_grid_directions
from .shell import ShellScene, SurfaceClass
from .shellrender import GeometricProxy

PATTERN_SCALE = 0.8   # meters per texture block
JITTER = 6            # +/- per-channel block jitter, 8-bit levels
MISS_COLOR = (40, 40, 40)

_CLASS_SHADE = {
    int(SurfaceClass.WALL): 1.0,
    int(SurfaceClass.FLOOR): 0.8,
    int(SurfaceClass.CEILING): 1.12,
    int(SurfaceClass.OPENING): 1.0,
    int(SurfaceClass.NONE): 1.0,
}


@dataclass
class TextureSeed:
    """Style stand-in: seed plus a per-room base palette."""

    seed: int
    palette: dict = field(default_factory=dict)  # room_id -> (3,) float RGB
    pattern_scale: float = PATTERN_SCALE


def make_texture_seed(seed: int, room_ids, pattern_scale: float = PATTERN_SCALE) -> TextureSeed:
    rng = np.random.default_rng(int(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(0x5EED17)))
    palette = {}
    for rid in sorted(room_ids):
        palette[int(rid)] = rng.integers(70, 181, 3).astype(np.float64)
    return TextureSeed(seed=seed, palette=palette, pattern_scale=pattern_scale)


# ---------------------------------------------------------------------------
# Procedural scenes
# ---------------------------------------------------------------------------

def gen_scene(seed: int, n_rooms: int) -> FloorplanSpec:
    """Row of axis-aligned rectangular rooms; consecutive rooms share their
    long wall and are joined by a doorway at least 0.9 m wide."""
    if not (1 <= n_rooms <= 8):
        raise ValueError("n_rooms must be in [1, 8]")
    rng = np.random.default_rng(seed)
    depth = float(rng.uniform(4.2, 5.0))
    wall_height = 2.8
    widths = rng.uniform(2.6, 3.6, n_rooms)

    rooms = []
    x = 0.0
    edges = [0.0]
    for i in range(n_rooms):
        w = float(widths[i])
        rooms.append(Room(i, np.array([[x, 0.0], [x + w, 0.0],
                                       [x + w, depth], [x, depth]]),
                          label=f"room{i}"))
        x += w
        edges.append(x)

    doorways = []
    for i in range(n_rooms - 1):
        dw = float(rng.uniform(0.9, 1.2))
        y0 = float(rng.uniform(0.6, depth - 0.6 - dw))
        xs = edges[i + 1]
        doorways.append(Doorway(i, i + 1,
                                np.array([xs, y0]), np.array([xs, y0 + dw]),
                                height=2.2))
    spec = FloorplanSpec(rooms, doorways, wall_height=wall_height, ceiling=True)
    spec.validate()
    return spec


def default_targets(spec: FloorplanSpec,
                    camera_height: float = DEFAULT_CAMERA_HEIGHT) -> list:
    """One target node at each room centroid."""
    out = []
    for i, r in enumerate(sorted(spec.rooms, key=lambda r: r.room_id)):
        c = r.polygon.mean(axis=0)
        out.append(TargetNode(i, np.array([c[0], c[1], camera_height])))
    return out


# ---------------------------------------------------------------------------
# Texture oracle
# ---------------------------------------------------------------------------

def _mix_u64(*parts) -> np.ndarray:
    h = np.zeros_like(parts[0], dtype=np.uint64)
    keys = (np.uint64(0x9E3779B97F4A7C15), np.uint64(0xC2B2AE3D27D4EB4F),
            np.uint64(0x165667B19E3779F9), np.uint64(0x27D4EB2F165667C5),
            np.uint64(0xD6E8FEB86659FD93))
    for part, key in zip(parts, keys):
        h ^= part.astype(np.uint64) * key
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h


def texture_colors(tex: TextureSeed, positions: np.ndarray, rooms: np.ndarray,
                   classes: np.ndarray) -> np.ndarray:
    """Procedural color per sample: room palette shaded by surface class plus
    a hash jitter of the position block. Never emits 255 in any channel."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    rooms = np.asarray(rooms).reshape(-1)
    classes = np.asarray(classes).reshape(-1)
    blocks = np.floor(pos / tex.pattern_scale).astype(np.int64)
    seed_arr = np.full(rooms.shape, np.uint64(tex.seed & 0xFFFFFFFFFFFFFFFF))
    h = _mix_u64(blocks[:, 0], blocks[:, 1], blocks[:, 2],
                 classes.astype(np.int64), seed_arr)
    jitter = np.stack([
        ((h >> np.uint64(8 * c)) & np.uint64(0xFF)).astype(np.float64) / 255.0 * 2.0 - 1.0
        for c in range(3)], axis=1) * JITTER

    base = np.full((rooms.size, 3), 128.0)
    shade = np.ones(rooms.size)
    for rid, rgb in tex.palette.items():
        base[rooms == rid] = rgb
    for cls, f in _CLASS_SHADE.items():
        shade[classes == cls] = f
    color = base * shade[:, None] + jitter
    return np.clip(np.round(color), 8, 250).astype(np.uint8)


def oracle_generate(shell: ShellScene, tex: TextureSeed, proxy: GeometricProxy,
                    memory: PanoImage | None, nearby: PanoImage | None,
                    pose: PanoPose) -> PanoImage:
    """Furnish-free panorama: memory passthrough where valid memory exists,
    procedural surface texture everywhere else. `nearby` is accepted for
    interface parity and ignored by this deterministic generator."""
    if proxy.provenance != "shell":
        raise ValueError("proxy must come from the shell renderer")
    if proxy.pose is not None and not (
            np.allclose(proxy.pose.position, pose.position, atol=1e-9)
            and np.allclose(proxy.pose.rotation, pose.rotation, atol=1e-9)):
        raise ValueError("proxy was rendered from a different pose")
    if memory is not None:
        if memory.provenance != "cache":
            raise ValueError("memory must come from the cache renderer")
        if (memory.height, memory.width) != (proxy.height, proxy.width):
            raise ValueError("memory / proxy resolution mismatch")

    h, w = proxy.height, proxy.width
    dirs = (pixel_grid_directions(w, h) @ pose.matrix.T).reshape(-1, 3)
    depth = proxy.depth.reshape(-1)
    hit = np.isfinite(depth)
    positions = pose.position[None, :] + np.where(hit, depth, 0.0)[:, None] * dirs

    color = np.full((h * w, 3), MISS_COLOR, dtype=np.uint8)
    if hit.any():
        color[hit] = texture_colors(
            tex, positions[hit], proxy.sem_room.reshape(-1)[hit],
            proxy.hit_class.reshape(-1)[hit])
    color = color.reshape(h, w, 3)

    if memory is not None:
        use = memory.valid & ~np.all(memory.color == 255, axis=2)
        color[use] = memory.color[use]

    return PanoImage(color, depth=proxy.depth.copy(), provenance="generated")
