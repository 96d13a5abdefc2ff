"""Render the shell at a pose into the per-pixel geometric proxy.

Rays go through every pixel center; the nearest front-facing occluder gives
depth, normal, surface class, and room. Opening triangles never occlude but
are recorded in the class channel when they are crossed in front of the hit,
so doorway pixels are distinguishable while still seeing through.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import PanoPose
from .images import (encode_normals_u16, semantics_to_rgb, write_png,
                     write_raw_raster)
from .panocam import pixel_grid_directions
from .raycast import intersect_rays, occluder_pack, opening_pack
from .shell import ShellScene, SurfaceClass, label_pose_room


@dataclass
class GeometricProxy:
    """Shell observation: depth, interior-facing normals, class/room codes."""

    depth: np.ndarray      # (H, W) meters; inf where the shell is open
    normals: np.ndarray    # (H, W, 3) unit, flipped toward the camera
    sem_class: np.ndarray  # (H, W) SurfaceClass; OPENING where a doorway is crossed
    sem_room: np.ndarray   # (H, W) room id of the depth surface; -1 on miss
    hit_class: np.ndarray  # (H, W) class of the depth surface itself
    pose: PanoPose | None = None
    provenance: str = "shell"

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]


def _worker_count() -> int:
    env = os.environ.get("PANOTOUR_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return 1


def shell_render(shell: ShellScene, pose: PanoPose, width: int, height: int) -> GeometricProxy:
    label_pose_room(shell, pose)  # raises if the pose is outside every room

    dirs = (pixel_grid_directions(width, height) @ pose.matrix.T).reshape(-1, 3)
    occ = occluder_pack(shell)
    opn = opening_pack(shell)
    origin = pose.position

    n_rays = dirs.shape[0]
    t_occ = np.empty(n_rays)
    tri_occ = np.empty(n_rays, dtype=np.int64)
    t_opn = np.empty(n_rays)

    def run_block(lo, hi):
        t, tri = intersect_rays(origin, dirs[lo:hi], occ)
        t_occ[lo:hi] = t
        tri_occ[lo:hi] = tri
        if len(opn):
            t2, _ = intersect_rays(origin, dirs[lo:hi], opn)
            t_opn[lo:hi] = t2
        else:
            t_opn[lo:hi] = np.inf

    workers = _worker_count()
    if workers <= 1:
        run_block(0, n_rays)
    else:
        step = -(-n_rays // workers)
        blocks = [(lo, min(lo + step, n_rays)) for lo in range(0, n_rays, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: run_block(*b), blocks))

    hit = np.isfinite(t_occ)
    tri = np.where(hit, tri_occ, 0)
    normals = shell.normal[tri]
    facing = np.einsum("ij,ij->i", dirs, normals)
    normals = np.where(facing[:, None] < 0.0, normals, -normals)
    normals[~hit] = 0.0

    hit_class = np.where(hit, shell.cls[tri], SurfaceClass.NONE).astype(np.int8)
    sem_room = np.where(hit, shell.room[tri], -1).astype(np.int32)
    crossed = t_opn < t_occ
    sem_class = np.where(crossed & hit, SurfaceClass.OPENING, hit_class).astype(np.int8)

    shape = (height, width)
    return GeometricProxy(
        depth=t_occ.reshape(shape),
        normals=normals.reshape(height, width, 3),
        sem_class=sem_class.reshape(shape),
        sem_room=sem_room.reshape(shape),
        hit_class=hit_class.reshape(shape),
        pose=pose,
    )


def write_proxy(proxy: GeometricProxy, sem_path, normal_path, depth_path) -> None:
    """Write the three proxy rasters: semantics PNG, 16-bit normal PNG, raw depth."""
    write_png(sem_path, semantics_to_rgb(proxy.sem_class, proxy.sem_room))
    write_png(normal_path, encode_normals_u16(proxy.normals))
    depth = proxy.depth.astype(np.float32)
    write_raw_raster(depth_path, np.where(np.isfinite(depth), depth, 0.0))
