"""Batch ray/triangle intersection (Moller-Trumbore) against shell geometry.

All arithmetic is written componentwise in a fixed order so a scalar
re-implementation of the same formulas reproduces results bit-for-bit.
Ties on the nearest hit resolve to the lowest triangle index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DET_EPS = 1e-12
BARY_TOL = 1e-12
T_MIN = 1e-9

_PAIR_BUDGET = 1_000_000  # max rays x triangles handled per chunk


@dataclass
class TrianglePack:
    """Precomputed intersection inputs for a triangle subset."""

    v0: np.ndarray       # (T, 3)
    e1: np.ndarray       # (T, 3) v1 - v0
    e2: np.ndarray       # (T, 3) v2 - v0
    normal: np.ndarray   # (T, 3)
    index: np.ndarray    # (T,) indices into the source triangle list

    @classmethod
    def from_triangles(cls, verts: np.ndarray, normals: np.ndarray, mask=None):
        idx = np.arange(verts.shape[0]) if mask is None else np.flatnonzero(mask)
        v = verts[idx]
        return cls(
            v0=v[:, 0].copy(),
            e1=v[:, 1] - v[:, 0],
            e2=v[:, 2] - v[:, 0],
            normal=normals[idx].copy(),
            index=idx.astype(np.int64),
        )

    def __len__(self) -> int:
        return self.v0.shape[0]


def occluder_pack(shell) -> TrianglePack:
    return TrianglePack.from_triangles(shell.verts, shell.normal, shell.occluder_mask)


def opening_pack(shell) -> TrianglePack:
    return TrianglePack.from_triangles(shell.verts, shell.normal, ~shell.occluder_mask)


def intersect_rays(origin: np.ndarray, dirs: np.ndarray, pack: TrianglePack,
                   cull_backface: bool = True, t_min: float = T_MIN):
    """Nearest hit per ray from a shared origin.

    Returns (t, tri) where t is inf and tri is -1 for misses; tri indexes the
    pack's source triangle list.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n_rays = dirs.shape[0]
    n_tris = len(pack)
    t_out = np.full(n_rays, np.inf)
    tri_out = np.full(n_rays, -1, dtype=np.int64)
    if n_tris == 0 or n_rays == 0:
        return t_out, tri_out

    e1, e2 = pack.e1, pack.e2
    # per-origin constants
    tvec = origin[None, :] - pack.v0  # (T, 3)
    qx = tvec[:, 1] * e1[:, 2] - tvec[:, 2] * e1[:, 1]
    qy = tvec[:, 2] * e1[:, 0] - tvec[:, 0] * e1[:, 2]
    qz = tvec[:, 0] * e1[:, 1] - tvec[:, 1] * e1[:, 0]
    t_num = e2[:, 0] * qx + e2[:, 1] * qy + e2[:, 2] * qz  # (T,)

    chunk = max(1, _PAIR_BUDGET // n_tris)
    for lo in range(0, n_rays, chunk):
        d = dirs[lo:lo + chunk]
        dx, dy, dz = d[:, 0:1], d[:, 1:2], d[:, 2:3]
        px = dy * e2[:, 2] - dz * e2[:, 1]
        py = dz * e2[:, 0] - dx * e2[:, 2]
        pz = dx * e2[:, 1] - dy * e2[:, 0]
        det = e1[:, 0] * px + e1[:, 1] * py + e1[:, 2] * pz
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            u = (tvec[:, 0] * px + tvec[:, 1] * py + tvec[:, 2] * pz) * inv
            v = (dx * qx + dy * qy + dz * qz) * inv
            t = t_num * inv
            ok = (np.abs(det) >= DET_EPS)
            ok &= (u >= -BARY_TOL) & (u <= 1.0 + BARY_TOL)
            ok &= (v >= -BARY_TOL) & (u + v <= 1.0 + BARY_TOL)
            ok &= t >= t_min
            if cull_backface:
                facing = (dx * pack.normal[:, 0] + dy * pack.normal[:, 1]
                          + dz * pack.normal[:, 2])
                ok &= facing < -DET_EPS
        t = np.where(ok, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(t.shape[0])
        t_best = t[rows, best]
        hit = np.isfinite(t_best)
        t_out[lo + rows[hit]] = t_best[hit]
        tri_out[lo + rows[hit]] = pack.index[best[hit]]
    return t_out, tri_out


def segment_clear(a, b, pack: TrianglePack, margin: float = 1e-6) -> bool:
    """True when the open segment a->b hits no triangle in the pack."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    length = float(np.linalg.norm(b - a))
    if length <= margin:
        return True
    d = (b - a) / length
    t, _ = intersect_rays(a, d[None, :], pack, cull_backface=False, t_min=margin)
    return not (t[0] < length - margin)
