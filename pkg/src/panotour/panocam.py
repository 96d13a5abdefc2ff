"""Equirectangular camera math: pixel directions, projection, extrinsics-only
ray encodings, and the circular/vertical rotary phase tables.

Image geometry uses pixel centers (x + 0.5); the rotary tables use integer
token indices with phase 2*pi*x/W so the horizontal branch is exactly
periodic over the token width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PanoPose
from .images import write_raw_raster

ROPE_BASE = 10000.0


def _check_size(width: int, height: int) -> None:
    if width != 2 * height:
        raise ValueError(f"equirect raster must be 2:1, got {width}x{height}")


def pixel_direction(x: float, y: float, width: int, height: int) -> np.ndarray:
    """Camera-frame unit direction through pixel center (x, y).

    Azimuth runs with x (image center looks along +x), elevation with -y
    (top row is up, +z).
    """
    _check_size(width, height)
    if not (0 <= x < width and 0 <= y < height):
        raise ValueError(f"pixel ({x}, {y}) outside {width}x{height}")
    az = 2.0 * np.pi * (x + 0.5) / width - np.pi
    el = np.pi * (0.5 - (y + 0.5) / height)
    ce = np.cos(el)
    return np.array([ce * np.cos(az), ce * np.sin(az), np.sin(el)])


def pixel_grid_directions(width: int, height: int) -> np.ndarray:
    """(H, W, 3) camera-frame unit directions through all pixel centers."""
    _check_size(width, height)
    x = np.arange(width, dtype=np.float64)
    y = np.arange(height, dtype=np.float64)
    az = 2.0 * np.pi * (x + 0.5) / width - np.pi
    el = np.pi * (0.5 - (y + 0.5) / height)
    ce, se = np.cos(el), np.sin(el)
    d = np.empty((height, width, 3))
    d[:, :, 0] = ce[:, None] * np.cos(az)[None, :]
    d[:, :, 1] = ce[:, None] * np.sin(az)[None, :]
    d[:, :, 2] = se[:, None]
    return d


def project_points(pose: PanoPose, pts: np.ndarray, width: int, height: int):
    """Continuous pixel coordinates and depth for world points.

    x wraps into [0, width); points at the poles take the documented x = 0
    convention. Raises on zero camera-to-point distance.
    """
    _check_size(width, height)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    offset = pts - pose.position[None, :]
    depth = np.linalg.norm(offset, axis=1)
    if np.any(depth == 0.0):
        raise ValueError("cannot project a point at the camera position")
    local = offset @ pose.matrix  # == R^T @ offset per row
    el = np.arcsin(np.clip(local[:, 2] / depth, -1.0, 1.0))
    az = np.arctan2(local[:, 1], local[:, 0])
    x = ((az + np.pi) * width / (2.0 * np.pi) - 0.5) % width
    y = (0.5 - el / np.pi) * height - 0.5
    at_pole = np.hypot(local[:, 0], local[:, 1]) == 0.0
    x = np.where(at_pole, 0.0, x)
    return x, y, depth


def project_point(pose: PanoPose, p, width: int, height: int):
    x, y, depth = project_points(pose, np.asarray(p, dtype=np.float64)[None, :],
                                 width, height)
    return float(x[0]), float(y[0]), float(depth[0])


@dataclass
class RayMap:
    """Per-pixel world-space ray directions and moments (origin x direction)."""

    directions: np.ndarray  # (H, W, 3) unit
    moments: np.ndarray     # (H, W, 3)

    @property
    def width(self) -> int:
        return self.directions.shape[1]

    @property
    def height(self) -> int:
        return self.directions.shape[0]


def plucker_rays(pose: PanoPose, width: int, height: int) -> RayMap:
    """Extrinsics-only ray encoding: d = R r(x, y), moment = o x d."""
    d = pixel_grid_directions(width, height) @ pose.matrix.T
    o = pose.position
    m = np.empty_like(d)
    m[..., 0] = o[1] * d[..., 2] - o[2] * d[..., 1]
    m[..., 1] = o[2] * d[..., 0] - o[0] * d[..., 2]
    m[..., 2] = o[0] * d[..., 1] - o[1] * d[..., 0]
    return RayMap(directions=d, moments=m)


# ---------------------------------------------------------------------------
# Rotary phase tables
# ---------------------------------------------------------------------------

@dataclass
class CPRoPETable:
    """Precomputed sin/cos phase tables.

    Horizontal pairs use integer harmonics of the token angle 2*pi*x/W, so
    the table is exactly periodic: a virtual token x = W reproduces x = 0.
    The vertical branch keeps the usual geometric frequency schedule.
    """

    width_tokens: int
    pairs: int
    height_tokens: int
    v_pairs: int
    h_cos: np.ndarray  # (pairs, W)
    h_sin: np.ndarray
    v_cos: np.ndarray  # (v_pairs, H)
    v_sin: np.ndarray

    def horizontal_phases(self, x: int) -> np.ndarray:
        """Phases m * 2*pi*x/W for m = 1..pairs; x may be virtual (x = W wraps to 0)."""
        m = np.arange(1, self.pairs + 1, dtype=np.float64)
        return m * (2.0 * np.pi * (x % self.width_tokens) / self.width_tokens)

    def horizontal_row(self, x: int):
        ph = self.horizontal_phases(x)
        return np.cos(ph), np.sin(ph)

    def vertical_row(self, y: int):
        return self.v_cos[:, y].copy(), self.v_sin[:, y].copy()

    def save_raw(self, h_path, v_path) -> None:
        """Dump both tables in the raw float raster format (cos/sin rows interleaved)."""
        h = np.empty((2 * self.pairs, self.width_tokens), dtype=np.float32)
        h[0::2] = self.h_cos
        h[1::2] = self.h_sin
        write_raw_raster(h_path, h)
        v = np.empty((2 * self.v_pairs, self.height_tokens), dtype=np.float32)
        v[0::2] = self.v_cos
        v[1::2] = self.v_sin
        write_raw_raster(v_path, v)


def cprope_table(width_tokens: int, pairs: int, height_tokens: int, v_pairs: int,
                 base: float = ROPE_BASE) -> CPRoPETable:
    if pairs < 1 or v_pairs < 1:
        raise ValueError("need at least one frequency pair per branch")
    if width_tokens < 2:
        raise ValueError("width_tokens must be >= 2")
    m = np.arange(1, pairs + 1, dtype=np.float64)
    x = np.arange(width_tokens, dtype=np.float64)
    hp = m[:, None] * (2.0 * np.pi * x[None, :] / width_tokens)
    k = np.arange(v_pairs, dtype=np.float64)
    omega = base ** (-2.0 * k / (2.0 * v_pairs))
    y = np.arange(height_tokens, dtype=np.float64)
    vp = omega[:, None] * y[None, :]
    return CPRoPETable(
        width_tokens=width_tokens, pairs=pairs,
        height_tokens=height_tokens, v_pairs=v_pairs,
        h_cos=np.cos(hp), h_sin=np.sin(hp),
        v_cos=np.cos(vp), v_sin=np.sin(vp),
    )
