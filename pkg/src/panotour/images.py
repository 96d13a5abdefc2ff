"""Equirectangular image container and the on-disk raster formats.

PNG IO goes through OpenCV (8- and 16-bit). The raw float raster format is
an 8-byte header (width, height as little-endian uint32) followed by
row-major little-endian float32 samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

INVALID_VALUE = 255  # memory pixels with nothing behind them


@dataclass
class PanoImage:
    """2:1 equirectangular raster: 8-bit color, optional depth, validity."""

    color: np.ndarray                 # (H, W, 3) uint8
    depth: np.ndarray | None = None   # (H, W) float, meters
    valid: np.ndarray | None = None   # (H, W) bool; default all True
    provenance: str = ""

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.uint8)
        h, w = self.color.shape[:2]
        if w != 2 * h:
            raise ValueError(f"pano must be 2:1, got {w}x{h}")
        if self.color.ndim != 3 or self.color.shape[2] != 3:
            raise ValueError("pano color must be (H, W, 3)")
        if self.valid is None:
            self.valid = np.ones((h, w), dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != (h, w):
                raise ValueError("valid raster shape mismatch")
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=np.float64)
            if self.depth.shape != (h, w):
                raise ValueError("depth raster shape mismatch")

    @property
    def width(self) -> int:
        return self.color.shape[1]

    @property
    def height(self) -> int:
        return self.color.shape[0]

    def copy(self) -> "PanoImage":
        return PanoImage(self.color.copy(),
                         None if self.depth is None else self.depth.copy(),
                         self.valid.copy(), self.provenance)


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------

def write_png(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), arr):
        raise IOError(f"failed to write {path}")


def read_png(path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise IOError(f"failed to read {path}")
    if arr.ndim == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_BGR2RGB)
    return arr


# ---------------------------------------------------------------------------
# Raw float rasters
# ---------------------------------------------------------------------------

def write_raw_raster(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("raw raster must be 2D")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", w, h))
        f.write(arr.astype("<f4").tobytes())


def read_raw_raster(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise IOError(f"truncated raster file {path}")
    w, h = struct.unpack("<II", data[:8])
    arr = np.frombuffer(data[8:], dtype="<f4")
    if arr.size != w * h:
        raise IOError(f"raster payload mismatch in {path}: {arr.size} != {w}x{h}")
    return arr.reshape(h, w).copy()


# ---------------------------------------------------------------------------
# Channel encodings for proxy rasters
# ---------------------------------------------------------------------------

def encode_normals_u16(normals: np.ndarray) -> np.ndarray:
    """Map unit normals from [-1, 1] to uint16 via (n + 1) / 2 * 65535."""
    scaled = (np.clip(normals, -1.0, 1.0) + 1.0) * 0.5 * 65535.0
    return np.round(scaled).astype(np.uint16)


def decode_normals_u16(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 65535.0 * 2.0 - 1.0


def semantics_to_rgb(cls: np.ndarray, room: np.ndarray) -> np.ndarray:
    """Color-code surface class and room id: R = 40 * class, G = room, B = 40 * class + room."""
    r = (cls.astype(np.int32) * 40) % 256
    g = room.astype(np.int32) % 256
    b = (cls.astype(np.int32) * 40 + room.astype(np.int32)) % 256
    return np.stack([r, g, b], axis=-1).astype(np.uint8)
