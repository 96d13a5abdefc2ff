"""Gaussian splat primitives, CPU equirectangular splat rendering, and the
deterministic depth-unprojection lifter.

Rendering casts one ray per pixel and evaluates each splat at the closest
point on the ray (standard splatting approximation), compositing front to
back in closest-point depth order: w_i = g_i * prod_{j<i} (1 - g_j) with
g = alpha * exp(-0.5 d^T Sigma^-1 d). Rendered color is the unnormalized
composite sum; rendered depth is the alpha-weighted expected depth; a pixel
counts as covered memory when the accumulated alpha reaches 0.5.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PanoPose, quat_identity, quat_to_mat
from .images import PanoImage
from .panocam import pixel_grid_directions

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199

LIFT_ALPHA = 0.9
LIFT_K_SIGMA = 0.7  # splat radius in pixel footprints; neighbors overlap at ~1 sigma

VALID_ALPHA = 0.5   # accumulated alpha needed for a covered memory pixel

_G_MIN = 1.0 / 1024.0   # per-splat response below this is dropped
_G_MAX = 0.99999        # keeps log1p finite when alpha -> 1
_T_NEAR = 0.05          # splats closer than this to the camera are skipped
_PAIR_BUDGET = 2_000_000

_UNIT_TOL = 1e-9


@dataclass
class GaussianPrimitive:
    """One cached splat."""

    mu: np.ndarray        # (3,) center, meters
    q: np.ndarray         # (4,) unit quaternion (w, x, y, z)
    sigma: np.ndarray     # (3,) per-axis scale, meters
    alpha: float
    sh: np.ndarray        # (3, 4) per channel: DC + 3 linear coefficients
    src_node: int
    src_dir: np.ndarray   # (3,) unit, source camera toward mu
    room: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(3)
        self.q = np.asarray(self.q, dtype=np.float64).reshape(4)
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(3)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(3, 4)
        self.src_dir = np.asarray(self.src_dir, dtype=np.float64).reshape(3)
        if not np.all(self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if abs(np.linalg.norm(self.q) - 1.0) > _UNIT_TOL:
            raise ValueError("quaternion is not unit length")
        if abs(np.linalg.norm(self.src_dir) - 1.0) > _UNIT_TOL:
            raise ValueError("src_dir is not unit length")

    @property
    def sigma_bar(self) -> float:
        return float(np.mean(self.sigma))


@dataclass
class GaussianArrays:
    """Struct-of-arrays view over a set of primitives."""

    mu: np.ndarray
    q: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    sh: np.ndarray
    src_node: np.ndarray
    src_dir: np.ndarray
    room: np.ndarray

    def __len__(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def empty(cls) -> "GaussianArrays":
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
                   np.zeros(0), np.zeros((0, 3, 4)),
                   np.zeros(0, dtype=np.int64), np.zeros((0, 3)),
                   np.zeros(0, dtype=np.int64))

    @classmethod
    def from_list(cls, gaussians: list) -> "GaussianArrays":
        if not gaussians:
            return cls.empty()
        return cls(
            mu=np.stack([g.mu for g in gaussians]),
            q=np.stack([g.q for g in gaussians]),
            sigma=np.stack([g.sigma for g in gaussians]),
            alpha=np.array([g.alpha for g in gaussians]),
            sh=np.stack([g.sh for g in gaussians]),
            src_node=np.array([g.src_node for g in gaussians], dtype=np.int64),
            src_dir=np.stack([g.src_dir for g in gaussians]),
            room=np.array([g.room for g in gaussians], dtype=np.int64),
        )

    def to_list(self) -> list:
        return [self.primitive(i) for i in range(len(self))]

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(self.mu[i], self.q[i], self.sigma[i],
                                 float(self.alpha[i]), self.sh[i],
                                 int(self.src_node[i]), self.src_dir[i],
                                 int(self.room[i]))

    def subset(self, idx) -> "GaussianArrays":
        return GaussianArrays(self.mu[idx], self.q[idx], self.sigma[idx],
                              self.alpha[idx], self.sh[idx], self.src_node[idx],
                              self.src_dir[idx], self.room[idx])


def _as_arrays(gaussians) -> GaussianArrays:
    if isinstance(gaussians, GaussianArrays):
        return gaussians
    return GaussianArrays.from_list(list(gaussians))


# ---------------------------------------------------------------------------
# Spherical harmonics (degree 1)
# ---------------------------------------------------------------------------

def sh_eval(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Degree-1 real SH color for one coefficient set and unit direction."""
    return sh_eval_many(np.asarray(sh)[None], np.asarray(view_dir)[None])[0]


def sh_eval_many(sh: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    """(N, 3, 4) coefficients x (N, 3) unit dirs -> (N, 3) RGB in [0, 1]."""
    sh = np.asarray(sh, dtype=np.float64)
    d = np.asarray(view_dirs, dtype=np.float64)
    x, y, z = d[:, 0:1], d[:, 1:2], d[:, 2:3]
    rgb = (SH_C0 * sh[:, :, 0]
           - SH_C1 * y * sh[:, :, 1]
           + SH_C1 * z * sh[:, :, 2]
           - SH_C1 * x * sh[:, :, 3])
    return np.clip(rgb, 0.0, 1.0)


def dc_from_rgb(rgb01: np.ndarray) -> np.ndarray:
    """DC coefficients that make sh_eval return rgb01 when linear terms are 0."""
    return np.asarray(rgb01, dtype=np.float64) / SH_C0


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

@dataclass
class RenderResult:
    image: PanoImage           # 8-bit color, depth, validity (alpha >= 0.5)
    alpha: np.ndarray          # (H, W) accumulated alpha = sum of weights
    color_float: np.ndarray    # (H, W, 3) unquantized composite in [0, 1]

    def memory_image(self, background=(0, 0, 0)) -> PanoImage:
        """Un-premultiplied view for memory conditioning: covered pixels carry
        the alpha-normalized color estimate instead of the raw composite."""
        valid = self.image.valid
        color = np.clip(np.round(
            self.color_float / np.maximum(self.alpha, 1e-12)[:, :, None] * 255.0),
            0, 255).astype(np.uint8)
        color[~valid] = np.asarray(background, dtype=np.uint8)
        return PanoImage(color, depth=self.image.depth.copy(), valid=valid.copy(),
                         provenance="cache")


def render_pano(gaussians, pose: PanoPose, width: int, height: int,
                background=(0, 0, 0)) -> RenderResult:
    g = _as_arrays(gaussians)
    n = len(g)
    n_pix = width * height
    dirs = (pixel_grid_directions(width, height) @ pose.matrix.T).reshape(-1, 3)

    pix_parts, t_parts, resp_parts, gid_parts = [], [], [], []
    if n:
        v = g.mu - pose.position[None, :]          # camera -> center
        t_c = np.linalg.norm(v, axis=1)
        iso = np.ptp(g.sigma, axis=1) == 0.0       # isotropic: rotation irrelevant
        rot = None if iso.all() else _quat_mats(g.q)
        keep = (g.alpha >= _G_MIN) & (t_c > _T_NEAR)

        # angular footprint and pixel box per splat
        r3 = 3.0 * g.sigma.max(axis=1)
        with np.errstate(invalid="ignore"):
            ang = np.arcsin(np.clip(r3 / np.maximum(t_c, 1e-12), 0.0, 1.0))
        local = v @ pose.matrix                    # camera frame
        el = np.arcsin(np.clip(local[:, 2] / np.maximum(t_c, 1e-12), -1.0, 1.0))
        az = np.arctan2(local[:, 1], local[:, 0])
        px = ((az + np.pi) * width / (2.0 * np.pi) - 0.5) % width
        py = (0.5 - el / np.pi) * height - 0.5
        cos_el = np.maximum(np.cos(np.minimum(np.abs(el) + ang, np.pi / 2)), 1e-9)
        hwx = np.ceil(ang * width / (2.0 * np.pi) / cos_el).astype(np.int64) + 1
        hwx = np.minimum(hwx, width // 2)
        hwy = np.minimum(np.ceil(ang * height / np.pi).astype(np.int64), height - 1)
        cx = np.round(px).astype(np.int64) % width
        cy = np.clip(np.round(py).astype(np.int64), 0, height - 1)

        idx_all = np.flatnonzero(keep)
        # group by similar box size so the fixed-size grid per chunk stays tight
        sizes_all = (2 * hwx + 1) * (2 * hwy + 1)
        order = idx_all[np.lexsort((idx_all, sizes_all[idx_all]))]
        sizes = sizes_all[order]
        pos = 0
        while pos < order.size:
            end = min(pos + max(1, _PAIR_BUDGET // int(sizes[pos])), order.size)
            while end - 1 > pos and (end - pos) * int(sizes[end - 1]) > _PAIR_BUDGET:
                end = pos + max(1, _PAIR_BUDGET // int(sizes[end - 1]))
            sel = order[pos:end]
            pos = end
            bx = int(hwx[sel].max())
            by = int(hwy[sel].max())
            _collect_pairs(sel, bx, by, g, rot, iso, v, t_c, ang, hwx, hwy,
                           cx, cy, dirs, width, height,
                           pix_parts, t_parts, resp_parts, gid_parts)

    if pix_parts:
        pix = np.concatenate(pix_parts)
        t = np.concatenate(t_parts)
        resp = np.concatenate(resp_parts)
        gid = np.concatenate(gid_parts)
    else:
        pix = np.zeros(0, dtype=np.int64)
        t = np.zeros(0)
        resp = np.zeros(0)
        gid = np.zeros(0, dtype=np.int64)

    # front-to-back composite per pixel; depth quantized to ~2 micrometers
    # gives a radix-sortable key, ties keep deterministic generation order
    key = (pix.astype(np.int64) << np.int64(24)) | np.clip(
        (t * (float(1 << 24) / 32.0)).astype(np.int64), 0, (1 << 24) - 1)
    order = np.argsort(key, kind="stable")
    pix, t, resp, gid = pix[order], t[order], resp[order], gid[order]
    resp = np.minimum(resp, _G_MAX)
    log_t = np.log1p(-resp)
    cum = np.concatenate([[0.0], np.cumsum(log_t)])[:-1]          # log T before each entry
    seg_start = np.zeros_like(pix, dtype=bool)
    if pix.size:
        seg_start[0] = True
        seg_start[1:] = pix[1:] != pix[:-1]
    start_idx = np.flatnonzero(seg_start)
    seg_of = np.cumsum(seg_start) - 1
    base = cum[start_idx][seg_of] if pix.size else cum
    weight = resp * np.exp(cum - base)

    if pix.size:
        alpha = np.bincount(pix, weights=weight, minlength=n_pix)
        depth_sum = np.bincount(pix, weights=weight * t, minlength=n_pix)
        if np.any(g.sh[:, :, 1:]):
            rgb = sh_eval_many(g.sh[gid], dirs[pix])
        else:  # DC-only splats are view-independent
            rgb = np.clip(SH_C0 * g.sh[:, :, 0], 0.0, 1.0)[gid]
        color = np.stack([np.bincount(pix, weights=weight * rgb[:, c], minlength=n_pix)
                          for c in range(3)], axis=1)
    else:
        alpha = np.zeros(n_pix)
        depth_sum = np.zeros(n_pix)
        color = np.zeros((n_pix, 3))

    with np.errstate(invalid="ignore"):
        depth = np.where(alpha > 0.0, depth_sum / np.maximum(alpha, 1e-300), np.inf)
    valid = alpha >= VALID_ALPHA
    color8 = np.clip(np.round(color * 255.0), 0, 255).astype(np.uint8)
    bg = np.asarray(background, dtype=np.uint8)
    color8[~valid] = bg

    shape = (height, width)
    image = PanoImage(color8.reshape(height, width, 3),
                      depth=depth.reshape(shape),
                      valid=valid.reshape(shape),
                      provenance="cache")
    return RenderResult(image=image, alpha=alpha.reshape(shape),
                        color_float=color.reshape(height, width, 3))


def _quat_mats(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def _collect_pairs(sel, bx, by, g, rot, iso, v, t_c, ang, hwx, hwy, cx, cy,
                   dirs, width, height, pix_parts, t_parts, resp_parts, gid_parts):
    """Evaluate one chunk of splats over fixed (2bx+1, 2by+1) pixel boxes.

    The horizontal reach is tightened per row: the needed azimuth span grows
    with 1/cos(elevation), which also makes rows adjacent to a pole span the
    full width (covering the wrap across the pole)."""
    dy = np.arange(-by, by + 1)
    dx = np.arange(-bx, bx + 1)
    ys = cy[sel][:, None, None] + dy[None, :, None]
    xs = (cx[sel][:, None, None] + dx[None, None, :]) % width
    el_rows = np.pi * (0.5 - (ys + 0.5) / height)
    cos_rows = np.maximum(np.cos(el_rows), 1e-9)
    hwx_rows = np.minimum(np.ceil(
        ang[sel][:, None, None] * (width / (2.0 * np.pi)) / cos_rows), width // 2)
    inside = ((ys >= 0) & (ys < height)
              & (np.abs(dy)[None, :, None] <= hwy[sel][:, None, None])
              & (np.abs(dx)[None, None, :] <= hwx_rows))

    gi, yi, xi = np.nonzero(inside)
    if gi.size == 0:
        return
    gidx = sel[gi]
    pix = ys[gi, yi, 0] * width + xs[gi, 0, xi]
    d = dirs[pix]
    vv = v[gidx]
    t = d[:, 0] * vv[:, 0] + d[:, 1] * vv[:, 1] + d[:, 2] * vv[:, 2]
    # perpendicular distance to the center bounds the response (3 sigma cut)
    dist2 = np.maximum(t_c[gidx] ** 2 - t * t, 0.0)
    smax = g.sigma[gidx].max(axis=1)
    ok = (t > _T_NEAR) & (dist2 <= 9.0 * smax * smax)
    if not ok.any():
        return
    gidx, pix, t, dist2 = gidx[ok], pix[ok], t[ok], dist2[ok]
    d, vv = d[ok], vv[ok]

    q2 = np.empty(t.shape)
    is_iso = iso[gidx]
    if is_iso.any():
        s0 = g.sigma[gidx[is_iso], 0]
        q2[is_iso] = dist2[is_iso] / (s0 * s0)
    gen = ~is_iso
    if gen.any():
        delta = t[gen, None] * d[gen] - vv[gen]
        local = np.einsum("pi,pij->pj", delta, rot[gidx[gen]])
        scaled = local / g.sigma[gidx[gen]]
        q2[gen] = np.einsum("pi,pi->p", scaled, scaled)

    resp = g.alpha[gidx] * np.exp(-0.5 * q2)
    ok = resp >= _G_MIN
    if not ok.any():
        return
    pix_parts.append(pix[ok])
    t_parts.append(t[ok])
    resp_parts.append(resp[ok])
    gid_parts.append(gidx[ok])


# ---------------------------------------------------------------------------
# Lifting (deterministic stand-in for a learned reconstructor)
# ---------------------------------------------------------------------------

def lift_pano(pano: PanoImage, pose: PanoPose, stride: int, room: int,
              src_node: int = 0, k_sigma: float = LIFT_K_SIGMA,
              alpha: float = LIFT_ALPHA) -> list:
    """One isotropic splat per valid strided pixel, unprojected by depth."""
    if pano.depth is None:
        raise ValueError("lift_pano needs a depth raster")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    h, w = pano.height, pano.width
    R = pose.matrix
    dirs = pixel_grid_directions(w, h) @ R.T
    out = []
    identity = quat_identity()
    for y in range(0, h, stride):
        for x in range(0, w, stride):
            if not pano.valid[y, x]:
                continue
            if np.all(pano.color[y, x] == 255):
                continue
            depth = float(pano.depth[y, x])
            if not np.isfinite(depth) or depth <= 0.0:
                continue
            d = dirs[y, x]
            mu = pose.position + depth * d
            s = depth * (2.0 * np.pi / w) * stride * k_sigma
            sh = np.zeros((3, 4))
            sh[:, 0] = dc_from_rgb(pano.color[y, x].astype(np.float64) / 255.0)
            out.append(GaussianPrimitive(
                mu=mu, q=identity, sigma=np.full(3, s), alpha=alpha, sh=sh,
                src_node=src_node, src_dir=d, room=room))
    return out


# ---------------------------------------------------------------------------
# Binary cache file
# ---------------------------------------------------------------------------

CACHE_MAGIC = 0x50475343  # "PGSC"
CACHE_VERSION = 1

GAUSSIAN_DTYPE = np.dtype([
    ("mu", "<f4", 3),
    ("q", "<f4", 4),
    ("sigma", "<f4", 3),
    ("alpha", "<f4"),
    ("sh", "<f4", (3, 4)),
    ("src_node", "<u4"),
    ("src_dir", "<f4", 3),
    ("room", "<u4"),
])


def save_gaussians(path, gaussians) -> None:
    g = _as_arrays(gaussians)
    rec = np.zeros(len(g), dtype=GAUSSIAN_DTYPE)
    rec["mu"] = g.mu
    rec["q"] = g.q
    rec["sigma"] = g.sigma
    rec["alpha"] = g.alpha
    rec["sh"] = g.sh
    rec["src_node"] = g.src_node
    rec["src_dir"] = g.src_dir
    rec["room"] = g.room
    with open(path, "wb") as f:
        f.write(struct.pack("<IIII", CACHE_MAGIC, CACHE_VERSION, len(g), 0))
        f.write(rec.tobytes())


def load_gaussians(path) -> list:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise IOError(f"truncated cache file {path}")
    magic, version, count, _ = struct.unpack("<IIII", data[:16])
    if magic != CACHE_MAGIC:
        raise IOError(f"{path} is not a gaussian cache file")
    if version != CACHE_VERSION:
        raise IOError(f"unsupported cache version {version}")
    rec = np.frombuffer(data[16:], dtype=GAUSSIAN_DTYPE, count=count)
    out = []
    for r in rec:
        q = np.asarray(r["q"], dtype=np.float64)
        q /= np.linalg.norm(q)  # restore unit length lost to f32 quantization
        sd = np.asarray(r["src_dir"], dtype=np.float64)
        sd /= np.linalg.norm(sd)
        out.append(GaussianPrimitive(
            mu=np.asarray(r["mu"], dtype=np.float64), q=q,
            sigma=np.asarray(r["sigma"], dtype=np.float64),
            alpha=float(r["alpha"]), sh=np.asarray(r["sh"], dtype=np.float64),
            src_node=int(r["src_node"]), src_dir=sd, room=int(r["room"])))
    return out
