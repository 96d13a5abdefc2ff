"""Depth losses with analytic gradients, image PSNR/SSIM, and the
cross-node overlap-PSNR protocol over co-visible shell surface patches.

MSE for PSNR is the mean over samples and channels with peak 255; zero MSE
reports the 99.0 dB cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .geometry import PanoPose
from .images import PanoImage
from .panocam import project_points
from .raycast import intersect_rays, occluder_pack
from .shell import ShellScene, SurfaceClass

LOSS_EPS = 1e-6
PSNR_CAP = 99.0
COVIS_EPS = 0.02      # meters: occlusion test slack for co-visibility
REGION_STEP = 0.01    # meters between surface samples
REGION_SAMPLES = 100  # per axis -> 100 x 100 = 10,000 points

WEIGHT_L2 = 1.0
WEIGHT_PERC = 0.1
WEIGHT_ALPHA = 0.05
WEIGHT_DEPTH = 0.5


# ---------------------------------------------------------------------------
# Depth losses
# ---------------------------------------------------------------------------

@dataclass
class DepthLossResult:
    l_log: float
    l_si: float
    grad_log: np.ndarray
    grad_si: np.ndarray

    @property
    def total(self) -> float:
        return self.l_log + self.l_si

    @property
    def grad_total(self) -> np.ndarray:
        return self.grad_log + self.grad_si


def depth_loss(d_hat: np.ndarray, d: np.ndarray, eps: float = LOSS_EPS) -> DepthLossResult:
    """Log-depth L1 and damped scale-invariant log terms with gradients
    with respect to d_hat."""
    d_hat = np.asarray(d_hat, dtype=np.float64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if d_hat.size == 0 or d_hat.shape != d.shape:
        raise ValueError("depth arrays must be non-empty and equally sized")
    if np.any(d_hat <= 0) or np.any(d <= 0):
        raise ValueError("depths must be positive")
    n = d_hat.size

    r = np.log(d_hat + 1.0) - np.log(d + 1.0)
    l_log = float(np.mean(np.abs(r)))
    grad_log = np.sign(r) / (n * (d_hat + 1.0))

    delta = np.log(d_hat + eps) - np.log(d + eps)
    m1 = float(np.mean(delta))
    m2 = float(np.mean(delta * delta))
    s = m2 - 0.85 * m1 * m1 + eps
    l_si = 0.1 * math.sqrt(s)
    ds = (2.0 * delta / n - 1.7 * m1 / n) / (d_hat + eps)
    grad_si = 0.1 / (2.0 * math.sqrt(s)) * ds

    return DepthLossResult(l_log=l_log, l_si=l_si, grad_log=grad_log, grad_si=grad_si)


def opacity_regularizer(alphas) -> float:
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    return float(np.mean(alphas)) if alphas.size else 0.0


def total_loss(l2: float, perc: float, alpha_reg: float, depth: float,
               weights: tuple | None = None) -> float:
    """Weighted training objective; default weights are the fixed constants."""
    w2, wp, wa, wd = weights if weights is not None else (
        WEIGHT_L2, WEIGHT_PERC, WEIGHT_ALPHA, WEIGHT_DEPTH)
    for v in (l2, perc, alpha_reg, depth):
        if not np.isfinite(v):
            raise ValueError("loss components must be finite")
    return w2 * l2 + wp * perc + wa * alpha_reg + wd * depth


# ---------------------------------------------------------------------------
# PSNR / SSIM
# ---------------------------------------------------------------------------

def psnr_value(mse: float) -> float:
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(255.0 ** 2 / mse), PSNR_CAP)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def psnr_ssim(a: PanoImage, b: PanoImage) -> tuple:
    """Standard PSNR over 8-bit RGB and Gaussian-window SSIM (11x11, 1.5)."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("image dimensions differ")
    fa = a.color.astype(np.float64)
    fb = b.color.astype(np.float64)
    mse = float(np.mean((fa - fb) ** 2))
    p = psnr_value(mse)

    win = _gaussian_window()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    vals = []
    for c in range(3):
        x, y = fa[:, :, c], fb[:, :, c]
        mx = convolve2d(x, win, mode="valid")
        my = convolve2d(y, win, mode="valid")
        mxx = convolve2d(x * x, win, mode="valid")
        myy = convolve2d(y * y, win, mode="valid")
        mxy = convolve2d(x * y, win, mode="valid")
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        vals.append(float(np.mean(s)))
    return p, float(np.mean(vals))


# ---------------------------------------------------------------------------
# Overlap PSNR over co-visible surface regions
# ---------------------------------------------------------------------------

@dataclass
class EvalRegion:
    """1 m x 1 m patch on a shell surface sampled every centimeter."""

    corner: np.ndarray  # (3,) region origin on the surface
    e_u: np.ndarray     # (3,) unit, first surface axis
    e_v: np.ndarray     # (3,) unit, second surface axis
    step: float = REGION_STEP
    samples: int = REGION_SAMPLES

    def __post_init__(self):
        self.corner = np.asarray(self.corner, dtype=np.float64).reshape(3)
        self.e_u = np.asarray(self.e_u, dtype=np.float64).reshape(3)
        self.e_v = np.asarray(self.e_v, dtype=np.float64).reshape(3)
        for e in (self.e_u, self.e_v):
            if abs(np.linalg.norm(e) - 1.0) > 1e-9:
                raise ValueError("region axes must be unit length")
        if abs(float(np.dot(self.e_u, self.e_v))) > 1e-9:
            raise ValueError("region axes must be orthogonal")

    def grid_points(self) -> np.ndarray:
        a = np.arange(self.samples, dtype=np.float64)
        uu, vv = np.meshgrid(a, a, indexing="ij")
        return (self.corner[None, :]
                + (uu.reshape(-1, 1) * self.step) * self.e_u[None, :]
                + (vv.reshape(-1, 1) * self.step) * self.e_v[None, :])


def bilinear_fetch(color: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear color lookup with horizontal wrap and vertical clamp."""
    h, w = color.shape[:2]
    x = np.asarray(x, dtype=np.float64) % w
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = (x0 + 1) % w
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    c = color.astype(np.float64)
    top = c[y0, x0] * (1 - fx) + c[y0, x1] * fx
    bot = c[y1, x0] * (1 - fx) + c[y1, x1] * fx
    return top * (1 - fy) + bot * fy


@dataclass
class OverlapEntry:
    node_index: int
    region_index: int
    psnr: float
    mse: float
    n_valid: int


@dataclass
class OverlapReport:
    entries: list
    mean_psnr: float
    warnings: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["overlap-psnr report"]
        for w in self.warnings:
            lines.append(f"warning: {w}")
        for e in self.entries:
            label = self.labels[e.node_index] if e.node_index < len(self.labels) \
                else str(e.node_index)
            lines.append(f"node {label} region {e.region_index} "
                         f"psnr {e.psnr:.4f} dB mse {e.mse:.6f} samples {e.n_valid}")
        lines.append(f"mean {self.mean_psnr:.4f} dB over {len(self.entries)} pairs")
        return "\n".join(lines) + "\n"


def _covisibility(pose: PanoPose, pts: np.ndarray, pack) -> np.ndarray:
    """True where the shell ray toward each point hits within COVIS_EPS of it."""
    offset = pts - pose.position[None, :]
    dist = np.linalg.norm(offset, axis=1)
    dirs = offset / dist[:, None]
    t, _ = intersect_rays(pose.position, dirs, pack)
    return np.abs(t - dist) <= COVIS_EPS


def overlap_psnr(shell: ShellScene, panos: list, regions: list,
                 base_index: int = 0, labels: list | None = None) -> OverlapReport:
    """Project every region sample into the base pano and each other pano,
    keep samples co-visible in both, and report per-(node, region) PSNR."""
    if len(panos) < 2:
        raise ValueError("need at least two panoramas")
    if not regions:
        raise ValueError("no evaluation regions")
    pack = occluder_pack(shell)
    base_img, base_pose = panos[base_index]
    w, h = base_img.width, base_img.height

    def label(i):
        return labels[i] if labels and i < len(labels) else str(i)

    entries = []
    warnings = []
    for r_idx, region in enumerate(regions):
        pts = region.grid_points()
        vis_base = _covisibility(base_pose, pts, pack)
        xb, yb, _ = project_points(base_pose, pts, w, h)
        base_colors = bilinear_fetch(base_img.color, xb, yb)
        any_valid = False
        for n_idx, (img, pose) in enumerate(panos):
            if n_idx == base_index:
                continue
            vis = vis_base & _covisibility(pose, pts, pack)
            n_valid = int(np.count_nonzero(vis))
            if n_valid == 0:
                warnings.append(f"node {label(n_idx)} region {r_idx}: "
                                "no co-visible samples")
                continue
            any_valid = True
            xt, yt, _ = project_points(pose, pts[vis], img.width, img.height)
            ct = bilinear_fetch(img.color, xt, yt)
            diff = base_colors[vis] - ct
            mse = float(np.mean(diff * diff))
            entries.append(OverlapEntry(n_idx, r_idx, psnr_value(mse), mse, n_valid))
        if not any_valid:
            warnings.append(f"region {r_idx}: excluded entirely")
    if not entries:
        raise ValueError("no (node, region) pair had co-visible samples")
    mean = float(np.mean([e.psnr for e in entries]))
    return OverlapReport(entries=entries, mean_psnr=mean, warnings=warnings,
                         labels=labels or [])


def auto_regions(shell: ShellScene, min_wall: float = 1.2) -> list:
    """Largest wall per room, a 1 m x 1 m patch centered at mid-height with
    axes along the wall tangent and up."""
    span = (REGION_SAMPLES - 1) * REGION_STEP
    out = []
    for room in sorted(shell.plan.rooms, key=lambda r: r.room_id):
        poly = room.polygon
        n = poly.shape[0]
        best = None
        for e in range(n):
            a, b = poly[e], poly[(e + 1) % n]
            length = float(np.linalg.norm(b - a))
            if best is None or length > best[0] + 1e-12:
                best = (length, a, b)
        length, a, b = best
        if length < min_wall or shell.plan.wall_height < min_wall:
            continue
        t2 = (b - a) / length
        center2 = 0.5 * (a + b)
        zc = shell.plan.wall_height / 2.0
        e_u = np.array([t2[0], t2[1], 0.0])
        e_v = np.array([0.0, 0.0, 1.0])
        corner = np.array([center2[0], center2[1], zc]) - 0.5 * span * (e_u + e_v)
        out.append(EvalRegion(corner=corner, e_u=e_u, e_v=e_v))
    return out
