"""Topology-aware progressive splat cache: compatibility, conservative fusion,
pruning, and the cross-room shell-depth memory gate.

Merging is one-to-one per update: each incoming splat is tested only against
primitives that existed when the update started, inside the spatial-hash
cells its compatibility radius can reach, and fuses with the nearest
compatible one. Pruning runs over the touched cells only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .images import INVALID_VALUE, PanoImage
from .splats import GaussianArrays, GaussianPrimitive

DEFAULT_TAU_MU = 1.0     # center distance threshold, in units of min mean scale
DEFAULT_TAU_V = 0.5      # min cosine between supporting view directions
DEFAULT_TAU_D = 0.10     # meters a memory pixel may sit behind the shell
DEFAULT_ALPHA_MIN = 0.05
DEFAULT_GRID_CELL = 0.25


def compatible(a: GaussianPrimitive, b: GaussianPrimitive,
               tau_mu: float = DEFAULT_TAU_MU, tau_v: float = DEFAULT_TAU_V) -> bool:
    """Merge test: same room, centers within tau_mu * min mean scale (strict),
    supporting view directions within the cosine threshold (strict)."""
    _check_thresholds(tau_mu, tau_v)
    if a.room != b.room:
        return False
    dist = float(np.linalg.norm(a.mu - b.mu))
    if not dist < tau_mu * min(a.sigma_bar, b.sigma_bar):
        return False
    return float(np.dot(a.src_dir, b.src_dir)) > tau_v


def _check_thresholds(tau_mu: float, tau_v: float) -> None:
    if tau_mu <= 0:
        raise ValueError("tau_mu must be positive")
    if not (-1.0 < tau_v < 1.0):
        raise ValueError("tau_v must be in (-1, 1)")


def fuse_pair(a: GaussianPrimitive, b: GaussianPrimitive,
              tau_mu: float = DEFAULT_TAU_MU, tau_v: float = DEFAULT_TAU_V) -> GaussianPrimitive:
    """Opacity-weighted geometric blend; appearance beyond the base color is
    inherited from the dominant (higher-opacity) primitive, ties going to a."""
    if not compatible(a, b, tau_mu, tau_v):
        raise ValueError("cannot fuse an incompatible pair")
    wa, wb = a.alpha, b.alpha
    s = wa + wb
    if s == 0.0:
        wa = wb = 0.5
        s = 1.0
    mu = (wa * a.mu + wb * b.mu) / s
    sigma = (wa * a.sigma + wb * b.sigma) / s
    qb = b.q if np.dot(a.q, b.q) >= 0.0 else -b.q
    q = wa * a.q + wb * qb
    q = q / np.linalg.norm(q)
    dom = a if a.alpha >= b.alpha else b
    sh = dom.sh.copy()
    sh[:, 0] = (wa * a.sh[:, 0] + wb * b.sh[:, 0]) / s  # blend only the base color
    return GaussianPrimitive(mu=mu, q=q, sigma=sigma, alpha=max(a.alpha, b.alpha),
                             sh=sh, src_node=dom.src_node, src_dir=dom.src_dir.copy(),
                             room=dom.room)


@dataclass
class UpdateStats:
    node_id: int = -1
    added: int = 0
    merged: int = 0
    pruned: int = 0
    candidate_tests: int = 0
    total: int = 0


class GaussianCache:
    """Growable struct-of-arrays splat store with a uniform spatial hash."""

    _FIELDS = ("mu", "q", "sigma", "alpha", "sh", "src_node", "src_dir", "room")

    def __init__(self, cell: float = DEFAULT_GRID_CELL):
        if cell <= 0:
            raise ValueError("grid cell must be positive")
        self.cell = cell
        self._n = 0
        cap = 1024
        self._mu = np.zeros((cap, 3))
        self._q = np.zeros((cap, 4))
        self._sigma = np.zeros((cap, 3))
        self._sigma_bar = np.zeros(cap)
        self._alpha = np.zeros(cap)
        self._sh = np.zeros((cap, 3, 4))
        self._src_node = np.zeros(cap, dtype=np.int64)
        self._src_dir = np.zeros((cap, 3))
        self._room = np.zeros(cap, dtype=np.int64)
        self._alive = np.zeros(cap, dtype=bool)
        self.grid: dict = {}
        self.stats: list = []

    def __len__(self) -> int:
        return int(np.count_nonzero(self._alive[:self._n]))

    @property
    def arrays(self) -> GaussianArrays:
        idx = np.flatnonzero(self._alive[:self._n])
        return GaussianArrays(
            mu=self._mu[idx].copy(), q=self._q[idx].copy(),
            sigma=self._sigma[idx].copy(), alpha=self._alpha[idx].copy(),
            sh=self._sh[idx].copy(), src_node=self._src_node[idx].copy(),
            src_dir=self._src_dir[idx].copy(), room=self._room[idx].copy())

    def primitives(self) -> list:
        return self.arrays.to_list()

    def copy(self) -> "GaussianCache":
        out = GaussianCache(self.cell)
        cap = self._mu.shape[0]
        for name in ("_mu", "_q", "_sigma", "_sigma_bar", "_alpha", "_sh",
                     "_src_node", "_src_dir", "_room", "_alive"):
            setattr(out, name, getattr(self, name).copy())
        out._n = self._n
        out.grid = {k: list(v) for k, v in self.grid.items()}
        out.stats = list(self.stats)
        return out

    # -- internal helpers ---------------------------------------------------

    def _cell_of(self, mu) -> tuple:
        return (int(np.floor(mu[0] / self.cell)),
                int(np.floor(mu[1] / self.cell)),
                int(np.floor(mu[2] / self.cell)))

    def _cells_in_radius(self, mu, radius: float) -> list:
        lo = np.floor((mu - radius) / self.cell).astype(np.int64)
        hi = np.floor((mu + radius) / self.cell).astype(np.int64)
        return [c for c in product(range(lo[0], hi[0] + 1),
                                   range(lo[1], hi[1] + 1),
                                   range(lo[2], hi[2] + 1))]

    def _ensure_capacity(self, extra: int) -> None:
        cap = self._mu.shape[0]
        need = self._n + extra
        if need <= cap:
            return
        new_cap = max(2 * cap, need)

        def grow(arr):
            shape = (new_cap,) + arr.shape[1:]
            out = np.zeros(shape, dtype=arr.dtype)
            out[:cap] = arr
            return out

        for name in ("_mu", "_q", "_sigma", "_sigma_bar", "_alpha", "_sh",
                     "_src_node", "_src_dir", "_room", "_alive"):
            setattr(self, name, grow(getattr(self, name)))

    def _append(self, p: GaussianPrimitive) -> int:
        self._ensure_capacity(1)
        i = self._n
        self._mu[i] = p.mu
        self._q[i] = p.q
        self._sigma[i] = p.sigma
        self._sigma_bar[i] = p.sigma_bar
        self._alpha[i] = p.alpha
        self._sh[i] = p.sh
        self._src_node[i] = p.src_node
        self._src_dir[i] = p.src_dir
        self._room[i] = p.room
        self._alive[i] = True
        self._n += 1
        self.grid.setdefault(self._cell_of(p.mu), []).append(i)
        return i

    def _primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            mu=self._mu[i].copy(), q=self._q[i].copy(), sigma=self._sigma[i].copy(),
            alpha=float(self._alpha[i]), sh=self._sh[i].copy(),
            src_node=int(self._src_node[i]), src_dir=self._src_dir[i].copy(),
            room=int(self._room[i]))

    def _replace(self, i: int, p: GaussianPrimitive) -> None:
        old_cell = self._cell_of(self._mu[i])
        new_cell = self._cell_of(p.mu)
        self._mu[i] = p.mu
        self._q[i] = p.q
        self._sigma[i] = p.sigma
        self._sigma_bar[i] = p.sigma_bar
        self._alpha[i] = p.alpha
        self._sh[i] = p.sh
        self._src_node[i] = p.src_node
        self._src_dir[i] = p.src_dir
        self._room[i] = p.room
        if new_cell != old_cell:
            self.grid[old_cell].remove(i)
            if not self.grid[old_cell]:
                del self.grid[old_cell]
            self.grid.setdefault(new_cell, []).append(i)

    def _kill(self, i: int) -> None:
        self._alive[i] = False
        cell = self._cell_of(self._mu[i])
        bucket = self.grid.get(cell)
        if bucket and i in bucket:
            bucket.remove(i)
            if not bucket:
                del self.grid[cell]


def update(cache: GaussianCache, delta: list, tau_mu: float = DEFAULT_TAU_MU,
           tau_v: float = DEFAULT_TAU_V, alpha_min: float = DEFAULT_ALPHA_MIN,
           node_id: int = -1) -> GaussianCache:
    """Fuse-then-prune cache update; returns a new cache snapshot.

    Each delta splat is matched against pre-update primitives only, so at
    most one merge happens per delta splat and re-observing identical content
    leaves the cache size unchanged.
    """
    _check_thresholds(tau_mu, tau_v)
    out = cache.copy()
    snapshot = out._n
    stats = UpdateStats(node_id=node_id)
    touched = set()

    for p in delta:
        radius = tau_mu * p.sigma_bar
        cells = out._cells_in_radius(p.mu, radius)
        touched.update(cells)
        cand = [i for c in cells for i in out.grid.get(c, ()) if i < snapshot]
        best = -1
        if cand:
            cand = np.asarray(sorted(cand), dtype=np.int64)
            stats.candidate_tests += int(cand.size)
            dist = np.linalg.norm(out._mu[cand] - p.mu[None, :], axis=1)
            limit = tau_mu * np.minimum(out._sigma_bar[cand], p.sigma_bar)
            cos = out._src_dir[cand] @ p.src_dir
            ok = (out._room[cand] == p.room) & (dist < limit) & (cos > tau_v)
            if ok.any():
                oki = np.flatnonzero(ok)
                best = int(cand[oki[np.argmin(dist[oki])]])
        if best >= 0:
            fused = fuse_pair(out._primitive(best), p, tau_mu, tau_v)
            out._replace(best, fused)
            touched.add(out._cell_of(fused.mu))
            stats.merged += 1
        else:
            i = out._append(p)
            touched.add(out._cell_of(p.mu))
            stats.added += 1

    for c in sorted(touched):
        for i in list(out.grid.get(c, ())):
            if out._alive[i] and out._alpha[i] < alpha_min:
                out._kill(i)
                stats.pruned += 1

    stats.total = len(out)
    out.stats.append(stats)
    return out


def filter_memory(memory: PanoImage, shell_depth: np.ndarray, tau_d: float = DEFAULT_TAU_D) -> PanoImage:
    """Invalidate memory pixels lying behind the first shell surface.

    A pixel whose cache depth exceeds the shell depth by more than tau_d, or
    that carries no memory at all, becomes color 255 / invalid; everything
    else is copied through unchanged.
    """
    shell_depth = np.asarray(shell_depth, dtype=np.float64)
    if memory.depth is None:
        raise ValueError("memory image needs a depth raster")
    if shell_depth.shape != memory.depth.shape:
        raise ValueError(f"resolution mismatch: {shell_depth.shape} vs {memory.depth.shape}")
    behind = memory.depth > shell_depth + tau_d
    bad = behind | ~memory.valid
    color = memory.color.copy()
    color[bad] = INVALID_VALUE
    return PanoImage(color, depth=memory.depth.copy(), valid=~bad,
                     provenance="cache")
