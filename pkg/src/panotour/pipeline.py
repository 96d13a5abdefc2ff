"""The autoregressive whole-house tour: shell guidance, cache memory,
oracle generation, lifting, and progressive cache updates, in breadth-first
node order from the selected start node.

Every run writes panoramas, proxy rasters, filtered memory images, the final
binary cache, a stats log, a manifest, and (optionally) the overlap-PSNR
report into the output directory. Two runs with identical configuration are
byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cache as cachemod
from .attention import build_group_mask
from .floorplan import load_scene
from .geometry import PanoPose
from .images import PanoImage, write_png
from .metrics import auto_regions, overlap_psnr
from .nodegraph import (DEFAULT_K_DOOR, DEFAULT_K_SAME, NodeGraph, bfs_order,
                        build_node_graph, insert_auxiliary_nodes,
                        select_context, select_start_node)
from .oracle import PATTERN_SCALE, make_texture_seed, oracle_generate
from .panocam import pixel_grid_directions
from .shell import build_shell
from .shellrender import shell_render, write_proxy
from .splats import lift_pano, render_pano, save_gaussians


class TourError(RuntimeError):
    """Tour failure annotated with the node and stage that raised it."""


@dataclass
class TourConfig:
    scene_path: str
    out_dir: str
    seed: int = 0
    width: int = 512
    height: int = 256
    max_spacing: float = 1.0
    k_same: int = DEFAULT_K_SAME
    k_door: int = DEFAULT_K_DOOR
    tau_mu: float = cachemod.DEFAULT_TAU_MU
    tau_v: float = cachemod.DEFAULT_TAU_V
    tau_d: float = cachemod.DEFAULT_TAU_D
    alpha_min: float = cachemod.DEFAULT_ALPHA_MIN
    grid_cell: float = cachemod.DEFAULT_GRID_CELL
    lift_stride: int = 2
    pattern_scale: float = PATTERN_SCALE
    use_cache: bool = True
    eval_overlap: bool = True
    eval_targets_only: bool = True
    save_snapshots: bool = False

    def validate(self) -> None:
        if self.width != 2 * self.height:
            raise ValueError(f"resolution must be 2:1, got {self.width}x{self.height}")
        for name in ("tau_mu", "tau_d", "alpha_min", "grid_cell", "pattern_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lift_stride < 1:
            raise ValueError("lift_stride must be >= 1")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path, **overrides) -> "TourConfig":
        data = json.loads(Path(path).read_text())
        data.update(overrides)
        return cls(**data)


@dataclass
class NodeRecord:
    node_id: int
    room: int
    kind: str
    boundary: bool
    context: list
    nearby: int | None
    added: int = 0
    merged: int = 0
    pruned: int = 0
    cache_size: int = 0
    mask_allowed: int = 0


@dataclass
class TourReport:
    out_dir: str
    order: list
    records: list
    overlap_mean: float | None = None
    graph: NodeGraph | None = None


_CULL_MARGIN = 0.5        # meters behind the shell before a splat is skipped
_LIFT_MIN_INCIDENCE = 0.25  # skip lifting pixels seen at grazing incidence


def _visible_subset(arrays, pose: PanoPose, shell_depth: np.ndarray):
    """Drop splats whose center sits well behind the shell at this pose.

    Hidden splats only ever contribute through residual transmittance, so
    skipping them keeps memory renders proportional to the visible scene.
    """
    from .panocam import project_points

    n = len(arrays)
    if n == 0:
        return arrays
    h, w = shell_depth.shape
    x, y, depth = project_points(pose, arrays.mu, w, h)
    xi = np.clip(np.round(x).astype(np.int64), 0, w - 1)
    yi = np.clip(np.round(y).astype(np.int64), 0, h - 1)
    keep = depth <= shell_depth[yi, xi] + _CULL_MARGIN
    return arrays.subset(keep) if not keep.all() else arrays


def _pick_nearby(graph: NodeGraph, node_id: int, generated: list) -> int | None:
    """Nearest generated same-room node; falls back to the nearest generated
    boundary node, then to the nearest generated node of any kind."""
    node = graph.nodes[node_id]

    def dist(g):
        return float(np.linalg.norm(graph.nodes[g].pose.position - node.pose.position))

    same = [g for g in generated if graph.nodes[g].room == node.room]
    pool = same or [g for g in generated if graph.nodes[g].boundary] or list(generated)
    if not pool:
        return None
    return min(pool, key=lambda g: (dist(g), g))


def run_tour(config: TourConfig) -> TourReport:
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    spec, targets = load_scene(config.scene_path)
    if not targets:
        raise TourError("scene file has no target nodes")
    shell = build_shell(spec)
    tex = make_texture_seed(config.seed, [r.room_id for r in spec.rooms],
                            config.pattern_scale)
    graph = build_node_graph(shell, targets, config.max_spacing)
    graph = insert_auxiliary_nodes(graph, shell, config.max_spacing,
                                   allow_any_spacing=True)
    start = select_start_node(graph, {t.node_id for t in targets})
    order = bfs_order(graph, start)

    cache = cachemod.GaussianCache(cell=config.grid_cell)
    generated: list = []
    panos: dict = {}
    records: list = []
    stats_lines: list = []

    for step, nid in enumerate(order):
        node = graph.nodes[nid]
        pose = node.pose
        stage = "proxy"
        try:
            proxy = shell_render(shell, pose, config.width, config.height)
            write_proxy(proxy,
                        out / f"proxy_sem_{nid:03d}.png",
                        out / f"proxy_normal_{nid:03d}.png",
                        out / f"proxy_depth_{nid:03d}.f32")

            memory = None
            if step > 0 and config.use_cache:
                stage = "memory"
                visible = _visible_subset(cache.arrays, pose, proxy.depth)
                rendered = render_pano(visible, pose, config.width, config.height)
                memory = cachemod.filter_memory(rendered.memory_image(), proxy.depth,
                                                config.tau_d)
                write_png(out / f"memory_{nid:03d}.png", memory.color)

            stage = "context"
            nearby_id = _pick_nearby(graph, nid, generated) if step > 0 else None
            nearby = panos[nearby_id][0] if nearby_id is not None else None
            context = select_context(graph, nid, set(generated),
                                     config.k_same, config.k_door)
            mask = build_group_mask(
                [(c, graph.nodes[c].room, graph.nodes[c].boundary) for c in context],
                graph.doorway_pairs, tokens_per_node=1)

            stage = "generate"
            pano = oracle_generate(shell, tex, proxy, memory, nearby, pose)
            write_png(out / f"pano_{nid:03d}.png", pano.color)

            stage = "lift"
            # grazing-incidence pixels smear along the surface when splatted,
            # so they are left for better-placed nodes to observe
            dirs = (pixel_grid_directions(config.width, config.height)
                    @ pose.matrix.T)
            incidence = np.abs(np.einsum("hwc,hwc->hw", dirs, proxy.normals))
            liftable = pano.copy()
            liftable.valid &= incidence >= _LIFT_MIN_INCIDENCE
            lifted = lift_pano(liftable, pose, config.lift_stride, room=node.room,
                               src_node=nid)
            rooms = _relabel_rooms(spec, lifted, node.room)
            for g, rid in zip(lifted, rooms):
                g.room = int(rid)

            rec = NodeRecord(node_id=nid, room=node.room, kind=node.kind,
                             boundary=node.boundary, context=context,
                             nearby=nearby_id, mask_allowed=int(mask.allowed.sum()))
            if config.use_cache:
                stage = "update"
                cache = cachemod.update(cache, lifted, config.tau_mu, config.tau_v,
                                        config.alpha_min, node_id=nid)
                st = cache.stats[-1]
                rec.added, rec.merged, rec.pruned = st.added, st.merged, st.pruned
                rec.cache_size = st.total
                stats_lines.append(f"node {nid} added {st.added} merged {st.merged} "
                                   f"pruned {st.pruned} total {st.total}")
                if config.save_snapshots:
                    save_gaussians(out / f"cache_{nid:03d}.bin", cache.arrays)
            records.append(rec)
            generated.append(nid)
            panos[nid] = (pano, pose)
        except Exception as e:
            raise TourError(f"node {nid} stage {stage}: {e}") from e

    save_gaussians(out / "cache_final.bin", cache.arrays)
    (out / "stats.log").write_text("\n".join(stats_lines) + "\n" if stats_lines else "")
    _write_manifest(out, config, graph, order, records)

    overlap_mean = None
    if config.eval_overlap:
        regions = auto_regions(shell)
        eval_ids = order
        if config.eval_targets_only:
            # auxiliary nodes are scaffolding, not deliverables; consistency
            # is scored over the user-facing target panoramas
            target_ids = {t.node_id for t in targets}
            eval_ids = [nid for nid in order
                        if nid in target_ids or nid == start]
        pano_list = [panos[nid] for nid in eval_ids]
        report = overlap_psnr(shell, pano_list, regions, base_index=0,
                              labels=[str(nid) for nid in eval_ids])
        (out / "overlap_report.txt").write_text(report.to_text())
        overlap_mean = report.mean_psnr

    return TourReport(out_dir=str(out), order=order, records=records,
                      overlap_mean=overlap_mean, graph=graph)


def _relabel_rooms(spec, lifted, fallback_room: int) -> np.ndarray:
    """Room of each splat center, falling back to the source node's room for
    centers that land inside a wall."""
    import shapely

    if not lifted:
        return np.zeros(0, dtype=np.int64)
    xy = np.stack([g.mu[:2] for g in lifted])
    rooms = np.full(len(lifted), -1, dtype=np.int64)
    for r in sorted(spec.rooms, key=lambda r: r.room_id):
        undecided = rooms < 0
        if not undecided.any():
            break
        inside = shapely.intersects_xy(r.shape, xy[undecided, 0], xy[undecided, 1])
        idx = np.flatnonzero(undecided)[inside]
        rooms[idx] = r.room_id
    rooms[rooms < 0] = fallback_room
    return rooms


def _write_manifest(out: Path, config: TourConfig, graph: NodeGraph,
                    order: list, records: list) -> None:
    manifest = {
        "config": dataclasses.asdict(config),
        "order": order,
        "nodes": [
            {
                "id": r.node_id,
                "room": r.room,
                "kind": r.kind,
                "boundary": r.boundary,
                "position": graph.nodes[r.node_id].pose.position.tolist(),
                "rotation": graph.nodes[r.node_id].pose.rotation.tolist(),
                "context": r.context,
                "context_size": len(r.context),
                "mask_allowed": r.mask_allowed,
                "nearby": r.nearby,
                "pano": f"pano_{r.node_id:03d}.png",
                "added": r.added,
                "merged": r.merged,
                "pruned": r.pruned,
                "cache_size": r.cache_size,
            }
            for r in records
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_manifest_panos(run_dir) -> tuple:
    """(panos, labels) from a run directory's manifest, in generation order."""
    from .images import read_png

    run = Path(run_dir)
    manifest = json.loads((run / "manifest.json").read_text())
    panos = []
    labels = []
    for entry in manifest["nodes"]:
        img = PanoImage(read_png(run / entry["pano"]))
        pose = PanoPose(np.array(entry["position"]), np.array(entry["rotation"]))
        panos.append((img, pose))
        labels.append(str(entry["id"]))
    return panos, labels, manifest
