"""Panorama node graph: construction over a floorplan, auxiliary densification,
start-node selection, and bounded context picking.

Edges are navigation adjacency: same-room pairs within twice the node spacing
that have line-of-sight, plus a pair of "door step" auxiliary nodes straddling
each doorway. Nodes within 0.3 m of a doorway midpoint carry the boundary
flag used for cross-room context.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .floorplan import SceneError, TargetNode
from .geometry import DEFAULT_CAMERA_HEIGHT, PanoPose, quat_from_yaw
from .raycast import occluder_pack, segment_clear
from .shell import ShellScene, label_pose_room

KIND_TARGET = "target"
KIND_AUXILIARY = "auxiliary"

BOUNDARY_RADIUS = 0.3   # nodes this close to a doorway midpoint are boundary nodes
DOORSTEP_OFFSET = 0.15  # door-step auxiliaries sit this far into each room

DEFAULT_K_SAME = 3
DEFAULT_K_DOOR = 1


@dataclass
class GraphNode:
    node_id: int
    pose: PanoPose
    room: int
    kind: str = KIND_TARGET
    boundary: bool = False

    @property
    def xy(self) -> np.ndarray:
        return self.pose.position[:2]


@dataclass
class NodeGraph:
    nodes: dict                      # node_id -> GraphNode
    edges: set                       # {(lo_id, hi_id)}
    doorway_pairs: set = field(default_factory=set)      # {frozenset(room_a, room_b)}
    doorway_midpoints: list = field(default_factory=list)  # [(xy, frozenset rooms)]

    def neighbors(self, node_id: int) -> list:
        out = [b if a == node_id else a for a, b in self.edges if node_id in (a, b)]
        return sorted(out)

    def edge_length(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.nodes[a].pose.position
                                    - self.nodes[b].pose.position))

    def node_ids(self) -> list:
        return sorted(self.nodes)

    def copy(self) -> "NodeGraph":
        return NodeGraph({k: replace(v) for k, v in self.nodes.items()},
                         set(self.edges), set(self.doorway_pairs),
                         list(self.doorway_midpoints))

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.node_id, "position": n.pose.position.tolist(),
                 "room": n.room, "kind": n.kind, "boundary": n.boundary}
                for n in (self.nodes[i] for i in self.node_ids())
            ],
            "edges": sorted([list(e) for e in self.edges]),
        }


def _edge_key(a: int, b: int) -> tuple:
    return (a, b) if a < b else (b, a)


def _near_doorway(xy: np.ndarray, midpoints: list) -> bool:
    return any(np.linalg.norm(xy - m) <= BOUNDARY_RADIUS for m, _ in midpoints)


def build_node_graph(shell: ShellScene, targets: list, max_spacing: float = 1.0) -> NodeGraph:
    """Target nodes plus a door-step auxiliary pair per doorway, wired by
    line-of-sight adjacency."""
    plan = shell.plan
    midpoints = [(d.midpoint, frozenset(d.rooms())) for d in plan.doorways]
    nodes = {}
    for t in sorted(targets, key=lambda t: t.node_id):
        pose = PanoPose(t.position, quat_from_yaw(math.radians(t.yaw_deg)))
        room = label_pose_room(shell, pose)
        nodes[t.node_id] = GraphNode(t.node_id, pose, room, KIND_TARGET,
                                     _near_doorway(t.position[:2], midpoints))

    next_id = max(nodes, default=-1) + 1
    occ = occluder_pack(shell)
    step_pairs = []
    for d in plan.doorways:
        t2 = d.p1 - d.p0
        t2 = t2 / np.linalg.norm(t2)
        n2 = np.array([-t2[1], t2[0]])
        pair = []
        for side in (+1.0, -1.0):
            xy = d.midpoint + side * DOORSTEP_OFFSET * n2
            pos = np.array([xy[0], xy[1], DEFAULT_CAMERA_HEIGHT])
            room = plan.label_point(xy)
            if room not in d.rooms():
                raise SceneError(
                    f"door step at {tuple(np.round(xy, 3))} fell into room {room}, "
                    f"expected one of {d.rooms()}")
            nodes[next_id] = GraphNode(next_id, PanoPose(pos), room,
                                       KIND_AUXILIARY, True)
            pair.append(next_id)
            next_id += 1
        step_pairs.append(tuple(pair))

    edges = set()
    ids = sorted(nodes)
    cap = 2.0 * max_spacing
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            na, nb = nodes[a], nodes[b]
            if na.room != nb.room:
                continue
            if np.linalg.norm(na.pose.position - nb.pose.position) > cap:
                continue
            if segment_clear(na.pose.position, nb.pose.position, occ):
                edges.add(_edge_key(a, b))
    for a, b in step_pairs:
        edges.add(_edge_key(a, b))

    graph = NodeGraph(nodes, edges, {fs for _, fs in midpoints}, midpoints)
    _connect_room_components(graph, occ)
    return graph


def _connect_room_components(graph: NodeGraph, occ) -> None:
    """Add shortest line-of-sight edges until each room's subgraph is connected."""
    rooms = sorted({n.room for n in graph.nodes.values()})
    for room in rooms:
        members = [i for i in graph.node_ids() if graph.nodes[i].room == room]
        while True:
            comps = _components(members, graph.edges)
            if len(comps) <= 1:
                break
            base = comps[0]
            candidates = []
            for other in comps[1:]:
                for a in base:
                    for b in other:
                        d = graph.edge_length(a, b)
                        candidates.append((d, a, b))
            candidates.sort()
            added = False
            for d, a, b in candidates:
                if segment_clear(graph.nodes[a].pose.position,
                                 graph.nodes[b].pose.position, occ):
                    graph.edges.add(_edge_key(a, b))
                    added = True
                    break
            if not added:
                # no clear pair (oddly shaped room): take the closest anyway
                _, a, b = candidates[0]
                graph.edges.add(_edge_key(a, b))


def _components(members: list, edges: set) -> list:
    member_set = set(members)
    seen = set()
    comps = []
    for start in sorted(members):
        if start in seen:
            continue
        comp = []
        stack = [start]
        seen.add(start)
        while stack:
            cur = stack.pop()
            comp.append(cur)
            for a, b in edges:
                nxt = None
                if a == cur and b in member_set:
                    nxt = b
                elif b == cur and a in member_set:
                    nxt = a
                if nxt is not None and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        comps.append(sorted(comp))
    return comps


def insert_auxiliary_nodes(graph: NodeGraph, shell: ShellScene,
                           max_spacing: float = 1.0,
                           allow_any_spacing: bool = False) -> NodeGraph:
    """Subdivide every edge strictly longer than max_spacing with equally
    spaced auxiliary nodes. Idempotent."""
    if not allow_any_spacing and not (0.5 <= max_spacing <= 1.5):
        raise ValueError(f"max_spacing {max_spacing} outside [0.5, 1.5] "
                         "(pass allow_any_spacing to override)")
    out = graph.copy()
    midpoints = [(d.midpoint, frozenset(d.rooms())) for d in shell.plan.doorways]
    next_id = max(out.nodes) + 1
    for a, b in sorted(graph.edges):
        length = graph.edge_length(a, b)
        n_new = math.ceil(length / max_spacing) - 1 if length > max_spacing else 0
        if n_new <= 0:
            continue
        out.edges.discard(_edge_key(a, b))
        pa = graph.nodes[a].pose.position
        pb = graph.nodes[b].pose.position
        chain = [a]
        for k in range(1, n_new + 1):
            pos = pa + (pb - pa) * (k / (n_new + 1))
            room = shell.plan.label_point(pos[:2])
            out.nodes[next_id] = GraphNode(
                next_id, PanoPose(pos), room, KIND_AUXILIARY,
                _near_doorway(pos[:2], midpoints))
            chain.append(next_id)
            next_id += 1
        chain.append(b)
        for u, v in zip(chain, chain[1:]):
            out.edges.add(_edge_key(u, v))
    return out


# ---------------------------------------------------------------------------
# Path queries
# ---------------------------------------------------------------------------

def _dijkstra(graph: NodeGraph, source: int) -> dict:
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, cur = heapq.heappop(heap)
        if d > dist.get(cur, np.inf):
            continue
        for nxt in graph.neighbors(cur):
            nd = d + graph.edge_length(cur, nxt)
            if nd < dist.get(nxt, np.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return dist


def select_start_node(graph: NodeGraph, targets: set) -> int:
    """Node with the lowest mean shortest-path distance to all targets;
    ties break to the lowest node id."""
    targets = set(targets)
    if not targets:
        raise ValueError("no targets given")
    missing = targets - set(graph.nodes)
    if missing:
        raise ValueError(f"targets not in graph: {sorted(missing)}")
    all_ids = graph.node_ids()
    reach = _dijkstra(graph, all_ids[0])
    if set(reach) != set(all_ids):
        raise ValueError("node graph is disconnected")
    total = {i: 0.0 for i in all_ids}
    for t in sorted(targets):
        dist = _dijkstra(graph, t)
        for i in all_ids:
            total[i] += dist[i]
    return min(all_ids, key=lambda i: (total[i] / len(targets), i))


def bfs_order(graph: NodeGraph, start: int) -> list:
    """Deterministic breadth-first generation order over navigation edges."""
    order = [start]
    seen = {start}
    queue = [start]
    while queue:
        cur = queue.pop(0)
        for nxt in graph.neighbors(cur):
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order


def select_context(graph: NodeGraph, node_id: int, generated: set,
                   k_same: int = DEFAULT_K_SAME, k_door: int = DEFAULT_K_DOOR) -> list:
    """Bounded context: the node itself, then the nearest generated same-room
    nodes, then generated boundary nodes of doorway-adjacent rooms."""
    node = graph.nodes[node_id]
    generated = {g for g in generated if g != node_id and g in graph.nodes}

    def dist(other_id):
        return float(np.linalg.norm(graph.nodes[other_id].pose.position
                                    - node.pose.position))

    same = sorted((g for g in generated if graph.nodes[g].room == node.room),
                  key=lambda g: (dist(g), g))[:k_same]
    door = sorted(
        (g for g in generated
         if graph.nodes[g].boundary
         and graph.nodes[g].room != node.room
         and frozenset((graph.nodes[g].room, node.room)) in graph.doorway_pairs),
        key=lambda g: (dist(g), g))[:k_door]
    return [node_id] + same + door
