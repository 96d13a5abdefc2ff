"""Floorplan model and the scene file (JSON) it round-trips through.

A scene is a set of labeled 2D room polygons (meters), doorway cut-outs on
shared wall edges, a wall height, and the target panorama nodes for a tour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import LineString, Point, Polygon

_TOL = 1e-9


class SceneError(ValueError):
    """Invalid floorplan, doorway, or scene-file input."""


@dataclass
class Room:
    room_id: int
    polygon: np.ndarray  # (N, 2) vertices, CCW, no closing duplicate
    label: str = ""

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
            raise SceneError(f"room {self.room_id}: polygon needs >= 3 2D vertices")
        # normalize to counter-clockwise so wall extrusion is consistent
        if _signed_area(poly) < 0:
            poly = poly[::-1].copy()
        self.polygon = poly

    @property
    def shape(self) -> Polygon:
        return Polygon(self.polygon)


@dataclass
class Doorway:
    room_a: int
    room_b: int
    p0: np.ndarray  # (2,) segment endpoint, meters
    p1: np.ndarray
    height: float  # opening height above the floor

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=np.float64).reshape(2)
        self.p1 = np.asarray(self.p1, dtype=np.float64).reshape(2)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.p0 + self.p1)

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def rooms(self) -> tuple:
        return (self.room_a, self.room_b)


@dataclass
class TargetNode:
    node_id: int
    position: np.ndarray  # (3,) meters
    yaw_deg: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)


@dataclass
class FloorplanSpec:
    rooms: list
    doorways: list
    wall_height: float
    ceiling: bool = True

    def room_by_id(self, room_id: int) -> Room:
        for r in self.rooms:
            if r.room_id == room_id:
                return r
        raise SceneError(f"unknown room id {room_id}")

    def doorway_pairs(self) -> set:
        return {frozenset((d.room_a, d.room_b)) for d in self.doorways}

    def validate(self) -> None:
        if self.wall_height <= 0:
            raise SceneError("wall_height must be positive")
        ids = [r.room_id for r in self.rooms]
        if len(set(ids)) != len(ids):
            raise SceneError(f"duplicate room ids: {sorted(ids)}")
        shapes = {}
        for r in self.rooms:
            s = r.shape
            if not s.is_valid or not s.is_simple:
                raise SceneError(f"room {r.room_id}: polygon is not simple")
            shapes[r.room_id] = s
        rids = sorted(shapes)
        for i, a in enumerate(rids):
            for b in rids[i + 1:]:
                inter = shapes[a].intersection(shapes[b])
                if inter.area > 1e-12:
                    raise SceneError(f"rooms {a} and {b} overlap (area {inter.area:.3g})")
        for k, d in enumerate(self.doorways):
            if d.width <= _TOL:
                raise SceneError(f"doorway {k}: degenerate (width {d.width:.3g})")
            if not (0 < d.height <= self.wall_height + _TOL):
                raise SceneError(f"doorway {k}: height {d.height} outside (0, wall_height]")
            for rid in (d.room_a, d.room_b):
                room = self.room_by_id(rid)
                if _edge_containing_segment(room.polygon, d.p0, d.p1) is None:
                    raise SceneError(
                        f"doorway {k}: segment not on a boundary edge of room {rid}")

    def label_point(self, xy) -> int:
        """Room containing the 2D point; boundary ties go to the lowest room id."""
        p = Point(float(xy[0]), float(xy[1]))
        for r in sorted(self.rooms, key=lambda r: r.room_id):
            if r.shape.covers(p):
                return r.room_id
        raise SceneError(f"point {tuple(np.round(np.asarray(xy, float), 4))} lies in no room")


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _edge_containing_segment(poly: np.ndarray, p0, p1, tol: float = 1e-6):
    """Index of the polygon edge whose segment contains [p0, p1], else None."""
    n = poly.shape[0]
    for i in range(n):
        edge = LineString([poly[i], poly[(i + 1) % n]])
        if edge.distance(Point(p0)) < tol and edge.distance(Point(p1)) < tol:
            return i
    return None


# ---------------------------------------------------------------------------
# Scene file (JSON)
# ---------------------------------------------------------------------------

def scene_to_dict(spec: FloorplanSpec, targets: list) -> dict:
    return {
        "wall_height": spec.wall_height,
        "ceiling": spec.ceiling,
        "rooms": [
            {"id": r.room_id, "label": r.label, "polygon": r.polygon.tolist()}
            for r in spec.rooms
        ],
        "doorways": [
            {"rooms": [d.room_a, d.room_b], "segment": [d.p0.tolist(), d.p1.tolist()],
             "height": d.height}
            for d in spec.doorways
        ],
        "nodes": [
            {"id": t.node_id, "position": t.position.tolist(), "yaw_deg": t.yaw_deg}
            for t in targets
        ],
    }


def scene_from_dict(data: dict) -> tuple:
    try:
        rooms = [Room(r["id"], np.asarray(r["polygon"]), r.get("label", ""))
                 for r in data["rooms"]]
        doorways = [Doorway(d["rooms"][0], d["rooms"][1],
                            np.asarray(d["segment"][0]), np.asarray(d["segment"][1]),
                            float(d["height"]))
                    for d in data.get("doorways", [])]
        spec = FloorplanSpec(rooms, doorways, float(data["wall_height"]),
                             bool(data["ceiling"]))
        targets = [TargetNode(n["id"], np.asarray(n["position"]),
                              float(n.get("yaw_deg", 0.0)))
                   for n in data.get("nodes", [])]
    except (KeyError, IndexError, TypeError) as e:
        raise SceneError(f"malformed scene data: {e}") from e
    spec.validate()
    tids = [t.node_id for t in targets]
    if len(set(tids)) != len(tids):
        raise SceneError(f"duplicate node ids: {sorted(tids)}")
    return spec, targets


def save_scene(path, spec: FloorplanSpec, targets: list) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(spec, targets), indent=2) + "\n")


def load_scene(path) -> tuple:
    p = Path(path)
    if not p.exists():
        raise SceneError(f"scene file not found: {p}")
    return scene_from_dict(json.loads(p.read_text()))
