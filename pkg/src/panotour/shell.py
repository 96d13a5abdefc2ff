"""Extrude a floorplan into the triangle shell used for proxy rendering.

Every triangle carries a surface class, the room it belongs to, and a unit
normal facing the room interior. Doorway cut-outs become `OPENING` triangles
that never occlude rays. Shared walls produce one coincident quad per room
(each with its own interior-facing normal), so back-face culling resolves
which side a camera sees.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .floorplan import FloorplanSpec, SceneError, _edge_containing_segment
from .geometry import PanoPose

_TOL = 1e-9


class SurfaceClass(IntEnum):
    NONE = 0
    WALL = 1
    FLOOR = 2
    CEILING = 3
    OPENING = 4


@dataclass
class ShellScene:
    """Triangle soup of the extruded floorplan plus the plan it came from."""

    verts: np.ndarray    # (T, 3, 3) triangle vertices, meters
    cls: np.ndarray      # (T,) SurfaceClass codes
    room: np.ndarray     # (T,) room ids
    normal: np.ndarray   # (T, 3) unit normals facing the room interior
    plan: FloorplanSpec

    @property
    def bounds(self) -> np.ndarray:
        v = self.verts.reshape(-1, 3)
        return np.stack([v.min(axis=0), v.max(axis=0)])

    @property
    def occluder_mask(self) -> np.ndarray:
        return self.cls != SurfaceClass.OPENING

    def __len__(self) -> int:
        return self.verts.shape[0]


def triangulate_polygon(poly: np.ndarray) -> list:
    """Ear-clip a simple CCW polygon into index triples (n - 2 triangles)."""
    n = poly.shape[0]
    idx = list(range(n))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def point_in_tri(p, a, b, c):
        d0 = cross(a, b, p)
        d1 = cross(b, c, p)
        d2 = cross(c, a, p)
        return d0 >= -_TOL and d1 >= -_TOL and d2 >= -_TOL

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise SceneError("polygon triangulation failed (degenerate input)")
        clipped = False
        for k in range(len(idx)):
            i0 = idx[k - 1]
            i1 = idx[k]
            i2 = idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= _TOL:
                continue  # reflex or collinear corner, not an ear
            if any(point_in_tri(poly[j], a, b, c)
                   for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            del idx[k]
            clipped = True
            break
        if not clipped:
            raise SceneError("polygon triangulation failed (not simple?)")
    tris.append(tuple(idx))
    return tris


def build_shell(spec: FloorplanSpec) -> ShellScene:
    """Extrude rooms to walls/floor/ceiling triangles with doorway openings."""
    spec.validate()
    h = spec.wall_height
    verts, cls, room, normal = [], [], [], []

    def emit(tri3, c, rid, n):
        verts.append(np.asarray(tri3, dtype=np.float64))
        cls.append(int(c))
        room.append(int(rid))
        normal.append(np.asarray(n, dtype=np.float64))

    for r in sorted(spec.rooms, key=lambda r: r.room_id):
        poly = r.polygon
        for i0, i1, i2 in triangulate_polygon(poly):
            p0, p1, p2 = poly[i0], poly[i1], poly[i2]
            emit([[*p0, 0.0], [*p1, 0.0], [*p2, 0.0]],
                 SurfaceClass.FLOOR, r.room_id, [0.0, 0.0, 1.0])
            if spec.ceiling:
                emit([[*p0, h], [*p2, h], [*p1, h]],
                     SurfaceClass.CEILING, r.room_id, [0.0, 0.0, -1.0])

        n_edges = poly.shape[0]
        for e in range(n_edges):
            a, b = poly[e], poly[(e + 1) % n_edges]
            length = float(np.linalg.norm(b - a))
            if length <= _TOL:
                continue
            t2 = (b - a) / length
            n3 = np.array([-t2[1], t2[0], 0.0])  # interior is left of a CCW edge

            # doorway intervals [s0, s1] along this edge
            cuts = []
            for d in spec.doorways:
                if r.room_id not in (d.room_a, d.room_b):
                    continue
                if _edge_containing_segment(np.stack([a, b]), d.p0, d.p1) is None:
                    continue
                s0 = float(np.dot(d.p0 - a, t2))
                s1 = float(np.dot(d.p1 - a, t2))
                cuts.append((min(s0, s1), max(s0, s1), min(d.height, h)))
            cuts.sort()
            for (c0, c1, _), (d0, _, _) in zip(cuts, cuts[1:]):
                if d0 < c1 - _TOL:
                    raise SceneError(f"overlapping doorways on an edge of room {r.room_id}")

            def wall_quad(s0, s1, z0, z1, c):
                if s1 - s0 <= _TOL or z1 - z0 <= _TOL:
                    return
                pa = a + s0 * t2
                pb = a + s1 * t2
                A0 = [*pa, z0]
                B0 = [*pb, z0]
                B1 = [*pb, z1]
                A1 = [*pa, z1]
                emit([A0, B0, B1], c, r.room_id, n3)
                emit([A0, B1, A1], c, r.room_id, n3)

            s = 0.0
            for s0, s1, oh in cuts:
                wall_quad(s, s0, 0.0, h, SurfaceClass.WALL)
                wall_quad(s0, s1, 0.0, oh, SurfaceClass.OPENING)
                wall_quad(s0, s1, oh, h, SurfaceClass.WALL)  # lintel above the opening
                s = s1
            wall_quad(s, length, 0.0, h, SurfaceClass.WALL)

    return ShellScene(
        verts=np.stack(verts),
        cls=np.array(cls, dtype=np.int8),
        room=np.array(room, dtype=np.int32),
        normal=np.stack(normal),
        plan=spec,
    )


def label_pose_room(shell: ShellScene, pose: PanoPose) -> int:
    """Room containing the pose's horizontal position (boundary tie: lowest id)."""
    return shell.plan.label_point(pose.position[:2])


def label_point_room(shell: ShellScene, xy) -> int:
    return shell.plan.label_point(xy)
