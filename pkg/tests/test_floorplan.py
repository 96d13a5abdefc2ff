import json

import numpy as np
import pytest

from panotour.floorplan import (Doorway, FloorplanSpec, Room, SceneError,
                                TargetNode, load_scene, save_scene,
                                scene_from_dict, scene_to_dict)


class TestValidation:
    def test_valid_spec_passes(self, tworoom_spec):
        tworoom_spec.validate()

    def test_duplicate_room_ids(self):
        rooms = [Room(0, np.array([[0, 0], [1, 0], [1, 1], [0, 1]])),
                 Room(0, np.array([[2, 0], [3, 0], [3, 1], [2, 1]]))]
        with pytest.raises(SceneError, match="duplicate"):
            FloorplanSpec(rooms, [], 3.0).validate()

    def test_overlapping_rooms_rejected(self):
        rooms = [Room(0, np.array([[0, 0], [2, 0], [2, 2], [0, 2]])),
                 Room(1, np.array([[1, 1], [3, 1], [3, 3], [1, 3]]))]
        with pytest.raises(SceneError, match="overlap"):
            FloorplanSpec(rooms, [], 3.0).validate()

    def test_self_intersecting_polygon_rejected(self):
        bowtie = Room(0, np.array([[0, 0], [2, 2], [2, 0], [0, 2]]))
        with pytest.raises(SceneError, match="simple"):
            FloorplanSpec([bowtie], [], 3.0).validate()

    def test_degenerate_doorway_rejected(self, tworoom_spec):
        tworoom_spec.doorways[0].p1 = tworoom_spec.doorways[0].p0.copy()
        with pytest.raises(SceneError, match="degenerate"):
            tworoom_spec.validate()

    def test_doorway_off_shared_edge_rejected(self, tworoom_spec):
        tworoom_spec.doorways[0].p0 = np.array([2.0, 0.0])
        tworoom_spec.doorways[0].p1 = np.array([3.0, 0.0])
        with pytest.raises(SceneError, match="boundary edge"):
            tworoom_spec.validate()

    def test_doorway_height_bounds(self, tworoom_spec):
        tworoom_spec.doorways[0].height = 99.0
        with pytest.raises(SceneError, match="height"):
            tworoom_spec.validate()

    def test_polygon_normalized_ccw(self):
        cw = Room(0, np.array([[0, 1], [1, 1], [1, 0], [0, 0]], dtype=float))
        x, y = cw.polygon[:, 0], cw.polygon[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area > 0


class TestPointLabeling:
    def test_centroid(self, tworoom_spec):
        assert tworoom_spec.label_point([2.0, 2.0]) == 0
        assert tworoom_spec.label_point([6.0, 2.0]) == 1

    def test_shared_boundary_lowest_id(self, tworoom_spec):
        assert tworoom_spec.label_point([4.0, 2.0]) == 0

    def test_outside_raises(self, tworoom_spec):
        with pytest.raises(SceneError, match="no room"):
            tworoom_spec.label_point([-1.0, -1.0])


class TestSceneFile:
    def test_roundtrip(self, tmp_path, tworoom_spec):
        targets = [TargetNode(0, np.array([2.0, 2.0, 1.5])),
                   TargetNode(1, np.array([6.0, 2.0, 1.5]), yaw_deg=90.0)]
        path = tmp_path / "scene.json"
        save_scene(path, tworoom_spec, targets)
        spec2, targets2 = load_scene(path)
        assert scene_to_dict(spec2, targets2) == scene_to_dict(tworoom_spec, targets)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SceneError, match="not found"):
            load_scene(tmp_path / "nope.json")

    def test_malformed_data(self):
        with pytest.raises(SceneError, match="malformed"):
            scene_from_dict({"rooms": [{"id": 0}], "wall_height": 3})

    def test_duplicate_node_ids(self, tworoom_spec):
        data = scene_to_dict(tworoom_spec, [TargetNode(0, np.zeros(3) + 1),
                                            TargetNode(0, np.zeros(3) + 2)])
        with pytest.raises(SceneError, match="duplicate node"):
            scene_from_dict(data)
