import numpy as np
import pytest

from panotour.floorplan import Doorway, FloorplanSpec, Room
from panotour.geometry import PanoPose
from panotour.shell import build_shell


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def box_spec():
    """Single 4 x 4 m room, 3 m tall."""
    return FloorplanSpec(
        rooms=[Room(0, np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]))],
        doorways=[],
        wall_height=3.0,
    )


@pytest.fixture
def box_shell(box_spec):
    return build_shell(box_spec)


@pytest.fixture
def box_pose():
    """Camera at the center of the box room, 1.5 m up, looking along +x."""
    return PanoPose(np.array([2.0, 2.0, 1.5]))


@pytest.fixture
def tworoom_spec():
    """Two 4 x 4 rooms sharing the x = 4 wall, joined by a 1 m doorway."""
    return FloorplanSpec(
        rooms=[
            Room(0, np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])),
            Room(1, np.array([[4.0, 0.0], [8.0, 0.0], [8.0, 4.0], [4.0, 4.0]])),
        ],
        doorways=[Doorway(0, 1, np.array([4.0, 1.5]), np.array([4.0, 2.5]), height=3.0)],
        wall_height=3.0,
    )


@pytest.fixture
def tworoom_shell(tworoom_spec):
    return build_shell(tworoom_spec)
