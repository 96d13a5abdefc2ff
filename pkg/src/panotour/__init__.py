"""panotour: node-based panoramic tour engine on floorplan shells with a
progressive splat memory."""

__version__ = "0.1.0"

from .floorplan import Doorway, FloorplanSpec, Room, TargetNode
from .geometry import PanoPose
from .images import PanoImage
from .shell import ShellScene, SurfaceClass, build_shell, label_pose_room
from .splats import GaussianPrimitive

__all__ = [
    "Doorway", "FloorplanSpec", "GaussianPrimitive", "PanoImage", "PanoPose",
    "Room", "ShellScene", "SurfaceClass", "TargetNode", "build_shell",
    "label_pose_room", "__version__",
]
