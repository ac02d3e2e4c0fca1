"""File formats, image back-projection, point selection and run configuration."""

from pathlib import Path

from ..errors import InvalidArgumentError
from ..pointcloud import PointCloud
from .config import RunConfig, load_config, parse_config, profile_names
from .fast import SelectorConfig, fast_corners, select_points, to_gray
from .images import (
    CameraIntrinsics,
    back_project,
    depth_rgb_to_cloud,
    project,
    read_netpbm,
    valid_depth_mask,
    write_netpbm,
)
from .pcd import read_pcd, write_pcd
from .ply import UnknownPropertyWarning, read_ply, write_ply
from .trajectory import read_trajectory, read_transform, write_trajectory, write_transform


def read_cloud(path) -> PointCloud:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix == ".pcd":
        return read_pcd(path)
    raise InvalidArgumentError(f"unsupported cloud file extension {suffix!r} (expected .ply or .pcd)")


def write_cloud(cloud: PointCloud, path, binary: bool = True) -> None:
    """``binary`` applies to PLY only; PCD is always written as ascii."""
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        write_ply(cloud, path, binary=binary)
    elif suffix == ".pcd":
        write_pcd(cloud, path)
    else:
        raise InvalidArgumentError(f"unsupported cloud file extension {suffix!r} (expected .ply or .pcd)")


__all__ = [
    "CameraIntrinsics", "RunConfig", "SelectorConfig", "UnknownPropertyWarning",
    "back_project", "depth_rgb_to_cloud", "fast_corners", "load_config", "parse_config",
    "profile_names", "project", "read_cloud", "read_netpbm", "read_pcd", "read_ply",
    "read_trajectory", "read_transform", "select_points", "to_gray", "valid_depth_mask",
    "write_cloud", "write_netpbm", "write_pcd", "write_ply", "write_trajectory", "write_transform",
]
