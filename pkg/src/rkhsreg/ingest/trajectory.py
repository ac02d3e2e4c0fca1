"""TUM and KITTI trajectory text formats.

TUM: ``timestamp tx ty tz qx qy qz qw`` per line, ``#`` comments allowed.
KITTI: the 12 row-major entries of the upper 3x4 pose matrix per line.
Pose values are written with 12 significant digits, timestamps with the
shortest representation that round-trips.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..se3 import Isometry, quaternion_to_rotation, rotation_to_quaternion

FORMATS = ("tum", "kitti")
QUATERNION_NORM_TOL = 1e-3


def _num(x: float) -> str:
    # +0.0 turns a negative zero into "0"
    return "%.12g" % (float(x) + 0.0)


def format_timestamp(t: float) -> str:
    return np.format_float_positional(float(t), trim="-")


def kitti_line(T: Isometry) -> str:
    return " ".join(_num(v) for v in T.matrix[:3].ravel())


def tum_line(t: float, T: Isometry) -> str:
    q = rotation_to_quaternion(T.rotation)
    vals = [*T.translation, *q]
    return format_timestamp(t) + " " + " ".join(_num(v) for v in vals)


def _floats(tokens, lineno, path):
    try:
        return np.array([float(t) for t in tokens])
    except ValueError:
        raise ParseError(f"non-numeric value in {' '.join(tokens)!r}", lineno, path) from None


def _pose_from_values(vals, lineno, path) -> Isometry:
    M = np.eye(4)
    M[:3] = vals[:12].reshape(3, 4)
    if len(vals) == 16 and not np.allclose(vals[12:], [0, 0, 0, 1]):
        raise ParseError("last row of a 4x4 transform must be 0 0 0 1", lineno, path)
    try:
        return Isometry.from_matrix(M)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), lineno, path) from None


def parse_tum_line(line: str, lineno=None, path=None):
    tok = line.split()
    if len(tok) != 8:
        raise ParseError(f"TUM pose needs 8 columns, found {len(tok)}", lineno, path)
    vals = _floats(tok, lineno, path)
    q = vals[4:]
    n = np.linalg.norm(q)
    if abs(n - 1.0) > QUATERNION_NORM_TOL:
        raise ParseError(f"quaternion norm {n:.6g} is not 1", lineno, path)
    return float(vals[0]), Isometry(quaternion_to_rotation(q / n), vals[1:4])


def parse_kitti_line(line: str, lineno=None, path=None) -> Isometry:
    tok = line.split()
    if len(tok) != 12:
        raise ParseError(f"KITTI pose needs 12 columns, found {len(tok)}", lineno, path)
    return _pose_from_values(_floats(tok, lineno, path), lineno, path)


def read_trajectory(path, fmt: str) -> list[tuple[float | None, Isometry]]:
    """Return ``(timestamp, pose)`` pairs; KITTI timestamps are ``None``."""
    if fmt not in FORMATS:
        raise InvalidArgumentError(f"unknown trajectory format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    out = []
    for lineno, raw in enumerate(path.read_text(encoding="ascii", errors="replace").splitlines(), start=1):
        line = raw.strip()
        if not line or (fmt == "tum" and line.startswith("#")):
            continue
        if fmt == "tum":
            out.append(parse_tum_line(line, lineno, path))
        else:
            out.append((None, parse_kitti_line(line, lineno, path)))
    return out


def write_trajectory(path, poses, fmt: str, timestamps=None) -> None:
    """Write a list of :class:`Isometry`. TUM needs ``timestamps`` of equal length."""
    if fmt not in FORMATS:
        raise InvalidArgumentError(f"unknown trajectory format {fmt!r}; expected one of {FORMATS}")
    poses = list(poses)
    if fmt == "tum":
        if timestamps is None or len(timestamps) != len(poses):
            raise InvalidArgumentError("TUM output needs one timestamp per pose")
        lines = [tum_line(t, T) for t, T in zip(timestamps, poses)]
    else:
        lines = [kitti_line(T) for T in poses]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="ascii")


def read_transform(path) -> Isometry:
    """A single transform: one line of 12 (KITTI) or 16 (full 4x4) values."""
    path = Path(path)
    found = None
    for lineno, raw in enumerate(path.read_text(encoding="ascii", errors="replace").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if found is not None:
            raise ParseError("expected a single transform line", lineno, path)
        tok = line.split()
        if len(tok) not in (12, 16):
            raise ParseError(f"transform needs 12 or 16 values, found {len(tok)}", lineno, path)
        found = _pose_from_values(_floats(tok, lineno, path), lineno, path)
    if found is None:
        raise ParseError("no transform found", None, path)
    return found


def write_transform(path, T: Isometry) -> None:
    Path(path).write_text(kitti_line(T) + "\n", encoding="ascii")
