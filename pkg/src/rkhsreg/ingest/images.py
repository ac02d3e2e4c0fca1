"""Netpbm image I/O and depth + color back-projection.

Depth comes as a 16-bit PGM (``P5`` with maxval > 255, big-endian samples),
color as an 8-bit PPM (``P6``) or PGM for grayscale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..pointcloud import Channel, FeatureSchema, PointCloud
from .fast import SelectorConfig, select_points, to_gray  # noqa: F401


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 1.0
    max_depth: float = 55.0
    skip_top_rows: int = 100

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not self.max_depth > 0:
            raise InvalidArgumentError(f"max_depth must be positive, got {self.max_depth}")
        if not self.depth_scale > 0:
            raise InvalidArgumentError(f"depth_scale must be positive, got {self.depth_scale}")
        if self.skip_top_rows < 0:
            raise InvalidArgumentError(f"skip_top_rows must be >= 0, got {self.skip_top_rows}")


def _read_tokens(data: bytes, count: int, path):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.
    Returns the tokens, the offset just past the single whitespace after the
    last token, and the line number reached."""
    tokens = []
    pos = 0
    line = 1
    while len(tokens) < count:
        if pos >= len(data):
            raise ParseError("truncated netpbm header", line, path)
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            if ch == b"\n":
                line += 1
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos].decode("ascii", errors="replace"))
    if data[pos : pos + 1] == b"\n":
        line += 1
    return tokens, pos + 1, line


def read_netpbm(path) -> np.ndarray:
    """Read P2/P3/P5/P6. Returns ``(H, W)`` or ``(H, W, 3)`` uint8/uint16."""
    path = Path(path)
    data = path.read_bytes()
    magic = data[:2].decode("ascii", errors="replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ParseError(f"unsupported netpbm magic {magic!r}", 1, path)
    tokens, offset, line = _read_tokens(data[2:], 3, path)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ParseError(f"bad netpbm header values {tokens}", line, path) from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ParseError(f"bad netpbm header values {tokens}", line, path)
    channels = 3 if magic in ("P3", "P6") else 1
    shape = (height, width, channels) if channels == 3 else (height, width)
    n = width * height * channels
    dtype = np.uint8 if maxval < 256 else np.uint16
    if magic in ("P5", "P6"):
        sample = np.dtype(">u2") if maxval >= 256 else np.dtype("u1")
        body = data[offset:]
        if len(body) != n * sample.itemsize:
            raise ParseError(f"expected {n * sample.itemsize} bytes of pixel data, found {len(body)}", line, path)
        return np.frombuffer(body, dtype=sample).astype(dtype).reshape(shape)
    text = data[offset:].decode("ascii", errors="replace").split()
    if len(text) != n:
        raise ParseError(f"expected {n} samples, found {len(text)}", line, path)
    return np.array([int(t) for t in text], dtype=dtype).reshape(shape)


def write_netpbm(path, image: np.ndarray) -> None:
    """Binary PGM for ``(H, W)``, PPM for ``(H, W, 3)``; 16-bit when dtype is uint16."""
    img = np.asarray(image)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise InvalidArgumentError(f"cannot write image of shape {img.shape}")
    wide = img.dtype == np.uint16 or img.max(initial=0) > 255
    maxval = 65535 if wide else 255
    h, w = img.shape[:2]
    body = img.astype(">u2" if wide else "u1").tobytes()
    Path(path).write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode("ascii") + body)


def valid_depth_mask(depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    z = np.asarray(depth, dtype=float) * intr.depth_scale
    mask = np.isfinite(z) & (z > 0) & (z <= intr.max_depth)
    mask[: intr.skip_top_rows] = False
    return mask


def back_project(u, v, z, intr: CameraIntrinsics) -> np.ndarray:
    """Pinhole back-projection of pixel columns ``u``, rows ``v`` at depth ``z``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.stack([z * (u - intr.cx) / intr.fx, z * (v - intr.cy) / intr.fy, z], axis=-1)


def project(points, intr: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates ``(u, v)`` of camera-frame points."""
    P = np.asarray(points, dtype=float)
    return np.stack([intr.fx * P[..., 0] / P[..., 2] + intr.cx, intr.fy * P[..., 1] / P[..., 2] + intr.cy], axis=-1)


def depth_rgb_to_cloud(
    depth: np.ndarray,
    rgb: np.ndarray,
    intr: CameraIntrinsics,
    sel: SelectorConfig | None = None,
    semantics: np.ndarray | None = None,
) -> PointCloud:
    """Back-project selected pixels into a colored (optionally semantic) cloud.

    ``rgb`` may be ``(H, W, 3)`` (color channel) or ``(H, W)`` (intensity
    channel), 8-bit. ``semantics`` is an ``(H, W, K)`` class-probability image.
    With ``sel=None`` every valid-depth pixel is used.
    """
    depth = np.asarray(depth)
    rgb = np.asarray(rgb)
    if depth.shape != rgb.shape[:2]:
        raise InvalidArgumentError(f"depth {depth.shape} and color {rgb.shape[:2]} resolutions differ")
    if semantics is not None and np.asarray(semantics).shape[:2] != depth.shape:
        raise InvalidArgumentError(f"semantics {np.asarray(semantics).shape[:2]} and depth {depth.shape} differ")
    mask = valid_depth_mask(depth, intr)
    if sel is None:
        rows, cols = np.nonzero(mask)
    else:
        rows, cols = select_points(rgb, mask, sel)
    z = depth[rows, cols].astype(float) * intr.depth_scale
    pos = back_project(cols, rows, z, intr)

    channels, feats = [], []
    if rgb.ndim == 3:
        channels.append(Channel("color", 3, "color"))
        feats.append(rgb[rows, cols].astype(float) / 255.0)
    else:
        channels.append(Channel("intensity", 1, "intensity"))
        feats.append(rgb[rows, cols].astype(float)[:, None] / 255.0)
    if semantics is not None:
        sem = np.asarray(semantics, dtype=float)
        channels.append(Channel("semantic", sem.shape[2], "semantic"))
        feats.append(sem[rows, cols])
    return PointCloud(pos, np.concatenate(feats, axis=1), FeatureSchema(tuple(channels)))
