"""ASCII PCD reader/writer: ``FIELDS x y z [rgb] [intensity]``.

``rgb`` is the usual packed value: ``0x00RRGGBB`` reinterpreted as a float32.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..pointcloud import Channel, FeatureSchema, PointCloud
from .ply import UnknownPropertyWarning

_HEADER_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA")


def _unpack_rgb(values: np.ndarray, kind: str) -> np.ndarray:
    if kind == "F":
        packed = values.astype(np.float32).view(np.uint32)
    else:
        packed = values.astype(np.uint32)
    r = (packed >> 16) & 0xFF
    g = (packed >> 8) & 0xFF
    b = packed & 0xFF
    return np.stack([r, g, b], axis=1).astype(float) / 255.0


def _pack_rgb(colors: np.ndarray) -> np.ndarray:
    c = np.clip(np.rint(np.asarray(colors) * 255.0), 0, 255).astype(np.uint32)
    packed = (c[:, 0] << 16) | (c[:, 1] << 8) | c[:, 2]
    return packed.astype(np.uint32).view(np.float32)


def read_pcd(path) -> PointCloud:
    path = Path(path)
    lines = path.read_text(encoding="ascii", errors="replace").split("\n")
    header = {}
    lineno = 0
    while True:
        if lineno >= len(lines):
            raise ParseError("file ends before DATA line", lineno, path)
        line = lines[lineno].strip()
        lineno += 1
        if not line or line.startswith("#"):
            continue
        key, *rest = line.split()
        if key not in _HEADER_KEYS:
            raise ParseError(f"unknown header key {key!r}", lineno, path)
        header[key] = (rest, lineno)
        if key == "DATA":
            break
    for key in ("FIELDS", "POINTS", "DATA"):
        if key not in header:
            raise ParseError(f"header lacks {key}", lineno, path)
    if header["DATA"][0] != ["ascii"]:
        raise ParseError(f"only DATA ascii is supported, got {header['DATA'][0]}", header["DATA"][1], path)
    fields = header["FIELDS"][0]
    counts = [int(c) for c in header.get("COUNT", (["1"] * len(fields), 0))[0]]
    types = header.get("TYPE", (["F"] * len(fields), 0))[0]
    if len(counts) != len(fields) or len(types) != len(fields):
        raise ParseError("FIELDS, TYPE and COUNT disagree in length", header["FIELDS"][1], path)
    if any(c != 1 for c in counts):
        raise ParseError("multi-count fields are not supported", header["FIELDS"][1], path)
    try:
        npoints = int(header["POINTS"][0][0])
    except (ValueError, IndexError):
        raise ParseError("bad POINTS line", header["POINTS"][1], path) from None
    for axis in "xyz":
        if axis not in fields:
            raise ParseError(f"FIELDS lacks {axis!r}", header["FIELDS"][1], path)

    rows = []
    k = lineno
    while len(rows) < npoints:
        if k >= len(lines):
            raise ParseError(f"expected {npoints} points, found {len(rows)}", k, path)
        text = lines[k].strip()
        k += 1
        if not text:
            continue
        tok = text.split()
        if len(tok) != len(fields):
            raise ParseError(f"expected {len(fields)} values, found {len(tok)}", k, path)
        try:
            rows.append([float(t) for t in tok])
        except ValueError:
            raise ParseError(f"non-numeric value in {text!r}", k, path) from None
    for extra in range(k, len(lines)):
        if lines[extra].strip():
            raise ParseError("trailing data after last point", extra + 1, path)
    table = np.array(rows, dtype=float).reshape(npoints, len(fields))

    pos = np.stack([table[:, fields.index(a)] for a in "xyz"], axis=1)
    channels, feats = [], []
    for name in fields:
        if name in "xyz":
            continue
        col = table[:, fields.index(name)]
        if name in ("rgb", "rgba"):
            channels.append(Channel("color", 3, "color"))
            feats.append(_unpack_rgb(col, types[fields.index(name)]))
        elif name == "intensity":
            channels.append(Channel("intensity", 1, "intensity"))
            feats.append(col[:, None])
        else:
            warnings.warn(f"{path}: skipping unknown PCD field {name!r}", UnknownPropertyWarning, stacklevel=2)
    F = np.concatenate(feats, axis=1) if feats else np.zeros((npoints, 0))
    return PointCloud(pos, F, FeatureSchema(tuple(channels)))


def write_pcd(cloud: PointCloud, path) -> None:
    fields = ["x", "y", "z"]
    cols = [repr_col(cloud.positions[:, a]) for a in range(3)]
    for ch, sl in zip(cloud.schema.channels, cloud.schema.slices()):
        block = cloud.features[:, sl]
        if ch.kind == "color" and ch.dim == 3:
            fields.append("rgb")
            cols.append([repr(float(v)) for v in _pack_rgb(block)])
        elif ch.kind == "intensity" and ch.dim == 1:
            fields.append("intensity")
            cols.append(repr_col(block[:, 0]))
        else:
            raise InvalidArgumentError(f"channel {ch.name!r} ({ch.kind}/{ch.dim}) has no PCD representation")
    n = len(cloud)
    header = [
        "# .PCD v0.7 - Point Cloud Data file format",
        "VERSION 0.7",
        "FIELDS " + " ".join(fields),
        "SIZE " + " ".join("8" if f in "xyz" or f == "intensity" else "4" for f in fields),
        "TYPE " + " ".join("F" for _ in fields),
        "COUNT " + " ".join("1" for _ in fields),
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        "DATA ascii",
    ]
    body = [" ".join(vals) for vals in zip(*cols)] if n else []
    Path(path).write_text("\n".join(header + body) + "\n", encoding="ascii")


def repr_col(values) -> list[str]:
    return [repr(float(v)) for v in values]
