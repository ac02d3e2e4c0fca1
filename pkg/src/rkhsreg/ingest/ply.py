"""PLY reader/writer for vertex clouds.

Recognized vertex properties: ``x y z``, ``red green blue``, ``intensity`` and
``semantic_0 ... semantic_{K-1}``. Integer color properties are 8-bit and get
divided by 255; float colors are taken as already normalized. Anything else is
skipped with a warning.
"""

from __future__ import annotations

import re
import warnings
from pathlib import Path

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..pointcloud import Channel, FeatureSchema, PointCloud

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
FORMATS = {"ascii": None, "binary_little_endian": "<", "binary_big_endian": ">"}
_SEMANTIC = re.compile(r"^semantic_(\d+)$")


class UnknownPropertyWarning(UserWarning):
    pass


class _Element:
    def __init__(self, name, count, line):
        self.name = name
        self.count = count
        self.line = line
        self.props: list[tuple[str, str]] = []
        self.has_list = False


def _parse_header(fh, path):
    elements: list[_Element] = []
    fmt = None
    lineno = 0

    def next_line():
        nonlocal lineno
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError("unexpected end of file inside header", lineno, path)
        try:
            return raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise ParseError("non-ascii bytes in header", lineno, path) from None

    if next_line() != "ply":
        raise ParseError("missing 'ply' magic", lineno, path)
    while True:
        line = next_line()
        if not line or line.startswith(("comment", "obj_info")):
            continue
        tok = line.split()
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in FORMATS or tok[2] != "1.0":
                raise ParseError(f"bad format line {line!r}", lineno, path)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(f"bad element line {line!r}", lineno, path)
            elements.append(_Element(tok[1], int(tok[2]), lineno))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", lineno, path)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in PLY_TYPES or tok[3] not in PLY_TYPES:
                    raise ParseError(f"unknown list types in {line!r}", lineno, path)
                elements[-1].has_list = True
                elements[-1].props.append((tok[4], "list"))
            elif len(tok) == 3:
                if tok[1] not in PLY_TYPES:
                    raise ParseError(f"unknown property type {tok[1]!r}", lineno, path)
                elements[-1].props.append((tok[2], PLY_TYPES[tok[1]]))
            else:
                raise ParseError(f"bad property line {line!r}", lineno, path)
        else:
            raise ParseError(f"unexpected header keyword {tok[0]!r}", lineno, path)
    if fmt is None:
        raise ParseError("header has no format line", lineno, path)
    return fmt, elements, lineno


def _schema_from_props(names, dtypes, path):
    """Map vertex property names onto a schema plus column extractors."""
    for axis in "xyz":
        if axis not in names:
            raise ParseError(f"vertex element lacks property {axis!r}", None, path)
    used = {"x", "y", "z"}
    channels = []
    columns = []
    if all(c in names for c in ("red", "green", "blue")):
        scale = 255.0 if dtypes[names.index("red")][0] in "iu" else 1.0
        channels.append(Channel("color", 3, "color"))
        columns.append(([names.index(c) for c in ("red", "green", "blue")], scale))
        used |= {"red", "green", "blue"}
    if "intensity" in names:
        channels.append(Channel("intensity", 1, "intensity"))
        columns.append(([names.index("intensity")], 1.0))
        used.add("intensity")
    sem = {int(m.group(1)): n for n in names if (m := _SEMANTIC.match(n))}
    if sem:
        k = len(sem)
        if sorted(sem) != list(range(k)):
            raise ParseError(f"semantic properties must be semantic_0..semantic_{k - 1}", None, path)
        channels.append(Channel("semantic", k, "semantic"))
        columns.append(([names.index(sem[i]) for i in range(k)], 1.0))
        used |= set(sem.values())
    for n in names:
        if n not in used:
            warnings.warn(f"{path}: skipping unknown vertex property {n!r}", UnknownPropertyWarning, stacklevel=3)
    return FeatureSchema(tuple(channels)), columns


def _assemble(table: np.ndarray, names, dtypes, path) -> PointCloud:
    schema, columns = _schema_from_props(names, dtypes, path)
    pos = np.stack([table[:, names.index(a)] for a in "xyz"], axis=1) if len(table) else np.zeros((0, 3))
    feats = [table[:, idx] / scale for idx, scale in columns]
    F = np.concatenate(feats, axis=1) if feats and len(table) else np.zeros((len(table), schema.dim))
    return PointCloud(pos, F, schema)


def read_ply(path) -> PointCloud:
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _parse_header(fh, path)
        body = fh.read()
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise ParseError("no vertex element", None, path)
    if vertex.has_list:
        raise ParseError("list properties on vertices are not supported", vertex.line, path)
    names = [p[0] for p in vertex.props]
    dtypes = [p[1] for p in vertex.props]

    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").split("\n")
        cursor = 0
        table = None
        for el in elements:
            rows = []
            for _ in range(el.count):
                while cursor < len(lines) and not lines[cursor].strip():
                    cursor += 1
                if cursor >= len(lines):
                    raise ParseError(f"file ends inside element {el.name!r}", header_lines + cursor + 1, path)
                if el is vertex:
                    tok = lines[cursor].split()
                    if len(tok) != len(names):
                        raise ParseError(
                            f"expected {len(names)} values, found {len(tok)}", header_lines + cursor + 1, path
                        )
                    try:
                        rows.append([float(t) for t in tok])
                    except ValueError:
                        raise ParseError(f"non-numeric value in {lines[cursor]!r}",
                                         header_lines + cursor + 1, path) from None
                cursor += 1
            if el is vertex:
                table = np.array(rows, dtype=float).reshape(len(rows), len(names))
        for k in range(cursor, len(lines)):
            if lines[k].strip():
                raise ParseError("trailing data after last element", header_lines + k + 1, path)
        return _assemble(table, names, dtypes, path)

    order = FORMATS[fmt]
    offset = 0
    table = None
    for el in elements:
        if el.has_list:
            if el is not elements[-1] or table is None:
                raise ParseError(f"binary list element {el.name!r} before vertices is not supported", el.line, path)
            # faces and the like after the vertices: not needed
            return _assemble(table, names, dtypes, path)
        dt = np.dtype([(f"p{i}", order + t) for i, (_, t) in enumerate(el.props)])
        nbytes = dt.itemsize * el.count
        if offset + nbytes > len(body):
            raise ParseError(f"binary data truncated in element {el.name!r}", None, path)
        if el is vertex:
            rec = np.frombuffer(body, dtype=dt, count=el.count, offset=offset)
            table = np.stack([rec[f].astype(float) for f in dt.names], axis=1) if el.count else np.zeros((0, len(names)))
        offset += nbytes
    if offset != len(body):
        raise ParseError(f"{len(body) - offset} bytes of trailing data after last element", None, path)
    return _assemble(table, names, dtypes, path)


def _ply_columns(cloud: PointCloud):
    cols = [("x", "double", cloud.positions[:, 0]), ("y", "double", cloud.positions[:, 1]),
            ("z", "double", cloud.positions[:, 2])]
    for ch, sl in zip(cloud.schema.channels, cloud.schema.slices()):
        block = cloud.features[:, sl]
        if ch.kind == "color" and ch.dim == 3:
            names = ["red", "green", "blue"]
        elif ch.kind == "intensity" and ch.dim == 1:
            names = ["intensity"]
        elif ch.kind == "semantic":
            names = [f"semantic_{k}" for k in range(ch.dim)]
        else:
            raise InvalidArgumentError(f"channel {ch.name!r} ({ch.kind}/{ch.dim}) has no PLY representation")
        for k, n in enumerate(names):
            cols.append((n, "double", block[:, k]))
    return cols


def write_ply(cloud: PointCloud, path, binary: bool = True) -> None:
    cols = _ply_columns(cloud)
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(cloud)}"]
    header += [f"property {t} {n}" for n, t, _ in cols]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(head)
        if binary:
            dt = np.dtype([(n, "<f8") for n, _, _ in cols])
            rec = np.empty(len(cloud), dtype=dt)
            for n, _, v in cols:
                rec[n] = v
            fh.write(rec.tobytes())
        else:
            table = np.stack([v for _, _, v in cols], axis=1) if len(cloud) else np.zeros((0, len(cols)))
            fh.write("".join(" ".join(repr(float(v)) for v in row) + "\n" for row in table).encode("ascii"))
