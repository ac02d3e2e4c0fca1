import warnings

import numpy as np
import pytest

from rkhsreg.errors import InvalidArgumentError, ParseError
from rkhsreg.ingest import UnknownPropertyWarning, read_cloud, read_pcd, read_ply, write_cloud, write_pcd, write_ply
from rkhsreg.pointcloud import Channel, FeatureSchema, PointCloud

from .conftest import COLOR, LABELED

INTENSITY = FeatureSchema((Channel("intensity", 1, "intensity"),))


def _labeled(rng, n=50):
    P = rng.normal(size=(n, 3)) * 10
    C = rng.uniform(size=(n, 3))
    S = rng.dirichlet(np.ones(4), size=n)
    return PointCloud(P, np.hstack([C, S]), LABELED)


def test_binary_ply_round_trip_is_exact(rng, tmp_path):
    # [DERIVED] round-trip oracle
    c = _labeled(rng)
    write_ply(c, tmp_path / "a.ply")
    back = read_ply(tmp_path / "a.ply")
    assert back.schema == LABELED
    assert np.array_equal(back.positions, c.positions)
    assert np.abs(back.features - c.features).max() <= 1e-6


def test_ascii_ply_round_trip(rng, tmp_path):
    # [DERIVED]
    c = _labeled(rng)
    write_ply(c, tmp_path / "a.ply", binary=False)
    back = read_ply(tmp_path / "a.ply")
    assert np.array_equal(back.positions, c.positions)
    assert np.abs(back.features - c.features).max() <= 1e-6


def test_ply_uchar_colors_are_normalized(tmp_path):
    # [TRIVIAL]
    (tmp_path / "c.ply").write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
        "0 0 0 255 0 51\n1 2 3 0 255 102\n"
    )
    c = read_ply(tmp_path / "c.ply")
    assert c.schema == COLOR
    assert np.allclose(c.features, [[1, 0, 0.2], [0, 1, 0.4]])


def test_big_endian_binary_with_faces(tmp_path):
    # [DERIVED] hand-packed bytes; a trailing face element is ignored
    pts = np.array([(1.5, -2.0, 3.25), (0.0, 1.0, 2.0)], dtype=">f4")
    faces = b"\x03" + np.array([0, 1, 1], dtype=">i4").tobytes()
    head = (
        "ply\nformat binary_big_endian 1.0\ncomment test\nelement vertex 2\nproperty float x\n"
        "property float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
    ).encode()
    (tmp_path / "b.ply").write_bytes(head + pts.tobytes() + faces)
    c = read_ply(tmp_path / "b.ply")
    assert np.array_equal(c.positions, pts.astype(float))


def test_empty_vertex_ply(tmp_path):
    # [TRIVIAL]
    for binary in (True, False):
        write_ply(PointCloud(np.zeros((0, 3)), None, COLOR), tmp_path / "e.ply", binary=binary)
        c = read_ply(tmp_path / "e.ply")
        assert len(c) == 0 and c.schema == COLOR


def test_malformed_header_reports_line(tmp_path):
    # [TRIVIAL]
    (tmp_path / "m.ply").write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty flot x\nend_header\n0\n")
    with pytest.raises(ParseError) as err:
        read_ply(tmp_path / "m.ply")
    assert err.value.line == 4 and ":4:" in str(err.value)


def test_ply_trailing_data_rejected(tmp_path):
    # [TRIVIAL]
    body = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
    (tmp_path / "t.ply").write_text(body + "1 2 3\n4 5 6\n")
    with pytest.raises(ParseError) as err:
        read_ply(tmp_path / "t.ply")
    assert err.value.line == 9
    c = PointCloud(np.ones((2, 3)))
    write_ply(c, tmp_path / "t2.ply")
    with open(tmp_path / "t2.ply", "ab") as fh:
        fh.write(b"\x00")
    with pytest.raises(ParseError):
        read_ply(tmp_path / "t2.ply")


def test_ply_unknown_property_warns(tmp_path):
    # [TRIVIAL]
    (tmp_path / "u.ply").write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
        "property float nx\nend_header\n1 2 3 0.5\n"
    )
    with pytest.warns(UnknownPropertyWarning):
        c = read_ply(tmp_path / "u.ply")
    assert c.features.shape == (1, 0)


def test_pcd_round_trip(rng, tmp_path):
    # [DERIVED] packed rgb is 8 bits per channel
    n = 40
    C = rng.integers(0, 256, size=(n, 3)) / 255.0
    schema = FeatureSchema((Channel("color", 3, "color"), Channel("intensity", 1, "intensity")))
    c = PointCloud(rng.normal(size=(n, 3)), np.hstack([C, rng.uniform(size=(n, 1))]), schema)
    write_pcd(c, tmp_path / "a.pcd")
    back = read_pcd(tmp_path / "a.pcd")
    assert back.schema == schema
    assert np.array_equal(back.positions, c.positions)
    assert np.abs(back.features - c.features).max() <= 1e-6


def test_pcd_errors(tmp_path):
    # [TRIVIAL]
    base = "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n"
    (tmp_path / "a.pcd").write_text(base + "1 2 3\n4 5\n")
    with pytest.raises(ParseError) as err:
        read_pcd(tmp_path / "a.pcd")
    assert err.value.line == 11
    (tmp_path / "b.pcd").write_text(base + "1 2 3\n4 5 6\n7 8 9\n")
    with pytest.raises(ParseError):
        read_pcd(tmp_path / "b.pcd")
    (tmp_path / "c.pcd").write_text(base.replace("DATA ascii", "DATA binary") + "")
    with pytest.raises(ParseError):
        read_pcd(tmp_path / "c.pcd")


def test_dispatch_by_extension(rng, tmp_path):
    # [TRIVIAL]
    c = PointCloud(rng.normal(size=(5, 3)), rng.uniform(size=(5, 1)), INTENSITY)
    for name in ("x.ply", "x.pcd"):
        write_cloud(c, tmp_path / name)
        assert np.array_equal(read_cloud(tmp_path / name).positions, c.positions)
    with pytest.raises(InvalidArgumentError):
        write_cloud(c, tmp_path / "x.xyz")
    with pytest.raises(InvalidArgumentError):
        read_cloud(tmp_path / "x.xyz")


def test_custom_channel_has_no_file_form(rng, tmp_path):
    # [TRIVIAL]
    schema = FeatureSchema((Channel("normal", 3, "custom"),))
    c = PointCloud(np.zeros((1, 3)), np.zeros((1, 3)), schema)
    with pytest.raises(InvalidArgumentError):
        write_ply(c, tmp_path / "n.ply")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        write_ply(PointCloud(np.zeros((1, 3))), tmp_path / "g.ply")
        read_ply(tmp_path / "g.ply")
