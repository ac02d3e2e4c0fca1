import numpy as np
import pytest

from rkhsreg.pointcloud import Channel, FeatureSchema, PointCloud

COLOR = FeatureSchema((Channel("color", 3, "color"),))
LABELED = FeatureSchema((Channel("color", 3, "color"), Channel("semantic", 4, "semantic")))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(rng, n=100, schema=None, extent=1.0):
    P = rng.uniform(-0.5 * extent, 0.5 * extent, size=(n, 3))
    if schema is None or schema.dim == 0:
        return PointCloud(P)
    F = rng.uniform(0.0, 1.0, size=(n, schema.dim))
    return PointCloud(P, F, schema)


def brute_force_pairs(X, Z, T, params, radius, c_min):
    """Reference pair set by looping over every (i, j)."""
    from rkhsreg import se3
    from rkhsreg.kernels import feature_coefficient

    TZ = se3.apply(T, Z.positions)
    out = set()
    for i in range(len(X)):
        for j in range(len(Z)):
            d = X.positions[i] - TZ[j]
            if float(d @ d) > radius * radius:
                continue
            c = feature_coefficient(X.features[i], Z.features[j], X.schema, params) if X.schema.dim else 1.0
            if c > c_min:
                out.add((i, j))
    return out


# PASS/FAIL lines from the acceptance suite, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
