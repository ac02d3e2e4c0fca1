"""Point clouds with per-point feature channels (color, intensity, semantics)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidArgumentError, SchemaMismatchError
from .se3 import Isometry, apply

CHANNEL_KINDS = ("color", "intensity", "semantic", "custom")
EXACT_DIAMETER_LIMIT = 2000


@dataclass(frozen=True)
class Channel:
    name: str
    dim: int
    kind: str = "custom"

    def __post_init__(self):
        if self.dim <= 0:
            raise InvalidArgumentError(f"channel {self.name!r} needs a positive dimension")
        if self.kind not in CHANNEL_KINDS:
            raise InvalidArgumentError(f"unknown channel kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature channels. An empty schema means geometry only."""

    channels: tuple[Channel, ...] = ()

    def __post_init__(self):
        channels = tuple(self.channels)
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"duplicate channel names in {names}")
        object.__setattr__(self, "channels", channels)

    @property
    def dim(self) -> int:
        return sum(c.dim for c in self.channels)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def __len__(self):
        return len(self.channels)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for c in self.channels:
            out.append(slice(start, start + c.dim))
            start += c.dim
        return out

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __str__(self):
        if not self.channels:
            return "[geometric]"
        return "[" + ", ".join(f"{c.name}:{c.kind}/{c.dim}" for c in self.channels) + "]"


GEOMETRIC = FeatureSchema()


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Positions ``(N, 3)`` and features ``(N, D)`` under a schema.

    Arrays are copied and frozen on construction. Only the shape agreement
    between features and schema is enforced here; value-level invariants are
    reported by :func:`validate`.
    """

    positions: np.ndarray
    features: np.ndarray | None = None
    schema: FeatureSchema = field(default_factory=FeatureSchema)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        feats = self.features
        if feats is None:
            feats = np.zeros((len(pos), self.schema.dim))
        feats = np.array(feats, dtype=float)
        if feats.ndim == 1:
            feats = feats.reshape(len(pos), -1) if len(pos) else np.zeros((0, self.schema.dim))
        if feats.ndim != 2 or feats.shape[0] != len(pos):
            raise InvalidArgumentError(f"features shape {feats.shape} does not match {len(pos)} points")
        if feats.shape[1] != self.schema.dim:
            raise InvalidArgumentError(
                f"feature width {feats.shape[1]} does not match schema {self.schema} (dim {self.schema.dim})"
            )
        pos.flags.writeable = False
        feats.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feats)

    def __len__(self):
        return len(self.positions)

    def channel(self, name: str) -> np.ndarray:
        i = self.schema.index(name)
        return self.features[:, self.schema.slices()[i]]

    def select_channels(self, names: Iterable[str] | None) -> "PointCloud":
        """Keep only the named channels, in the order given.

        ``None`` keeps all, ``[]`` drops all.
        """
        if names is None:
            return self
        names = list(names)
        missing = set(names) - set(self.schema.names)
        if missing:
            raise InvalidArgumentError(f"cloud has no channel(s) {sorted(missing)}")
        keep = [self.schema.names.index(n) for n in names]
        slices = self.schema.slices()
        cols = [self.features[:, slices[i]] for i in keep]
        feats = np.concatenate(cols, axis=1) if cols else np.zeros((len(self), 0))
        schema = FeatureSchema(tuple(self.schema.channels[i] for i in keep))
        return PointCloud(self.positions, feats, schema)

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.positions[idx], self.features[idx], self.schema)


def transform_cloud(T: Isometry, cloud: PointCloud) -> PointCloud:
    return PointCloud(apply(T, cloud.positions), cloud.features, cloud.schema)


def diameter(cloud: PointCloud | np.ndarray) -> float:
    """Largest pairwise distance.

    Exact for up to 2000 points. Larger clouds return the bounding-box
    diagonal, which is an upper bound.
    """
    P = cloud.positions if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = len(P)
    if n < 2:
        return 0.0
    if n > EXACT_DIAMETER_LIMIT:
        return float(np.linalg.norm(P.max(axis=0) - P.min(axis=0)))
    best = 0.0
    block = 512
    for s in range(0, n, block):
        d = P[s : s + block, None, :] - P[None, :, :]
        best = max(best, float(np.einsum("ijk,ijk->ij", d, d).max()))
    return float(np.sqrt(best))


def validate(cloud: PointCloud, tol: float = 1e-6) -> list[str]:
    """Return a list of invariant violations; an empty list means the cloud is valid."""
    problems = []
    bad = np.flatnonzero(~np.all(np.isfinite(cloud.positions), axis=1))
    for i in bad:
        problems.append(f"row {i}: non-finite position")
    bad = np.flatnonzero(~np.all(np.isfinite(cloud.features), axis=1))
    for i in bad:
        problems.append(f"row {i}: non-finite feature")
    for ch, sl in zip(cloud.schema.channels, cloud.schema.slices()):
        block = cloud.features[:, sl]
        if ch.kind == "color":
            rows = np.flatnonzero(np.any((block < 0.0) | (block > 1.0), axis=1))
            for i in rows:
                problems.append(f"row {i}: color channel {ch.name!r} outside [0, 1]")
        elif ch.kind == "semantic":
            neg = np.any(block < -tol, axis=1)
            off = np.abs(block.sum(axis=1) - 1.0) > tol
            for i in np.flatnonzero(neg | off):
                problems.append(
                    f"row {i}: semantic channel {ch.name!r} is not a probability vector "
                    f"(sum {block[i].sum():.6g})"
                )
    return problems


def check_same_schema(a: PointCloud, b: PointCloud) -> None:
    if a.schema != b.schema:
        raise SchemaMismatchError(a.schema, b.schema)
