"""Squared-exponential geometric kernel and tensor-product feature coefficients.

The feature coefficient ``c_ij`` is a product of one kernel per channel and
does not depend on the transform, so it is computed once per pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError
from .pointcloud import FeatureSchema

FORMS = ("squared_exponential", "linear")


@dataclass(frozen=True)
class ChannelKernel:
    sigma: float = 1.0
    lengthscale: float = 0.1
    form: str = "squared_exponential"

    def __post_init__(self):
        if self.form not in FORMS:
            raise InvalidArgumentError(f"unknown kernel form {self.form!r}; expected one of {FORMS}")
        if not self.sigma > 0:
            raise InvalidArgumentError(f"channel sigma must be positive, got {self.sigma}")
        if not self.lengthscale > 0:
            raise InvalidArgumentError(f"channel lengthscale must be positive, got {self.lengthscale}")

    def __call__(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Row-wise kernel between equally shaped ``(..., d)`` arrays."""
        s2 = self.sigma * self.sigma
        if self.form == "linear":
            return s2 * np.sum(u * v, axis=-1)
        d = u - v
        return s2 * np.exp(-np.sum(d * d, axis=-1) / (2.0 * self.lengthscale * self.lengthscale))


@dataclass(frozen=True)
class KernelParams:
    """Geometric amplitude/lengthscale plus one :class:`ChannelKernel` per schema channel."""

    sigma: float = 1.0
    lengthscale: float = 0.1
    per_channel: tuple[ChannelKernel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise InvalidArgumentError(f"lengthscale must be positive, got {self.lengthscale}")
        if not self.sigma > 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "per_channel", tuple(self.per_channel))

    def with_lengthscale(self, lengthscale: float) -> "KernelParams":
        return replace(self, lengthscale=lengthscale)

    def check_schema(self, schema: FeatureSchema) -> None:
        if len(self.per_channel) != len(schema):
            raise InvalidArgumentError(
                f"{len(self.per_channel)} channel kernels given for schema {schema} "
                f"with {len(schema)} channel(s)"
            )


def geometric_kernel(x, z, sigma: float = 1.0, lengthscale: float = 1.0):
    """``sigma^2 exp(-|x - z|^2 / (2 lengthscale^2))``; broadcasts over leading axes."""
    if not lengthscale > 0:
        raise InvalidArgumentError(f"lengthscale must be positive, got {lengthscale}")
    d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    out = sigma * sigma * np.exp(-np.sum(d * d, axis=-1) / (2.0 * lengthscale * lengthscale))
    return float(out) if np.ndim(out) == 0 else out


def pair_coefficients(U: np.ndarray, V: np.ndarray, schema: FeatureSchema, params: KernelParams) -> np.ndarray:
    """Coefficients for row pairs: ``U[k]`` against ``V[k]``.

    Leading axes broadcast, so ``U[:, None]`` against ``V[None]`` gives the
    dense matrix. With an empty schema every coefficient is exactly 1.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape[-1] != schema.dim or V.shape[-1] != schema.dim:
        raise InvalidArgumentError(f"feature rows {U.shape}, {V.shape} do not conform to schema {schema}")
    params.check_schema(schema)
    try:
        lead = np.broadcast_shapes(U.shape[:-1], V.shape[:-1])
    except ValueError as exc:
        raise InvalidArgumentError(f"feature row shapes {U.shape}, {V.shape} do not broadcast") from exc
    c = np.ones(lead)
    for kern, sl in zip(params.per_channel, schema.slices()):
        c = c * kern(U[..., sl], V[..., sl])
    return c


def feature_coefficient(u, v, schema: FeatureSchema, params: KernelParams) -> float:
    """``c_ij`` for a single pair of feature rows."""
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    return float(pair_coefficients(u, v, schema, params))


def coefficient_matrix_row(u, V, schema: FeatureSchema, params: KernelParams, c_min: float = 0.0):
    """Sparse row of coefficients of ``u`` against every row of ``V``.

    Returns ``(j, c)`` arrays holding the entries with ``c > c_min``;
    ``c_min = 0`` keeps every entry, including exact zeros.
    """
    if not 0.0 <= c_min < 1.0:
        raise InvalidArgumentError(f"c_min must lie in [0, 1), got {c_min}")
    V = np.asarray(V, dtype=float).reshape(-1, schema.dim)
    u = np.broadcast_to(np.asarray(u, dtype=float).reshape(1, -1), V.shape)
    c = pair_coefficients(u, V, schema, params)
    if c_min == 0.0:
        return np.arange(len(V)), c
    keep = np.flatnonzero(c > c_min)
    return keep, c[keep]
