"""Sparse kernel double sum between two clouds, its gradient, and alignment scores.

For target cloud ``X``, source cloud ``Z`` and transform ``T`` the objective is

    F(T) = sum_ij c_ij * k(x_i, T z_j)

restricted to pairs within ``cutoff_multiplier * lengthscale`` of each other
and with ``c_ij > c_min``. Work is split into fixed-size blocks whose partial
results are reduced in block order, so results do not depend on the number of
worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import blocks, ordered_map
from .errors import InvalidArgumentError
from .kernels import KernelParams, pair_coefficients
from .pointcloud import PointCloud, check_same_schema, transform_cloud
from .se3 import Isometry, Twist, apply
from .spatial import HashGrid

DEFAULT_CUTOFF_MULTIPLIER = 3.0
DEFAULT_C_MIN = 1e-4
QUERY_BLOCK = 4096
PAIR_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class PairList:
    """Pruned ``(i, j, c_ij)`` entries of the double sum.

    ``i`` indexes the target ``X`` and ``j`` the source ``Z``. ``x`` caches
    ``X.positions[i]`` column-wise, shape ``(3, n)``. The transform the list was built at is kept so callers
    can decide when the list has gone stale.
    """

    i: np.ndarray
    j: np.ndarray
    c: np.ndarray
    x: np.ndarray
    built_at_lengthscale: float
    cutoff_radius: float
    c_min: float
    built_transform: Isometry
    unit_coefficients: bool = False

    def __post_init__(self):
        for name in ("i", "j", "c", "x"):
            getattr(self, name).flags.writeable = False

    def __len__(self):
        return len(self.i)

    @property
    def entries(self):
        return list(zip(self.i.tolist(), self.j.tolist(), self.c.tolist()))


@dataclass(frozen=True)
class AlignmentReport:
    value_F: float
    indicator: float
    pair_count: int


def _check_inputs(X: PointCloud, Z: PointCloud, params: KernelParams) -> None:
    check_same_schema(X, Z)
    params.check_schema(X.schema)


def build_pairs(
    X: PointCloud,
    Z: PointCloud,
    T: Isometry,
    params: KernelParams,
    cutoff_multiplier: float = DEFAULT_CUTOFF_MULTIPLIER,
    c_min: float = DEFAULT_C_MIN,
    threads: int = 1,
) -> PairList:
    """Find all pairs with ``|x_i - T z_j| <= cutoff_multiplier * lengthscale``
    and ``c_ij > c_min`` using a hash grid over ``X``."""
    if cutoff_multiplier < 1.0:
        raise InvalidArgumentError(f"cutoff_multiplier must be >= 1, got {cutoff_multiplier}")
    if not 0.0 <= c_min < 1.0:
        raise InvalidArgumentError(f"c_min must lie in [0, 1), got {c_min}")
    _check_inputs(X, Z, params)
    radius = cutoff_multiplier * params.lengthscale
    geometric_only = X.schema.dim == 0
    empty_i = np.zeros(0, dtype=np.int64)
    if len(X) == 0 or len(Z) == 0:
        return PairList(empty_i, empty_i.copy(), np.zeros(0), np.zeros((3, 0)),
                        params.lengthscale, radius, c_min, T, geometric_only)

    grid = HashGrid(X.positions, radius)
    Q = apply(T, Z.positions)

    def work(sl: slice):
        pi, qj, _ = grid.query(Q[sl], radius)
        qj = qj + sl.start
        if geometric_only:
            c = np.ones(len(pi))
        else:
            c = pair_coefficients(X.features[pi], Z.features[qj], X.schema, params)
            keep = c > c_min
            pi, qj, c = pi[keep], qj[keep], c[keep]
        return pi, qj, c

    parts = ordered_map(work, blocks(len(Z), QUERY_BLOCK), threads)
    i = np.concatenate([p[0] for p in parts])
    j = np.concatenate([p[1] for p in parts])
    c = np.concatenate([p[2] for p in parts])
    x = np.ascontiguousarray(X.positions[i].T)
    return PairList(i, j, c, x, params.lengthscale, radius, c_min, T, geometric_only)


def evaluate(
    pairs: PairList,
    Z: PointCloud,
    T: Isometry,
    params: KernelParams,
    with_gradient: bool = False,
    threads: int = 1,
):
    """Return ``(F, g_world)`` where ``g_world`` is the 6-vector ``(g_omega, g_v)``
    for a left perturbation ``exp(xi) T`` (``None`` unless requested)."""
    Qc = np.ascontiguousarray(apply(T, Z.positions).T)
    s2 = params.sigma * params.sigma
    neg_inv2l2 = -1.0 / (2.0 * params.lengthscale * params.lengthscale)
    invl2 = 1.0 / (params.lengthscale * params.lengthscale)
    unit_c = pairs.unit_coefficients

    def work(sl: slice):
        j = pairs.j[sl]
        x0, x1, x2 = pairs.x[0, sl], pairs.x[1, sl], pairs.x[2, sl]
        q0, q1, q2 = Qc[0][j], Qc[1][j], Qc[2][j]
        d0 = x0 - q0
        d1 = x1 - q1
        d2 = x2 - q2
        w = d0 * d0
        w += d1 * d1
        w += d2 * d2
        w *= neg_inv2l2
        np.exp(w, out=w)
        if s2 != 1.0:
            w *= s2
        if not unit_c:
            w *= pairs.c[sl]
        f = w.sum()
        if not with_gradient:
            return f, None
        gv = np.array([w @ d0, w @ d1, w @ d2])
        # q x (x - q) = q x x
        wq0, wq1, wq2 = w * q0, w * q1, w * q2
        gw = np.array([wq1 @ d2 - wq2 @ d1, wq2 @ d0 - wq0 @ d2, wq0 @ d1 - wq1 @ d0])
        return f, np.concatenate([gw, gv]) * invl2

    parts = ordered_map(work, blocks(len(pairs), PAIR_BLOCK), threads)
    if not parts:
        return 0.0, (np.zeros(6) if with_gradient else None)
    F = float(np.sum(np.array([p[0] for p in parts])))
    if not with_gradient:
        return F, None
    g = np.sum(np.stack([p[1] for p in parts]), axis=0)
    return F, g


def world_to_body_gradient(g_world: np.ndarray, T: Isometry) -> np.ndarray:
    """Map a left-perturbation gradient to the right-perturbation one (``Ad_T^T g``)."""
    R, t = T.rotation, T.translation
    gw, gv = g_world[:3], g_world[3:]
    return np.concatenate([R.T @ (gw - np.cross(t, gv)), R.T @ gv])


def inner_product(pairs: PairList, X: PointCloud, Z: PointCloud, T: Isometry, params: KernelParams,
                  threads: int = 1) -> float:
    """Pruned ``sum c_ij k(x_i, T z_j)``."""
    return evaluate(pairs, Z, T, params, threads=threads)[0]


def gradient(pairs: PairList, X: PointCloud, Z: PointCloud, T: Isometry, params: KernelParams,
             frame: str = "body", threads: int = 1) -> Twist:
    """Analytic gradient of the pruned objective as a twist ``(omega, v)``.

    ``frame="body"`` (default) is the derivative along ``T exp(eps xi)``, the
    update used by the solver. ``frame="world"`` is the derivative along
    ``exp(eps xi) T``: ``g_v = sum w (x_i - q_j)``, ``g_omega = sum w (q_j x x_i)``
    with ``w = c_ij k_ij / lengthscale^2`` and ``q_j = T z_j``.
    """
    _, g = evaluate(pairs, Z, T, params, with_gradient=True, threads=threads)
    if frame == "world":
        return Twist.from_vector(g)
    if frame != "body":
        raise InvalidArgumentError(f"frame must be 'body' or 'world', got {frame!r}")
    return Twist.from_vector(world_to_body_gradient(g, T))


def alignment_report(
    X: PointCloud,
    Z: PointCloud,
    T: Isometry,
    params: KernelParams,
    cutoff_multiplier: float = DEFAULT_CUTOFF_MULTIPLIER,
    c_min: float = DEFAULT_C_MIN,
    threads: int = 1,
) -> AlignmentReport:
    if len(X) == 0 or len(Z) == 0:
        raise InvalidArgumentError("indicator needs non-empty clouds")
    pairs = build_pairs(X, Z, T, params, cutoff_multiplier, c_min, threads)
    F = inner_product(pairs, X, Z, T, params, threads)
    return AlignmentReport(F, F / np.sqrt(len(X) * len(Z)), len(pairs))


def indicator(
    X: PointCloud,
    Z: PointCloud,
    T: Isometry,
    params: KernelParams,
    cutoff_multiplier: float = DEFAULT_CUTOFF_MULTIPLIER,
    c_min: float = DEFAULT_C_MIN,
    threads: int = 1,
) -> float:
    """Normalized alignment score ``F / sqrt(|X| |Z|)``."""
    return alignment_report(X, Z, T, params, cutoff_multiplier, c_min, threads).indicator


def dense_inner_product(A: PointCloud, B: PointCloud, params: KernelParams, block: int = 1024) -> float:
    """Unpruned ``sum_ij c_ij k(a_i, b_j)`` evaluated block by block."""
    _check_inputs(A, B, params)
    s2 = params.sigma * params.sigma
    inv2l2 = 1.0 / (2.0 * params.lengthscale * params.lengthscale)
    partials = []
    for sl in blocks(len(A), block):
        d = A.positions[sl, None, :] - B.positions[None, :, :]
        k = s2 * np.exp(-np.einsum("ijk,ijk->ij", d, d) * inv2l2)
        if A.schema.dim:
            k = k * pair_coefficients(A.features[sl, None, :], B.features[None, :, :], A.schema, params)
        partials.append(k.sum())
    return float(np.sum(partials)) if partials else 0.0


def exact_cosine(X: PointCloud, Z: PointCloud, T: Isometry, params: KernelParams) -> float:
    """Cosine of the angle between the two cloud functions, from full double sums."""
    TZ = transform_cloud(T, Z)
    nx2 = dense_inner_product(X, X, params)
    nz2 = dense_inner_product(Z, Z, params)
    if not (nx2 > 0 and nz2 > 0):
        raise InvalidArgumentError("cosine undefined for a zero-norm cloud function")
    return dense_inner_product(X, TZ, params) / np.sqrt(nx2 * nz2)
