"""Rigid-body transforms: SE(3) group elements and se(3) twists.

Twists are ordered ``(omega, v)``: rotational part first, then translational.
``exp`` and ``log`` map between the two, ``hat`` embeds a twist as a 4x4 matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

SMALL_ANGLE = 1e-8
# above this angle the rotation axis is read from the symmetric part
LARGE_ANGLE = 0.5 * np.pi
# rotations drifting further than this from orthonormal are projected back
ORTHO_DRIFT = 1e-7
ORTHO_REJECT = 1e-6


def skew(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def _project_rotation(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    P = U @ Vt
    if np.linalg.det(P) < 0:
        U[:, -1] *= -1
        P = U @ Vt
    return P


@dataclass(frozen=True)
class Twist:
    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float).reshape(3)
        v = np.array(self.v, dtype=float).reshape(3)
        omega.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_vector(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=float).reshape(6)
        return cls(xi[:3], xi[3:])

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def scaled(self, s: float) -> "Twist":
        return Twist(self.omega * s, self.v * s)

    def __repr__(self):
        return f"Twist(omega={self.omega.tolist()}, v={self.v.tolist()})"


@dataclass(frozen=True, eq=False)
class Isometry:
    """Rotation matrix plus translation vector, acting as ``p -> R p + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if R.shape != (3, 3) or t.size != 3:
            raise InvalidArgumentError(f"bad isometry shapes {R.shape}, {t.shape}")
        t = t.reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidArgumentError("isometry has non-finite entries")
        drift = np.linalg.norm(R.T @ R - np.eye(3))
        if drift > ORTHO_REJECT or np.linalg.det(R) <= 0:
            raise InvalidArgumentError(
                f"rotation is not a proper orthonormal matrix (drift {drift:.3g})"
            )
        if drift > ORTHO_DRIFT:
            R = _project_rotation(R)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Isometry":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M) -> "Isometry":
        M = np.asarray(M, dtype=float)
        if M.shape not in ((4, 4), (3, 4)):
            raise InvalidArgumentError(f"expected 3x4 or 4x4 matrix, got {M.shape}")
        return cls(M[:3, :3], M[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return compose(self, other)

    def inverse(self) -> "Isometry":
        return inverse(self)

    def apply(self, p) -> np.ndarray:
        return apply(self, p)

    def __repr__(self):
        return f"Isometry(matrix={self.matrix[:3].tolist()})"


def hat(xi) -> np.ndarray:
    """4x4 matrix form of a twist."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    H = np.zeros((4, 4))
    H[:3, :3] = skew(xi.omega)
    H[:3, 3] = xi.v
    return H


def vee(H) -> Twist:
    H = np.asarray(H, dtype=float)
    return Twist(np.array([H[2, 1], H[0, 2], H[1, 0]]), H[:3, 3].copy())


def _so3_coefficients(theta: float):
    """Return (A, B, C) = (sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    A = np.sin(theta) / theta
    half = np.sin(0.5 * theta) / theta
    B = 2.0 * half * half
    if theta < 1e-3:
        t2 = theta * theta
        C = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        C = (theta - np.sin(theta)) / theta**3
    return A, B, C


def exp(xi) -> Isometry:
    """Exponential map from a twist ``(omega, v)`` to a rigid transform."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    if not (np.all(np.isfinite(xi.omega)) and np.all(np.isfinite(xi.v))):
        raise InvalidArgumentError("twist has non-finite components")
    theta = float(np.linalg.norm(xi.omega))
    W = skew(xi.omega)
    W2 = W @ W
    if theta < SMALL_ANGLE:
        R = np.eye(3) + W + 0.5 * W2
        V = np.eye(3) + 0.5 * W + W2 / 6.0
    else:
        A, B, C = _so3_coefficients(theta)
        R = np.eye(3) + A * W + B * W2
        V = np.eye(3) + B * W + C * W2
    return Isometry(R, V @ xi.v)


def _rotation_log(R: np.ndarray) -> tuple[np.ndarray, float]:
    s_vec = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = float(np.linalg.norm(s_vec))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta < SMALL_ANGLE:
        return s_vec, theta
    if theta > LARGE_ANGLE:
        # sin(theta) loses the axis near a half turn; the symmetric part
        # (R + R^T)/2 = c I + (1 - c) n n^T keeps it
        B = 0.5 * (R + R.T)
        k = int(np.argmax(np.diag(B)))
        col = B[:, k] - c * np.eye(3)[:, k]
        n = col / np.linalg.norm(col)
        if np.dot(n, s_vec) < 0:
            n = -n
        return theta * n, theta
    return (theta / s) * s_vec, theta


def log(T: Isometry) -> Twist:
    """Inverse of :func:`exp`; the rotation angle of the result lies in [0, pi]."""
    omega, theta = _rotation_log(T.rotation)
    W = skew(omega)
    if theta < 1e-3:
        t2 = theta * theta
        D = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = 0.5 * theta
        D = (1.0 - half * np.cos(half) / np.sin(half)) / (theta * theta)
    V_inv = np.eye(3) - 0.5 * W + D * (W @ W)
    return Twist(omega, V_inv @ T.translation)


def compose(A: Isometry, B: Isometry) -> Isometry:
    return Isometry(A.rotation @ B.rotation, A.rotation @ B.translation + A.translation)


def inverse(T: Isometry) -> Isometry:
    Rt = T.rotation.T
    return Isometry(Rt, -(Rt @ T.translation))


def apply(T: Isometry, p) -> np.ndarray:
    """Map a point ``(3,)`` or points ``(N, 3)`` through ``T``."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        return T.rotation @ p + T.translation
    return p @ T.rotation.T + T.translation


def rotation_angle(T: Isometry) -> float:
    """Rotation angle in radians, in [0, pi]."""
    return _rotation_log(T.rotation)[1]


def translation_norm(T: Isometry) -> float:
    return float(np.linalg.norm(T.translation))


def adjoint(T: Isometry) -> np.ndarray:
    """6x6 adjoint for ``(omega, v)`` ordering: ``T exp(xi) T^-1 = exp(Ad_T xi)``."""
    R = T.rotation
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[3:, 3:] = R
    Ad[3:, :3] = skew(T.translation) @ R
    return Ad


def rotation_to_quaternion(R) -> np.ndarray:
    """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0))
        q = np.empty(4)
        q[i] = 0.25 * s
        q[j] = (R[j, i] + R[i, j]) / s
        q[k] = (R[k, i] + R[i, k]) / s
        q[3] = (R[k, j] - R[j, k]) / s
    q /= np.linalg.norm(q)
    if q[3] < 0:
        q = -q
    return q


def quaternion_to_rotation(q) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_isometry(rng: np.random.Generator, max_angle: float, max_translation: float) -> Isometry:
    """Rotation about a uniform random axis by an angle in [0, max_angle],
    translation along a uniform random direction with norm in [0, max_translation]."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = direction * rng.uniform(0.0, max_translation)
    R = exp(Twist(axis * angle, np.zeros(3))).rotation
    return Isometry(R, t)
