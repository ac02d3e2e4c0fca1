"""Trajectory metrics, indicator sweeps and synthetic registration benchmarks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import se3
from ._parallel import ordered_map
from .errors import EmptyReportError, InvalidArgumentError
from .innerprod import indicator
from .kernels import ChannelKernel, KernelParams
from .pointcloud import Channel, FeatureSchema, PointCloud, diameter
from .registration import RegistrationConfig, register
from .se3 import Isometry

KITTI_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)
SPEED_BIN = 2.0  # m/s
TUM_MAX_DT = 0.02  # s
CSV_DIGITS = 9

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


# ---------------------------------------------------------------- KITTI drift


@dataclass
class DriftReport:
    translation_percent: float
    rotation_deg_per_m: float
    segments: int
    # length -> {"translation_percent", "rotation_deg_per_m", "segments"}, None if no segment
    per_length: dict = field(default_factory=dict)
    # lower bin edge in m/s -> same keys as per_length
    per_speed: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def path_distances(poses) -> np.ndarray:
    """Cumulative distance travelled along the trajectory, starting at 0."""
    t = np.array([T.translation for T in poses])
    if len(t) == 0:
        return np.zeros(0)
    steps = np.linalg.norm(np.diff(t, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _segment_end(dist: np.ndarray, first: int, length: float) -> int:
    """First index whose distance reaches ``dist[first] + length``; -1 if none."""
    k = int(np.searchsorted(dist, dist[first] + length, side="left"))
    return k if k < len(dist) else -1


def relative_error(est_s: Isometry, est_e: Isometry, gt_s: Isometry, gt_e: Isometry) -> Isometry:
    gt_delta = gt_s.inverse() @ gt_e
    est_delta = est_s.inverse() @ est_e
    return gt_delta.inverse() @ est_delta


def _summary(t_errs, r_errs) -> dict | None:
    if not t_errs:
        return None
    return {
        "translation_percent": float(np.mean(t_errs)),
        "rotation_deg_per_m": float(np.mean(r_errs)),
        "segments": len(t_errs),
    }


def kitti_drift(
    estimated,
    ground_truth,
    lengths=KITTI_LENGTHS,
    frame_dt: float = 0.1,
    step: int = 1,
) -> DriftReport:
    """Average relative-pose drift over all subsequences of the given path lengths.

    For every start index and length ``L`` the segment ends at the first pose
    whose ground-truth path distance is at least ``L`` further along. The error
    is ``(Q_s^-1 Q_e)^-1 (P_s^-1 P_e)`` with ``Q`` ground truth and ``P`` the
    estimate; translation drift is ``|t(E)| / L`` in percent and rotation drift
    ``angle(E) / L`` in degrees per meter. Segment speed is ``L`` over the
    segment's duration at ``frame_dt`` seconds per frame.
    """
    est = list(estimated)
    gt = list(ground_truth)
    if len(est) != len(gt):
        raise InvalidArgumentError(f"trajectories differ in length: {len(est)} vs {len(gt)}")
    if step < 1:
        raise InvalidArgumentError(f"step must be >= 1, got {step}")
    dist = path_distances(gt)
    by_length = {int(L) if float(L).is_integer() else L: ([], []) for L in lengths}
    by_speed: dict[float, tuple[list, list]] = {}
    all_t, all_r = [], []
    for first in range(0, len(gt), step):
        for L, (ts, rs) in by_length.items():
            last = _segment_end(dist, first, L)
            if last < 0:
                continue
            E = relative_error(est[first], est[last], gt[first], gt[last])
            t_err = 100.0 * se3.translation_norm(E) / L
            r_err = math.degrees(se3.rotation_angle(E)) / L
            ts.append(t_err)
            rs.append(r_err)
            all_t.append(t_err)
            all_r.append(r_err)
            speed = L / ((last - first) * frame_dt)
            bin_lo = SPEED_BIN * math.floor(speed / SPEED_BIN)
            bucket = by_speed.setdefault(bin_lo, ([], []))
            bucket[0].append(t_err)
            bucket[1].append(r_err)
    per_length = {L: _summary(ts, rs) for L, (ts, rs) in by_length.items()}
    per_speed = {b: _summary(*by_speed[b]) for b in sorted(by_speed)}
    if not all_t:
        return DriftReport(math.nan, math.nan, 0, per_length, per_speed)
    return DriftReport(float(np.mean(all_t)), float(np.mean(all_r)), len(all_t), per_length, per_speed)


# ---------------------------------------------------------------- TUM RPE


@dataclass
class RpeReport:
    trans_rmse: float  # m/s
    rot_rmse: float  # deg/s
    # (timestamp, translational drift m/s, rotational drift deg/s)
    residuals: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"trans_rmse": self.trans_rmse, "rot_rmse": self.rot_rmse, "pairs": len(self.residuals)}


def associate(est_stamps, gt_stamps, max_dt: float = TUM_MAX_DT) -> list[tuple[int, int]]:
    """Match each estimate stamp to the nearest ground-truth stamp within ``max_dt``.

    Each ground-truth stamp is used at most once; ties go to the earlier estimate.
    """
    est_stamps = np.asarray(est_stamps, dtype=float)
    gt_stamps = np.asarray(gt_stamps, dtype=float)
    if len(gt_stamps) == 0 or len(est_stamps) == 0:
        return []
    order = np.argsort(gt_stamps, kind="stable")
    sorted_gt = gt_stamps[order]
    candidates = []
    for i, t in enumerate(est_stamps):
        k = int(np.searchsorted(sorted_gt, t))
        for c in (k - 1, k):
            if 0 <= c < len(sorted_gt):
                d = abs(sorted_gt[c] - t)
                if d <= max_dt:
                    candidates.append((d, i, int(order[c])))
    used_e, used_g, out = set(), set(), []
    for d, i, j in sorted(candidates):
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        out.append((i, j))
    return sorted(out)


def tum_rpe(estimated, ground_truth, delta: float = 1.0, max_dt: float = TUM_MAX_DT) -> RpeReport:
    """RMSE of the relative pose error per second.

    Both inputs are lists of ``(timestamp, Isometry)``. After association,
    each matched pose ``i`` is paired with the first matched pose at least
    ``delta`` seconds later (by ground-truth time). The residual
    ``(G_i^-1 G_k)^-1 (P_i^-1 P_k)`` is divided by the ground-truth time
    between the two poses.
    """
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    est = list(estimated)
    gt = list(ground_truth)
    matches = associate([t for t, _ in est], [t for t, _ in gt], max_dt)
    if not matches:
        raise EmptyReportError("no estimated pose could be associated with ground truth")
    t_gt = np.array([gt[j][0] for _, j in matches], dtype=float)
    residuals = []
    for a, (i, j) in enumerate(matches):
        b = int(np.searchsorted(t_gt, t_gt[a] + delta - 1e-12, side="left"))
        if b >= len(matches):
            break
        k, m = matches[b]
        dt = t_gt[b] - t_gt[a]
        E = relative_error(est[i][1], est[k][1], gt[j][1], gt[m][1])
        residuals.append((float(gt[j][0]), se3.translation_norm(E) / dt, math.degrees(se3.rotation_angle(E)) / dt))
    if not residuals:
        raise EmptyReportError(f"no associated pose pair spans {delta} s")
    r = np.array([(t, d) for _, t, d in residuals])
    return RpeReport(float(np.sqrt(np.mean(r[:, 0] ** 2))), float(np.sqrt(np.mean(r[:, 1] ** 2))), residuals)


# ---------------------------------------------------------------- indicator sweep


def perturbation(cloud: PointCloud, kind: str, magnitude: float, axis=None) -> Isometry:
    """Rotation by ``magnitude`` radians about ``axis`` through the centroid, or
    translation by ``magnitude`` meters along ``axis``."""
    default = (0.0, 0.0, 1.0) if kind == "rotation" else (1.0, 0.0, 0.0)
    a = np.asarray(default if axis is None else axis, dtype=float)
    n = np.linalg.norm(a)
    if not n > 0:
        raise InvalidArgumentError("sweep axis must be non-zero")
    a = a / n
    if kind == "translation":
        return Isometry(np.eye(3), magnitude * a)
    if kind != "rotation":
        raise InvalidArgumentError(f"sweep kind must be 'rotation' or 'translation', got {kind!r}")
    R = se3.exp(np.concatenate([magnitude * a, np.zeros(3)])).rotation
    c = cloud.positions.mean(axis=0) if len(cloud) else np.zeros(3)
    return Isometry(R, c - R @ c)


def indicator_sweep(
    cloud: PointCloud,
    params: KernelParams,
    kind: str,
    max_magnitude: float,
    steps: int,
    axis=None,
    threads: int = 1,
) -> list[tuple[float, float]]:
    """Rows ``(magnitude, indicator)`` for the cloud against a perturbed copy of itself.

    Magnitudes are evenly spaced over ``[0, max_magnitude]``; a zero range
    gives a single row.
    """
    if steps < 2:
        raise InvalidArgumentError(f"steps must be >= 2, got {steps}")
    mags = [0.0] if max_magnitude == 0 else np.linspace(0.0, max_magnitude, steps).tolist()
    return [
        (m, indicator(cloud, cloud, perturbation(cloud, kind, m, axis), params, threads=threads))
        for m in mags
    ]


# ---------------------------------------------------------------- synthetic benchmarks


def splitmix64(x: int) -> int:
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trial_seeds(seed: int, trials: int) -> list[int]:
    """The first ``trials`` outputs of a splitmix64 stream started at ``seed``."""
    return [splitmix64(seed + (k + 1) * _GOLDEN) for k in range(trials)]


COLOR = FeatureSchema((Channel("color", 3, "color"),))


@dataclass
class TrialResult:
    seed: int
    rotation_error_deg: float
    translation_error: float  # fraction of the cloud diameter
    true_rotation_deg: float
    iterations: int
    converged: bool
    success: bool


@dataclass
class BenchReport:
    trials: list
    success_rate: float
    rotation_quantiles: dict
    translation_quantiles: dict

    def summary(self) -> dict:
        return {
            "trials": len(self.trials),
            "success_rate": self.success_rate,
            "converged": sum(t.converged for t in self.trials),
            "rotation_error_deg": self.rotation_quantiles,
            "translation_error_frac": self.translation_quantiles,
        }

    def rows(self):
        header = ["seed", "rotation_error_deg", "translation_error_frac", "true_rotation_deg",
                  "iterations", "converged", "success"]
        return header, [
            [t.seed, t.rotation_error_deg, t.translation_error, t.true_rotation_deg,
             t.iterations, int(t.converged), int(t.success)]
            for t in self.trials
        ]


def _quantiles(values) -> dict:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return {}
    return {"p50": float(np.quantile(v, 0.5)), "p90": float(np.quantile(v, 0.9)),
            "p95": float(np.quantile(v, 0.95)), "max": float(v.max())}


def box_pair(rng, n_points, noise_frac, rotation_max_deg, translation_max_frac, color):
    """Uniform cloud ``X`` in the unit box and ``Z = T^-1 X + noise``; returns ``(X, Z, T)``."""
    P = rng.uniform(-0.5, 0.5, size=(n_points, 3))
    diam = diameter(P)
    T = se3.random_isometry(rng, math.radians(rotation_max_deg), translation_max_frac * diam)
    Zp = se3.apply(T.inverse(), P) + rng.normal(scale=noise_frac * diam, size=P.shape)
    if color:
        C = rng.uniform(0.0, 1.0, size=(n_points, 3))
        return PointCloud(P, C, COLOR), PointCloud(Zp, C, COLOR), T
    return PointCloud(P), PointCloud(Zp), T


def _hue_colors(k: int) -> np.ndarray:
    """``k`` fully saturated colors with evenly spaced hues."""
    h = np.arange(k) / k * 6.0
    ramp = lambda off: np.clip(np.abs((h + off) % 6.0 - 3.0) - 1.0, 0.0, 1.0)  # noqa: E731
    return np.stack([ramp(0.0), ramp(4.0), ramp(2.0)], axis=1)


def ring_pair(rng, clusters=8, points_per_cluster=40, radius=1.0, blob=0.15,
              noise_frac=0.0025, rotation_max_deg=45.0, color=True):
    """``clusters`` identical blobs on a circle in the xy plane, each with its own color.

    Geometry alone is invariant to rotations by ``360/clusters`` degrees about
    z. The ground truth is a rotation about z drawn uniformly from
    ``[-rotation_max_deg, rotation_max_deg]``.
    """
    offsets = rng.normal(scale=blob / 2.0, size=(points_per_cluster, 3))
    offsets = np.clip(offsets, -blob, blob)
    base = offsets + np.array([radius, 0.0, 0.0])
    colors = _hue_colors(clusters)
    P, C = [], []
    for k in range(clusters):
        Rk = se3.exp([0.0, 0.0, 2.0 * math.pi * k / clusters, 0.0, 0.0, 0.0]).rotation
        P.append(base @ Rk.T)
        C.append(np.repeat(colors[k][None, :], points_per_cluster, axis=0))
    P = np.concatenate(P)
    C = np.concatenate(C)
    diam = diameter(P)
    angle = math.radians(rng.uniform(-rotation_max_deg, rotation_max_deg))
    T = se3.exp([0.0, 0.0, angle, 0.0, 0.0, 0.0])
    Zp = se3.apply(T.inverse(), P) + rng.normal(scale=noise_frac * diam, size=P.shape)
    if color:
        return PointCloud(P, C, COLOR), PointCloud(Zp, C, COLOR), T
    return PointCloud(P), PointCloud(Zp), T


def _run_trial(seed, make_pair, params, config, rotation_tol_deg, translation_tol_frac) -> TrialResult:
    rng = np.random.default_rng(seed)
    X, Z, T_true = make_pair(rng)
    res = register(X, Z, None, params, config)
    E = T_true.inverse() @ res.transform
    rot = math.degrees(se3.rotation_angle(E))
    trans = se3.translation_norm(E) / diameter(X.positions)
    ok = rot <= rotation_tol_deg and trans <= translation_tol_frac
    return TrialResult(seed, rot, trans, math.degrees(se3.rotation_angle(T_true)),
                       res.iterations, res.converged, ok)


def _bench(seed, trials, make_pair, params, config, rotation_tol_deg, translation_tol_frac, threads):
    seeds = trial_seeds(seed, trials)
    results = ordered_map(
        lambda s: _run_trial(s, make_pair, params, config, rotation_tol_deg, translation_tol_frac),
        seeds, threads,
    )
    rate = sum(r.success for r in results) / len(results) if results else math.nan
    return BenchReport(results, rate, _quantiles([r.rotation_error_deg for r in results]),
                       _quantiles([r.translation_error for r in results]))


# Bench defaults: the starting lengthscale is ~7% of the unit box, annealed to half of that.
BENCH_LENGTHSCALE = 0.07
BENCH_MIN_LENGTHSCALE = 0.035
BENCH_COLOR_LENGTHSCALE = 0.1


def default_bench_setup(color: bool) -> tuple[KernelParams, RegistrationConfig]:
    channels = (ChannelKernel(1.0, BENCH_COLOR_LENGTHSCALE),) if color else ()
    params = KernelParams(1.0, BENCH_LENGTHSCALE, channels)
    return params, RegistrationConfig(init_lengthscale=BENCH_LENGTHSCALE, min_lengthscale=BENCH_MIN_LENGTHSCALE)


def synth_bench(
    seed: int = 42,
    n_points: int = 2000,
    noise_frac: float = 0.005,
    rotation_max_deg: float = 10.0,
    translation_max_frac: float = 0.05,
    trials: int = 100,
    params: KernelParams | None = None,
    config: RegistrationConfig | None = None,
    color: bool = False,
    rotation_tol_deg: float = 0.5,
    translation_tol_frac: float = 0.01,
    threads: int = 1,
) -> BenchReport:
    """Random-box recovery benchmark, deterministic per ``seed``.

    Noise and translation bounds are fractions of each cloud's diameter.
    Trial ``k`` draws everything from ``default_rng(trial_seeds(seed)[k])``,
    so trials are independent and the report does not depend on ``threads``.
    """
    dp, dc = default_bench_setup(color)
    params = params or dp
    config = config or dc

    def make_pair(rng):
        return box_pair(rng, n_points, noise_frac, rotation_max_deg, translation_max_frac, color)

    return _bench(seed, trials, make_pair, params, config, rotation_tol_deg, translation_tol_frac, threads)


RING_LENGTHSCALE = 0.4
RING_MIN_LENGTHSCALE = 0.1
RING_COLOR_LENGTHSCALE = 0.2


def ring_bench(
    seed: int = 7,
    trials: int = 50,
    color: bool = True,
    params: KernelParams | None = None,
    config: RegistrationConfig | None = None,
    rotation_max_deg: float = 45.0,
    rotation_tol_deg: float = 0.5,
    translation_tol_frac: float = 0.01,
    threads: int = 1,
) -> BenchReport:
    """Symmetric-ring benchmark: geometry alone is ambiguous, colors are not."""
    channels = (ChannelKernel(1.0, RING_COLOR_LENGTHSCALE),) if color else ()
    params = params or KernelParams(1.0, RING_LENGTHSCALE, channels)
    config = config or RegistrationConfig(init_lengthscale=RING_LENGTHSCALE, min_lengthscale=RING_MIN_LENGTHSCALE)

    def make_pair(rng):
        return ring_pair(rng, rotation_max_deg=rotation_max_deg, color=color)

    return _bench(seed, trials, make_pair, params, config, rotation_tol_deg, translation_tol_frac, threads)


# ---------------------------------------------------------------- output


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.*g" % (CSV_DIGITS, float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v) for v in row])


def _round(obj):
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    x = float(obj)
    return float(format_number(x)) if math.isfinite(x) else None


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_round(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
