"""Rigid registration by annealed gradient ascent of the kernel inner product.

Each iteration takes the body-frame gradient at the current transform, moves
along its normalized direction with a backtracking line search
(``T <- T exp(eps * g/|g|)``), and records the objective and the alignment
indicator. Once the indicator has been flat for ``stabilization_window``
iterations the geometric lengthscale is multiplied by ``decay_factor``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import se3
from .errors import InvalidArgumentError, NoOverlapError
from .innerprod import (
    DEFAULT_C_MIN,
    DEFAULT_CUTOFF_MULTIPLIER,
    PairList,
    build_pairs,
    evaluate,
    world_to_body_gradient,
)
from .kernels import KernelParams
from .pointcloud import PointCloud, check_same_schema, diameter
from .se3 import Isometry

log = logging.getLogger(__name__)

MIN_LENGTHSCALE_FRACTION = 0.05


@dataclass(frozen=True)
class RegistrationConfig:
    """Solver settings.

    ``step_init`` is a multiple of the current lengthscale. ``min_lengthscale``
    defaults to 5% of the starting lengthscale. ``subsequent_lengthscale`` is
    the starting lengthscale for every frame after the first in
    :func:`register_sequence`.
    """

    init_lengthscale: float = 0.1
    min_lengthscale: float | None = None
    subsequent_lengthscale: float | None = None
    decay_factor: float = 0.98
    stabilization_window: int = 5
    stabilization_rel_tol: float = 1e-5
    max_iterations: int = 2000
    step_init: float = 0.1
    step_shrink: float = 0.5
    step_grow: float = 1.2
    max_backtracks: int = 20
    convergence_twist_norm: float = 1e-5
    cutoff_multiplier: float = DEFAULT_CUTOFF_MULTIPLIER
    c_min: float = DEFAULT_C_MIN
    rebuild_fraction: float = 0.5
    threads: int = 1

    def __post_init__(self):
        def bad(msg):
            raise InvalidArgumentError(msg)

        if not self.init_lengthscale > 0:
            bad(f"init_lengthscale must be > 0, got {self.init_lengthscale}")
        if not 0 < self.decay_factor < 1:
            bad(f"decay_factor must lie in (0, 1), got {self.decay_factor}")
        if not 0 < self.floor <= self.init_lengthscale:
            bad(f"min_lengthscale must lie in (0, init_lengthscale], got {self.floor}")
        if self.subsequent_lengthscale is not None and not self.subsequent_lengthscale > 0:
            bad(f"subsequent_lengthscale must be > 0, got {self.subsequent_lengthscale}")
        if self.max_iterations < 1:
            bad(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.stabilization_window < 1:
            bad(f"stabilization_window must be >= 1, got {self.stabilization_window}")
        if not self.stabilization_rel_tol >= 0:
            bad(f"stabilization_rel_tol must be >= 0, got {self.stabilization_rel_tol}")
        if not self.step_init > 0:
            bad(f"step_init must be > 0, got {self.step_init}")
        if not 0 < self.step_shrink < 1:
            bad(f"step_shrink must lie in (0, 1), got {self.step_shrink}")
        if not self.step_grow >= 1:
            bad(f"step_grow must be >= 1, got {self.step_grow}")
        if self.max_backtracks < 0:
            bad(f"max_backtracks must be >= 0, got {self.max_backtracks}")
        if self.cutoff_multiplier < 1:
            bad(f"cutoff_multiplier must be >= 1, got {self.cutoff_multiplier}")
        if not 0 <= self.c_min < 1:
            bad(f"c_min must lie in [0, 1), got {self.c_min}")
        if not self.rebuild_fraction > 0:
            bad(f"rebuild_fraction must be > 0, got {self.rebuild_fraction}")
        if self.threads < 1:
            bad(f"threads must be >= 1, got {self.threads}")

    @property
    def floor(self) -> float:
        if self.min_lengthscale is not None:
            return self.min_lengthscale
        return MIN_LENGTHSCALE_FRACTION * self.init_lengthscale

    def for_subsequent_frames(self) -> "RegistrationConfig":
        if self.subsequent_lengthscale is None:
            return self
        cfg = replace(self, init_lengthscale=self.subsequent_lengthscale)
        if self.min_lengthscale is not None and self.min_lengthscale > cfg.init_lengthscale:
            cfg = replace(cfg, min_lengthscale=None)
        return cfg


@dataclass
class RegistrationResult:
    transform: Isometry
    converged: bool
    iterations: int
    indicator_trace: list = field(default_factory=list)
    lengthscale_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    twist_norm_trace: list = field(default_factory=list)
    rebuild_trace: list = field(default_factory=list)
    final_indicator: float = 0.0

    def trace_rows(self):
        """Rows of (iteration, lengthscale, F, indicator, step, twist norm)."""
        return [
            (k + 1, ls, f, ind, st, tn)
            for k, (ls, f, ind, st, tn) in enumerate(
                zip(self.lengthscale_trace, self.objective_trace, self.indicator_trace,
                    self.step_trace, self.twist_norm_trace)
            )
        ]


@dataclass
class LineSearchResult:
    step: float
    value: float
    transform: Isometry
    gradient_world: np.ndarray | None
    trials: int


def is_stable(history, window: int, rel_tol: float) -> bool:
    if len(history) < window:
        return False
    recent = history[-window:]
    hi, lo = max(recent), min(recent)
    return hi - lo <= rel_tol * max(abs(hi), abs(lo))


def anneal_step(lengthscale: float, history, config: RegistrationConfig) -> float:
    """Next lengthscale: decayed once the last ``stabilization_window`` indicator
    values sit inside the relative band, otherwise unchanged.

    A decay that would cross ``min_lengthscale`` is skipped, so every change
    is exactly one factor of ``decay_factor``.
    """
    if not history:
        raise InvalidArgumentError("anneal_step needs at least one indicator value")
    if not is_stable(history, config.stabilization_window, config.stabilization_rel_tol):
        return lengthscale
    decayed = lengthscale * config.decay_factor
    if decayed < config.floor:
        return lengthscale
    return decayed


def at_floor(lengthscale: float, config: RegistrationConfig) -> bool:
    return lengthscale * config.decay_factor < config.floor


def line_search(
    X: PointCloud,
    Z: PointCloud,
    T: Isometry,
    g,
    params: KernelParams,
    pairs: PairList,
    config: RegistrationConfig,
    step: float | None = None,
    value: float | None = None,
) -> LineSearchResult:
    """Backtrack along ``g/|g|`` until the objective strictly increases.

    Starts at ``step`` (default ``config.step_init * lengthscale``) and halves
    (``step_shrink``) up to ``max_backtracks`` times. Returns step 0 and the
    unchanged transform when no trial improves on ``value``.
    """
    g = np.asarray(g.vector if isinstance(g, se3.Twist) else g, dtype=float)
    gnorm = float(np.linalg.norm(g))
    if value is None:
        value = evaluate(pairs, Z, T, params, threads=config.threads)[0]
    if not gnorm > 0:
        return LineSearchResult(0.0, value, T, None, 0)
    direction = g / gnorm
    eps = config.step_init * params.lengthscale if step is None else step
    for trial in range(config.max_backtracks + 1):
        cand = T @ se3.exp(eps * direction)
        f, gw = evaluate(pairs, Z, cand, params, with_gradient=True, threads=config.threads)
        if f > value:
            return LineSearchResult(eps, f, cand, gw, trial + 1)
        eps *= config.step_shrink
    return LineSearchResult(0.0, value, T, None, config.max_backtracks + 1)


def _max_displacement(A: Isometry, B: Isometry, points: np.ndarray) -> float:
    dR = A.rotation - B.rotation
    dt = A.translation - B.translation
    d = points @ dR.T + dt
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", d, d)))) if len(points) else 0.0


def register(
    X: PointCloud,
    Z: PointCloud,
    initial: Isometry | None,
    params: KernelParams,
    config: RegistrationConfig,
) -> RegistrationResult:
    """Find ``T`` maximizing ``sum c_ij k(x_i, T z_j)``, i.e. ``T`` maps ``Z`` onto ``X``.

    ``params.lengthscale`` is ignored; the geometric lengthscale is driven by
    ``config``. Raises :class:`NoOverlapError` when no pair lies within the
    cutoff at the starting lengthscale.
    """
    check_same_schema(X, Z)
    params.check_schema(X.schema)
    T = Isometry.identity() if initial is None else initial
    ls = config.init_lengthscale
    params = params.with_lengthscale(ls)
    radius = config.cutoff_multiplier * ls
    if len(X) == 0 or len(Z) == 0:
        raise NoOverlapError(radius)
    scale = max(diameter(X), 1e-12)
    norm_factor = 1.0 / np.sqrt(len(X) * len(Z))
    threads = config.threads

    def rebuild(T, params):
        return build_pairs(X, Z, T, params, config.cutoff_multiplier, config.c_min, threads)

    pairs = rebuild(T, params)
    if len(pairs) == 0:
        raise NoOverlapError(radius)
    F, gw = evaluate(pairs, Z, T, params, with_gradient=True, threads=threads)
    step = config.step_init * ls
    history: list[float] = []
    stalled = False
    result = RegistrationResult(T, False, 0)

    for it in range(config.max_iterations):
        eps, twist_norm = 0.0, 0.0
        g = world_to_body_gradient(gw, T)
        gnorm = float(np.linalg.norm(g))
        if not stalled and gnorm > 1e-12 * max(abs(F), 1e-300) / ls:
            ls_res = line_search(X, Z, T, g, params, pairs, config, step=step, value=F)
            if ls_res.step > 0:
                eps = ls_res.step
                xi = (eps / gnorm) * g
                twist_norm = float(np.linalg.norm(xi[:3]) + np.linalg.norm(xi[3:]) / scale)
                T, F, gw = ls_res.transform, ls_res.value, ls_res.gradient_world
                step = eps * config.step_grow if ls_res.trials == 1 else eps
            else:
                stalled = True
        else:
            stalled = True

        ind = F * norm_factor
        result.lengthscale_trace.append(ls)
        result.objective_trace.append(F)
        result.indicator_trace.append(ind)
        result.step_trace.append(eps)
        result.twist_norm_trace.append(twist_norm)
        result.iterations = it + 1

        if at_floor(ls, config) and twist_norm < config.convergence_twist_norm:
            result.converged = True
            result.rebuild_trace.append(False)
            break

        history.append(ind)
        new_ls = anneal_step(ls, history, config)
        rebuilt = False
        if new_ls != ls:
            ls = new_ls
            params = params.with_lengthscale(ls)
            history = []
            step = config.step_init * ls
            pairs = rebuild(T, params)
            rebuilt = True
        elif eps > 0 and _max_displacement(T, pairs.built_transform, Z.positions) > (
            config.rebuild_fraction * pairs.cutoff_radius
        ):
            pairs = rebuild(T, params)
            rebuilt = True
        result.rebuild_trace.append(rebuilt)
        if rebuilt:
            stalled = False
            F, gw = evaluate(pairs, Z, T, params, with_gradient=True, threads=threads)

    result.transform = T
    result.final_indicator = result.indicator_trace[-1] if result.indicator_trace else F * norm_factor
    if not result.converged:
        log.info("registration stopped after %d iterations without converging", result.iterations)
    return result


@dataclass
class SequenceResult:
    relative: list
    trajectory: list
    fallback: list
    results: list
    errors: dict


def register_sequence(
    frames,
    params: KernelParams,
    config: RegistrationConfig,
) -> SequenceResult:
    """Frame-to-frame registration of an ordered sequence of clouds.

    The transform between frames ``k-1`` and ``k`` maps frame ``k`` into frame
    ``k-1``; the trajectory is their running product starting at identity.
    The first pair starts from identity at ``config.init_lengthscale``; later
    pairs start from the previous relative transform at
    ``config.subsequent_lengthscale``. A pair that fails with
    :class:`NoOverlapError` reuses the previous relative transform and is
    flagged in ``fallback``.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise InvalidArgumentError("a sequence needs at least two frames")
    later = config.for_subsequent_frames()
    relative = []
    fallback = []
    results = []
    errors = {}
    previous = Isometry.identity()
    for k in range(1, len(frames)):
        cfg = config if k == 1 else later
        try:
            res = register(frames[k - 1], frames[k], previous, params, cfg)
            rel = res.transform
            fallback.append(False)
        except NoOverlapError as exc:
            log.warning("frame %d: %s; reusing previous motion", k, exc)
            res = None
            rel = previous
            fallback.append(True)
            errors[k] = str(exc)
        results.append(res)
        relative.append(rel)
        previous = rel
    trajectory = [Isometry.identity()]
    for rel in relative:
        trajectory.append(trajectory[-1] @ rel)
    return SequenceResult(relative, trajectory, fallback, results, errors)
