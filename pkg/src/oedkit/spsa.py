"""Simultaneous perturbation stochastic approximation on a box.

The minimizer only needs noisy objective values: each iteration draws a
Rademacher direction ``delta`` and evaluates the objective at
``d + c_k delta`` and ``d - c_k delta``. Iterates and perturbed points are
clipped componentwise to the box.

Objectives are callables ``f(d, rng) -> float``. The generator passed on
each call is a fresh substream, so stochastic objectives (Monte Carlo
estimators) are reproducible from the run seed.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import DesignSpace

__all__ = [
    "GainSchedule",
    "SpsaRun",
    "SpsaError",
    "RestartEnsemble",
    "perturbation",
    "gradient_estimate",
    "run",
    "multi_restart",
    "LowerBoundScorer",
]

Objective = Callable[[np.ndarray, np.random.Generator], float]


class SpsaError(RuntimeError):
    """Objective failure inside an SPSA run."""


@dataclass(frozen=True)
class GainSchedule:
    """Gain sequences ``a_k = a / (A + k + 1)^alpha`` and ``c_k = c / (k + 1)^gamma``."""

    a: float = 0.16
    A: float = 0.0
    alpha: float = 0.602
    c: float = 0.05
    gamma: float = 0.101

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ValueError("a and c must be positive")
        if self.A < 0:
            raise ValueError("A must be non-negative")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    @classmethod
    def default(cls, iterations: int, **overrides) -> "GainSchedule":
        """Defaults for a unit-width box: ``a=0.16``, ``c=0.05``, ``A=K/10``."""
        params = dict(a=0.16, A=iterations / 10.0, alpha=0.602, c=0.05, gamma=0.101)
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)

    def a_k(self, k):
        return self.a / (self.A + np.asarray(k) + 1.0) ** self.alpha

    def c_k(self, k):
        return self.c / (np.asarray(k) + 1.0) ** self.gamma

    def to_dict(self):
        return dict(a=self.a, A=self.A, alpha=self.alpha, c=self.c, gamma=self.gamma)


def perturbation(n_d: int, rng: np.random.Generator) -> np.ndarray:
    """Independent ``+-1`` components with probability one half each."""
    if n_d < 1:
        raise ValueError("n_d must be >= 1")
    return 2.0 * rng.integers(0, 2, size=n_d) - 1.0


def _streams(rng: np.random.Generator, common: bool):
    s_plus, s_minus = rng.integers(0, 2**63 - 1, size=2)
    if common:
        s_minus = s_plus
    return np.random.default_rng(int(s_plus)), np.random.default_rng(int(s_minus))


def gradient_estimate(objective: Objective, d, c_k: float, delta, rng: np.random.Generator | None = None,
                      bounds: DesignSpace | None = None, common_random_numbers: bool = False):
    """Two-point simultaneous-perturbation gradient.

    Returns ``(g, f_plus, f_minus)`` with ``g_i = (f_plus - f_minus) / (2 c_k delta_i)``.
    """
    if c_k <= 0:
        raise ValueError("c_k must be positive")
    d = np.asarray(d, dtype=float)
    delta = np.asarray(delta, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    d_plus = d + c_k * delta
    d_minus = d - c_k * delta
    if bounds is not None:
        d_plus = bounds.clip(d_plus)
        d_minus = bounds.clip(d_minus)
    r_plus, r_minus = _streams(rng, common_random_numbers)
    f_plus = float(objective(d_plus, r_plus))
    f_minus = float(objective(d_minus, r_minus))
    return (f_plus - f_minus) / (2.0 * c_k * delta), f_plus, f_minus


@dataclass
class SpsaRun:
    trajectory: np.ndarray  # (K + 1, n_d), starting point first
    evaluations: int
    seed: int | None
    f_plus: np.ndarray
    f_minus: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]

    @property
    def iterations(self) -> int:
        return self.trajectory.shape[0] - 1


class _Unit:
    """Affine map between a box and the unit cube."""

    def __init__(self, bounds: DesignSpace):
        self.lo = bounds.lo
        w = bounds.hi - bounds.lo
        self.width = np.where(w > 0, w, 1.0)

    def to_unit(self, d):
        return (d - self.lo) / self.width

    def from_unit(self, u):
        return self.lo + u * self.width

    def wrap(self, objective):
        return lambda u, rng: objective(self.from_unit(u), rng)


def run(objective: Objective, d0, schedule: GainSchedule, iterations: int, bounds: DesignSpace,
        seed: int | np.random.Generator | None = 0, common_random_numbers: bool = False,
        normalize: bool = False) -> SpsaRun:
    """Minimize ``objective`` from ``d0`` with ``iterations`` SPSA steps.

    Parameters
    ----------
    objective : callable
        ``f(d, rng) -> float``.
    d0 : array_like
        Starting point inside ``bounds``.
    schedule : GainSchedule
        Gain constants, in box units, or unit-cube units when ``normalize``.
    iterations : int
        Number of steps ``K``; the objective is called exactly ``2K`` times.
    bounds : DesignSpace
        Box constraint.
    seed : int or Generator
        Source of perturbations and evaluation substreams.
    common_random_numbers : bool
        Reuse a single substream for both evaluations of an iteration.
    normalize : bool
        Iterate in unit-cube coordinates so one schedule fits boxes of any
        width (equivalent to scaling ``a`` and ``c`` by ``hi - lo``).

    Returns
    -------
    SpsaRun
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    d0 = np.asarray(d0, dtype=float).ravel()
    if d0.size != bounds.dim or not bounds.contains(d0):
        raise ValueError(f"starting point {d0.tolist()} is not inside the design box")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if normalize:
        unit = _Unit(bounds)
        f = unit.wrap(objective)
        box = DesignSpace((0.0,) * bounds.dim, (1.0,) * bounds.dim)
        d = unit.to_unit(d0)
    else:
        f, box, d = objective, bounds, d0.copy()

    traj = np.empty((iterations + 1, d.size))
    traj[0] = d
    fp = np.empty(iterations)
    fm = np.empty(iterations)
    for k in range(iterations):
        delta = perturbation(d.size, rng)
        try:
            g, fp[k], fm[k] = gradient_estimate(f, d, float(schedule.c_k(k)), delta, rng, box,
                                                common_random_numbers)
        except Exception as exc:
            raise SpsaError(f"objective failed at iterate {k}: {exc}") from exc
        if not np.all(np.isfinite(g)):
            raise SpsaError(f"non-finite gradient estimate at iterate {k}")
        d = box.clip(d - float(schedule.a_k(k)) * g)
        traj[k + 1] = d
    if normalize:
        traj = bounds.clip(unit.from_unit(traj))
    return SpsaRun(traj, 2 * iterations, seed if isinstance(seed, (int, np.integer)) else None, fp, fm)


# ----------------------------------------------------------------------------
# restarts
# ----------------------------------------------------------------------------


@dataclass
class LowerBoundScorer:
    """Score designs by the lower-bound gain at one fixed budget (same seed for all)."""

    model: object
    lik: object
    prior: object
    budget: object
    inner: str = "fresh"

    def __call__(self, d):
        from .eig import lower_bound_gain

        est = lower_bound_gain(self.model, self.lik, self.prior, d, self.budget, self.inner)
        return est.value, est.std_error


@dataclass
class RestartEnsemble:
    runs: list  # SpsaRun, sorted by decreasing score
    scores: np.ndarray
    score_se: np.ndarray
    run_ids: np.ndarray
    failures: list = field(default_factory=list)  # (run_id, message)

    @property
    def best(self) -> SpsaRun:
        return self.runs[0]

    @property
    def finals(self) -> np.ndarray:
        return np.array([r.final for r in self.runs])

    def records(self):
        for rid, r, s, se in zip(self.run_ids, self.runs, self.scores, self.score_se):
            yield dict(run_id=int(rid), final=r.final, score=float(s), score_se=float(se),
                       evaluations=r.evaluations)


def _one_restart(args):
    rid, objective, sampler, schedule, iterations, bounds, seed, crn, normalize, scorer = args
    try:
        rng = np.random.default_rng(seed)
        d0 = np.asarray(sampler(rng), dtype=float)
        res = run(objective, d0, schedule, iterations, bounds, rng, crn, normalize)
        res.seed = seed
        value, se = scorer(res.final)
        if not math.isfinite(value):
            raise SpsaError("non-finite score")
        return rid, res, float(value), float(se), None
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        return rid, None, math.nan, math.nan, f"{type(exc).__name__}: {exc}"


def multi_restart(objective: Objective, sampler: Callable[[np.random.Generator], np.ndarray],
                  schedule: GainSchedule, iterations: int, restarts: int, scorer: Callable,
                  bounds: DesignSpace, seed: int = 0, common_random_numbers: bool = False,
                  normalize: bool = True, workers: int = 1) -> RestartEnsemble:
    """Independent SPSA runs from sampled starts, scored and sorted.

    Run ``r`` uses seed ``derive_seed(seed, r)`` for its start and its
    iterations. ``scorer(d) -> (value, std_error)`` is applied to each final
    point; higher is better. Failed runs are listed in ``failures``.
    """
    from .eig import derive_seed

    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    tasks = [(r, objective, sampler, schedule, iterations, bounds, derive_seed(seed, r),
              common_random_numbers, normalize, scorer) for r in range(restarts)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_one_restart, tasks))
    else:
        out = [_one_restart(t) for t in tasks]
    ok = [o for o in out if o[1] is not None]
    failures = [(o[0], o[4]) for o in out if o[1] is None]
    ok.sort(key=lambda o: (-o[2], o[0]))
    return RestartEnsemble(
        runs=[o[1] for o in ok],
        scores=np.array([o[2] for o in ok]),
        score_se=np.array([o[3] for o in ok]),
        run_ids=np.array([o[0] for o in ok], dtype=int),
        failures=failures,
    )
