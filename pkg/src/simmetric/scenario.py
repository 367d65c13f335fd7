"""Scenario estimation of simulation metrics.

Each sample ``i`` owns a generator seeded with ``split_seed(master, i)``; the
environment and the controller are both drawn from it.  Samples are therefore
i.i.d. and their results do not depend on evaluation order or on the number
of worker threads.

The reported estimate is the maximum per-sample distance.  With
``N >= (2/eps) (ln(1/beta) + 1)`` samples, the probability (over a fresh
draw) that the estimate is exceeded is at most ``eps``, with confidence at
least ``1 - beta``.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import NULL_CONTROLLER, ControllerScheme, draw_feasible
from .dynamics import DynamicalModel, simulate
from .geometry import All, Ball, Box, Empty, SetExpr
from .metrics import MetricKind, NormConfig, SampleEvaluation, evaluate_sample
from .spec import Environment, TimeVaryingSet, satisfies

__all__ = [
    "MASK64",
    "split_seed",
    "sample_size",
    "ScenarioConfig",
    "Estimate",
    "SampleError",
    "EnvironmentSpace",
    "TargetBallSpace",
    "BoxStartSpace",
    "FiniteSpace",
    "sample_environment",
    "estimate",
    "estimate_exhaustive",
    "ValidationResult",
    "validate_guarantee",
    "estimate_safe_env_fraction",
]

MASK64 = (1 << 64) - 1


def split_seed(master: int, index: int) -> int:
    """Counter-based 64-bit seed for sample ``index`` (SplitMix64 finalizer).

    ``z = master + (index + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``, followed by
    the SplitMix64 mixing rounds.  Pure integer arithmetic, so the value is the
    same on every platform.
    """
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sample_size(epsilon: float, beta: float) -> int:
    """Smallest integer ``N >= (2/epsilon) (ln(1/beta) + 1)``."""
    if not (0 < epsilon < 1 and 0 < beta < 1):
        raise ValueError(f"epsilon and beta must lie in (0, 1), got {epsilon}, {beta}")
    return math.ceil(2.0 / epsilon * (math.log(1.0 / beta) + 1.0))


@dataclass(frozen=True)
class ScenarioConfig:
    epsilon: float = 0.01
    beta: float = 1e-6
    n_override: Optional[int] = None
    seed: int = 0
    adaptive: bool = False
    metric: MetricKind = MetricKind.SPEC
    norm: NormConfig = field(default_factory=NormConfig)
    cap: int = 100

    def __post_init__(self):
        if not (0 < self.epsilon < 1 and 0 < self.beta < 1):
            raise ValueError(f"epsilon and beta must lie in (0, 1), got {self.epsilon}, {self.beta}")
        if self.n_override is not None and self.n_override < 1:
            raise ValueError(f"sample count override must be >= 1, got {self.n_override}")
        if self.cap < 1:
            raise ValueError(f"rejection cap must be >= 1, got {self.cap}")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "metric", MetricKind.parse(self.metric))

    @property
    def N(self) -> int:
        return self.n_override if self.n_override is not None else sample_size(self.epsilon, self.beta)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "beta": self.beta, "n_override": self.n_override,
                "N": self.N, "seed": self.seed, "adaptive": self.adaptive,
                "metric": self.metric.value, "norm": self.norm.to_dict(), "cap": self.cap}


class SampleError(RuntimeError):
    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"sample {index} (seed {seed}) failed: {cause!r}")
        self.index = index
        self.seed = seed
        self.cause = cause


# ----------------------------------------------------------------------------
# environment spaces


class EnvironmentSpace:
    def sample(self, rng: np.random.Generator, index: int = 0) -> Environment:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _ranges(ranges) -> np.ndarray:
    r = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if np.any(r[:, 0] > r[:, 1]):
        raise ValueError(f"empty sampling range in {r.tolist()}")
    return r


class TargetBallSpace(EnvironmentSpace):
    """Fixed start, terminal ball with a uniformly drawn center, constant avoid set."""

    def __init__(self, H: int, x0, target_ranges, radius: float, avoid: SetExpr = Empty()):
        self.H = int(H)
        self.x0 = np.asarray(x0, dtype=float)
        self.ranges = _ranges(target_ranges)
        self.radius = float(radius)
        self.avoid = avoid
        if self.ranges.shape[0] != self.x0.size:
            raise ValueError("target ranges must cover every state coordinate")

    def sample(self, rng, index=0):
        center = rng.uniform(self.ranges[:, 0], self.ranges[:, 1])
        reach = TimeVaryingSet(self.H, All(), {self.H: Ball(center, self.radius)})
        return Environment(f"e{index}", self.x0, TimeVaryingSet(self.H, self.avoid), reach,
                           {"target": center.tolist()})

    def describe(self):
        return {"space": "target-ball", "H": self.H, "x0": self.x0.tolist(),
                "target_ranges": self.ranges.tolist(), "radius": self.radius,
                "avoid": self.avoid.to_dict(), "distribution": "uniform"}


class BoxStartSpace(EnvironmentSpace):
    """Start state uniform over a box; stationary avoid and reach sets."""

    def __init__(self, H: int, x0_ranges, avoid: SetExpr = Empty(), reach: SetExpr = All()):
        self.H = int(H)
        self.ranges = _ranges(x0_ranges)
        self.avoid = avoid
        self.reach = reach

    def sample(self, rng, index=0):
        x0 = rng.uniform(self.ranges[:, 0], self.ranges[:, 1])
        return Environment(f"e{index}", x0, TimeVaryingSet(self.H, self.avoid),
                           TimeVaryingSet(self.H, self.reach))

    def box(self) -> Box:
        return Box(self.ranges[:, 0], self.ranges[:, 1])

    def describe(self):
        return {"space": "box-start", "H": self.H, "x0_ranges": self.ranges.tolist(),
                "avoid": self.avoid.to_dict(), "reach": self.reach.to_dict(),
                "distribution": "uniform"}


class FiniteSpace(EnvironmentSpace):
    """Uniform choice from an explicit list of environments."""

    def __init__(self, environments: Sequence[Environment]):
        self.environments = list(environments)
        if not self.environments:
            raise ValueError("finite environment space is empty")

    def sample(self, rng, index=0):
        if len(self.environments) == 1:
            return self.environments[0]
        return self.environments[int(rng.integers(0, len(self.environments)))]

    def describe(self):
        return {"space": "finite", "environments": [e.to_dict() for e in self.environments]}


def sample_environment(space: EnvironmentSpace, rng: np.random.Generator, index: int = 0) -> Environment:
    return space.sample(rng, index)


# ----------------------------------------------------------------------------
# estimation


@dataclass
class Estimate:
    d_hat: float
    N: int
    evaluations: list[SampleEvaluation]
    config: ScenarioConfig
    positives: int
    violations: int
    nulls: int
    mode: str
    context: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Deterministic summary; contains no timing or host information."""
        ctx = json.dumps(self.context, sort_keys=True, default=str)
        return {"d_hat": self.d_hat, "N": self.N, "epsilon": self.config.epsilon,
                "beta": self.config.beta, "metric": self.config.metric.value,
                "mode": self.mode, "seed": self.config.seed, "positives": self.positives,
                "violations": self.violations, "nulls": self.nulls,
                "config": self.config.to_dict(), "context": self.context,
                "config_hash": hashlib.sha256(
                    (json.dumps(self.config.to_dict(), sort_keys=True) + ctx).encode()).hexdigest()}


def _draw_pair(kind: MetricKind, space, scheme, abstraction, rng, index, margin, cfg):
    e = space.sample(rng, index)
    if kind.needs_feasible:
        draw = draw_feasible(scheme, e, abstraction, margin, rng, cfg.cap, cfg.norm.norm)
        return e, draw.controller, draw.traj_M, draw.attempts
    return e, scheme.sample(e, rng, 0.0), None, 1


def _run_sample(i: int, cfg: ScenarioConfig, space, scheme, system, abstraction,
                margin: float, keep: bool, record_env: bool) -> SampleEvaluation:
    seed = split_seed(cfg.seed, i)
    try:
        rng = np.random.default_rng(seed)
        e, u, traj_M, attempts = _draw_pair(cfg.metric, space, scheme, abstraction, rng, i, margin, cfg)
        ev = evaluate_sample(cfg.metric, e, u, system, abstraction, cfg.norm, traj_M,
                             index=i, seed=seed, attempts=attempts)
    except Exception as exc:  # noqa: BLE001 - re-raised with replay info
        raise SampleError(i, seed, exc) from exc
    if record_env or ev.violating:
        ev.env = e.to_dict()
    if not (keep or ev.violating):
        ev.traj_S = ev.traj_M = None
    return ev


def estimate(config: ScenarioConfig, space: EnvironmentSpace, scheme: ControllerScheme,
             system: DynamicalModel, abstraction: DynamicalModel, threads: int = 1,
             keep_trajectories: bool = False, record_env: bool = False,
             context: Optional[dict] = None) -> Estimate:
    """Run the scenario estimator.

    In adaptive mode sample ``i`` draws its controller at the running maximum
    of samples ``0..i-1``, so samples are evaluated in order and ``threads``
    has no effect.  Violating samples always keep their trajectories.
    """
    N = config.N
    args = (config, space, scheme, system, abstraction)
    if config.adaptive:
        evals, running = [], 0.0
        for i in range(N):
            ev = _run_sample(i, *args, running, keep_trajectories, record_env)
            running = max(running, ev.d)
            evals.append(ev)
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            evals = list(pool.map(
                lambda i: _run_sample(i, *args, 0.0, keep_trajectories, record_env), range(N)))
    else:
        evals = [_run_sample(i, *args, 0.0, keep_trajectories, record_env) for i in range(N)]
    return _aggregate(evals, config, "adaptive" if config.adaptive else "plain", context)


def _aggregate(evals, config, mode, context) -> Estimate:
    d_hat = max((ev.d for ev in evals), default=0.0)
    return Estimate(float(max(d_hat, 0.0)), len(evals), evals, config,
                    sum(ev.d > 0 for ev in evals), sum(ev.violating for ev in evals),
                    sum(ev.is_null for ev in evals), mode, dict(context or {}))


def estimate_exhaustive(config: ScenarioConfig, environments: Sequence[Environment], scheme,
                        system: DynamicalModel, abstraction: DynamicalModel) -> Estimate:
    """Evaluate every (environment, controller) pair of a finite problem.

    ``scheme.all_controllers(e)`` lists the candidates.  For the feasible
    metrics only controllers whose abstraction rollout meets the reach-avoid task
    are scored; an environment without any contributes a null sample.
    """
    kind = config.metric
    evals: list[SampleEvaluation] = []
    for e in environments:
        scored = 0
        for u in scheme.all_controllers(e):
            traj_M = simulate(abstraction, e.x0, u, e.H)
            if kind.needs_feasible and not satisfies(traj_M, e, 0.0, config.norm.norm):
                continue
            evals.append(evaluate_sample(kind, e, u, system, abstraction, config.norm, traj_M,
                                         index=len(evals)))
            scored += 1
        if scored == 0:
            evals.append(evaluate_sample(kind, e, NULL_CONTROLLER, system, abstraction,
                                         config.norm, index=len(evals)))
    return _aggregate(evals, config, "exhaustive", None)


@dataclass(frozen=True)
class ValidationResult:
    fraction: float
    violations: int
    M: int
    d_hat: float
    epsilon: float
    threshold: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.fraction <= self.threshold

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "violations": self.violations, "M": self.M,
                "d_hat": self.d_hat, "epsilon": self.epsilon, "threshold": self.threshold,
                "seed": self.seed, "passed": self.passed}


def validate_guarantee(d_hat: float, M: int, config: ScenarioConfig, space: EnvironmentSpace,
                       scheme: ControllerScheme, system: DynamicalModel,
                       abstraction: DynamicalModel, seed: int, threads: int = 1,
                       tolerance: float = 2.0) -> ValidationResult:
    """Fraction of fresh pairs where the abstraction meets the task tightened by
    ``d_hat`` while the system violates the untightened task.

    Pairs are drawn exactly as the estimator draws them at margin zero.  The
    pass threshold is ``tolerance * epsilon``.
    """
    if M < 1:
        raise ValueError(f"validation batch size must be >= 1, got {M}")
    if seed == config.seed:
        raise ValueError("validation seed must differ from the estimation seed")
    fresh = ScenarioConfig(config.epsilon, config.beta, M, seed, False, config.metric,
                           config.norm, config.cap)

    def one(i):
        s = split_seed(seed, i)
        rng = np.random.default_rng(s)
        try:
            e, u, traj_M, _ = _draw_pair(fresh.metric, space, scheme, abstraction, rng, i, 0.0, fresh)
            if u.is_null:
                return False
            if traj_M is None:
                traj_M = simulate(abstraction, e.x0, u, e.H)
            if not satisfies(traj_M, e, d_hat, config.norm.norm):
                return False
            traj_S = simulate(system, e.x0, u, e.H)
            return not satisfies(traj_S, e, 0.0, config.norm.norm)
        except Exception as exc:  # noqa: BLE001
            raise SampleError(i, s, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flags = list(pool.map(one, range(M)))
    else:
        flags = [one(i) for i in range(M)]
    bad = int(sum(flags))
    return ValidationResult(bad / M, bad, M, float(d_hat), config.epsilon,
                            tolerance * config.epsilon, int(seed))


def estimate_safe_env_fraction(d: float, space: EnvironmentSpace, scheme: ControllerScheme,
                               abstraction: DynamicalModel, samples: int, seed: int = 0,
                               cap: int = 100, norm_cfg: NormConfig = NormConfig()) -> float:
    """Monte Carlo share of environments that admit a controller at margin ``d``."""
    if d < 0:
        raise ValueError(f"margin must be >= 0, got {d}")
    if samples < 1:
        raise ValueError("need at least one sample")
    hits = 0
    for i in range(samples):
        rng = np.random.default_rng(split_seed(seed, i))
        e = space.sample(rng, i)
        draw = draw_feasible(scheme, e, abstraction, d, rng, cap, norm_cfg.norm)
        hits += not draw.controller.is_null
    return hits / samples
