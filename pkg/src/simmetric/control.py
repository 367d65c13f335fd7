"""Controllers, controller schemes and feasible-controller sampling.

A controller is a state-feedback policy ``act(t, x)``; open-loop sequences
simply ignore ``x``.  Every controller carries a JSON-ready ``descriptor``
from which its scheme can rebuild it exactly (``scheme.replay``).

A scheme draws controllers for an environment.  Randomness always comes from
an explicit ``numpy.random.Generator``; a scheme that needs per-step random
draws takes a single integer seed from that generator and stores it in the
descriptor, so replay never depends on generator state.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import DynamicalModel, LinearModel, simulate
from .geometry import Ball, Norm
from .reach import SafetyKernel, kernel_membership
from .spec import Environment, Trajectory, satisfies

__all__ = [
    "DareError",
    "SchemeError",
    "Controller",
    "NullController",
    "NULL_CONTROLLER",
    "FeedbackController",
    "SequenceController",
    "LeastRestrictiveController",
    "solve_dare",
    "riccati_map",
    "ControllerScheme",
    "LQRScheme",
    "lqr_scheme",
    "UniformSequenceScheme",
    "EnumeratedScheme",
    "SingletonScheme",
    "LeastRestrictiveScheme",
    "least_restrictive_scheme",
    "FeasibleDraw",
    "draw_feasible",
    "sample_feasible",
]

log = logging.getLogger(__name__)


class DareError(RuntimeError):
    """The Riccati iteration failed to converge or the closed loop is unstable."""


class SchemeError(ValueError):
    """An environment or descriptor the scheme cannot handle."""


# ----------------------------------------------------------------------------
# controllers


class Controller:
    is_null: bool = False

    def act(self, t: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def descriptor(self) -> dict:
        raise NotImplementedError


class NullController(Controller):
    """Placeholder for environments with no feasible controller."""

    is_null = True

    def act(self, t, x):
        raise RuntimeError("the null controller has no actions")

    @property
    def descriptor(self):
        return {"scheme": "null"}

    def __repr__(self):
        return "NULL_CONTROLLER"


NULL_CONTROLLER = NullController()


@dataclass(frozen=True, eq=False)
class FeedbackController(Controller):
    """``u = u_ff - K (x - x_ref)``."""

    K: np.ndarray
    u_ff: np.ndarray
    x_ref: np.ndarray
    info: dict = field(default_factory=dict)

    def act(self, t, x):
        return self.u_ff - self.K @ (np.asarray(x, dtype=float) - self.x_ref)

    @property
    def descriptor(self):
        return dict(self.info)


@dataclass(frozen=True, eq=False)
class SequenceController(Controller):
    """Open-loop control sequence, one row per step."""

    sequence: np.ndarray
    info: dict = field(default_factory=dict)

    def act(self, t, x):
        return self.sequence[t]

    @property
    def descriptor(self):
        return dict(self.info)


@dataclass(frozen=True, eq=False)
class CallableController(Controller):
    fn: Callable[[int, np.ndarray], np.ndarray]
    info: dict = field(default_factory=dict)

    def act(self, t, x):
        return np.asarray(self.fn(t, x), dtype=float)

    @property
    def descriptor(self):
        return dict(self.info)


@dataclass(frozen=True, eq=False)
class LeastRestrictiveController(Controller):
    """Random control unless it would bring the state near the kernel boundary.

    At step ``t`` the pre-drawn control ``r[t]`` is kept when the abstraction
    successor under it has kernel value at least ``band`` (after subtracting
    ``shift``).  Otherwise the control maximizing the successor value is used.
    """

    kernel: SafetyKernel
    random_controls: np.ndarray   # (H, m)
    band: float
    shift: float = 0.0
    info: dict = field(default_factory=dict)

    def act(self, t, x):
        K = self.kernel
        r = self.random_controls[t]
        nxt = K.model.step(x, r, t)
        if K.value(t + 1, nxt, self.shift) >= self.band:
            return r
        u, _ = K.best_control(t, x)
        return u

    @property
    def descriptor(self):
        return dict(self.info)


# ----------------------------------------------------------------------------
# Riccati


def riccati_map(P, A, B, Q, R) -> np.ndarray:
    """One step of the discrete Riccati recursion."""
    BtP = B.T @ P
    G = np.linalg.solve(R + BtP @ B, BtP @ A)
    return A.T @ P @ A - A.T @ P @ B @ G + Q


def solve_dare(A, B, Q, R, tol: float = 1e-10, max_iter: int = 100_000):
    """Infinite-horizon discrete LQR by fixed-point iteration from ``P = Q``.

    Returns ``(P, K)`` with ``K = (R + B'PB)^-1 B'PA``.  Raises
    :class:`DareError` if the iteration does not settle within ``max_iter`` or
    the closed loop ``A - BK`` is not strictly stable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")

    P = Q.copy()
    for _ in range(int(max_iter)):
        with np.errstate(over="ignore", invalid="ignore"):
            P_next = riccati_map(P, A, B, Q, R)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise DareError(f"Riccati iteration diverged for A={A.tolist()}, B={B.tolist()}")
        if np.max(np.abs(P_next - P)) <= tol:
            P = P_next
            break
        P = P_next
    else:
        raise DareError(f"Riccati iteration did not converge for A={A.tolist()}, B={B.tolist()}")
    if np.max(np.abs(P - riccati_map(P, A, B, Q, R))) > tol:
        raise DareError(f"Riccati residual above {tol} for A={A.tolist()}, B={B.tolist()}")

    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = max(abs(np.linalg.eigvals(A - B @ K)))
    if not rho < 1.0:
        raise DareError(f"closed loop unstable (spectral radius {rho:.6g}) for A={A.tolist()}, B={B.tolist()}")
    return P, K


# ----------------------------------------------------------------------------
# schemes


class ControllerScheme:
    """Samples controllers for an environment.

    ``monotone`` declares that feasibility at a larger margin implies
    feasibility at a smaller one for every controller of the scheme.
    """

    name: str = "scheme"
    monotone: bool = True

    def sample(self, e: Environment, rng: np.random.Generator, margin: float = 0.0) -> Controller:
        raise NotImplementedError

    def replay(self, descriptor: dict) -> Controller:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"scheme": self.name}


def _seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


class LQRScheme(ControllerScheme):
    """Infinite-horizon LQR tracking of the terminal-ball center of each environment.

    ``q`` is drawn log-uniformly from ``q_range``; ``Q = q I`` and ``R = I``.
    """

    name = "lqr"
    monotone = True

    def __init__(self, abstraction: LinearModel, q_range=(0.1, 100.0)):
        if not isinstance(abstraction, LinearModel):
            raise SchemeError("LQR synthesis needs a linear abstraction")
        lo, hi = float(q_range[0]), float(q_range[1])
        if not 0 < lo <= hi:
            raise SchemeError(f"q range must satisfy 0 < lo <= hi, got {q_range}")
        self.model = abstraction
        self.q_range = (lo, hi)

    @staticmethod
    def target_of(e: Environment) -> np.ndarray:
        K = e.reach.at(e.H)
        if not isinstance(K, Ball) or K.coords is not None:
            raise SchemeError(f"environment {e.id} has no terminal reach ball to track")
        return K.center

    def controller(self, q: float, x_ref) -> FeedbackController:
        A, B = self.model.A, self.model.B
        n, m = B.shape
        _, K = solve_dare(A, B, q * np.eye(n), np.eye(m))
        x_ref = np.asarray(x_ref, dtype=float)
        u_ff, *_ = np.linalg.lstsq(B, (np.eye(n) - A) @ x_ref, rcond=None)
        resid = float(np.linalg.norm((np.eye(n) - A) @ x_ref - B @ u_ff))
        if resid > 1e-9:
            log.debug("target %s is not an equilibrium; steady-state residual %.3g", x_ref, resid)
        info = {"scheme": self.name, "q": float(q), "x_ref": x_ref.tolist()}
        return FeedbackController(K, u_ff, x_ref, info)

    def sample(self, e, rng, margin=0.0):
        lo, hi = self.q_range
        q = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        return self.controller(q, self.target_of(e))

    def replay(self, descriptor):
        return self.controller(descriptor["q"], descriptor["x_ref"])

    def describe(self):
        return {"scheme": self.name, "q_range": list(self.q_range), "q_distribution": "log-uniform"}


def lqr_scheme(abstraction: LinearModel, q_range=(0.1, 100.0)) -> LQRScheme:
    return LQRScheme(abstraction, q_range)


class UniformSequenceScheme(ControllerScheme):
    """Open-loop sequences with i.i.d. uniform entries in the box ``[lo, hi]``.

    With ``levels`` set, each entry is instead uniform over that many evenly
    spaced values per coordinate.
    """

    name = "uniform-sequence"
    monotone = True

    def __init__(self, lo, hi, H: int, levels: Optional[int] = None):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise SchemeError("control box needs lo <= hi of equal length")
        if not np.all(np.isfinite(self.lo) & np.isfinite(self.hi)):
            raise SchemeError("uniform sequences need finite control bounds")
        self.H = int(H)
        self.levels = None if levels is None else int(levels)

    def controller(self, seed: int) -> SequenceController:
        rng = np.random.default_rng(seed)
        shape = (self.H, self.lo.size)
        if self.levels is None:
            seq = rng.uniform(self.lo, self.hi, size=shape)
        else:
            frac = rng.integers(0, self.levels, size=shape) / max(self.levels - 1, 1)
            seq = self.lo + frac * (self.hi - self.lo)
        return SequenceController(seq, {"scheme": self.name, "seed": int(seed)})

    def sample(self, e, rng, margin=0.0):
        if e.H != self.H:
            raise SchemeError(f"scheme horizon {self.H} does not match environment horizon {e.H}")
        return self.controller(_seed_from(rng))

    def replay(self, descriptor):
        return self.controller(descriptor["seed"])

    def describe(self):
        return {"scheme": self.name, "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "H": self.H, "levels": self.levels}


class EnumeratedScheme(ControllerScheme):
    """Uniform choice from a finite list of open-loop sequences."""

    name = "enumerated"
    monotone = True

    def __init__(self, sequences: Sequence):
        self.sequences = [np.asarray(s, dtype=float).reshape(len(s), -1) for s in sequences]
        if not self.sequences:
            raise SchemeError("enumerated scheme needs at least one sequence")

    def controller(self, index: int) -> SequenceController:
        return SequenceController(self.sequences[index], {"scheme": self.name, "index": int(index)})

    def all_controllers(self, e: Environment) -> list[Controller]:
        return [self.controller(i) for i in range(len(self.sequences))]

    def sample(self, e, rng, margin=0.0):
        return self.controller(int(rng.integers(0, len(self.sequences))))

    def replay(self, descriptor):
        return self.controller(descriptor["index"])

    def describe(self):
        return {"scheme": self.name, "size": len(self.sequences)}


class SingletonScheme(ControllerScheme):
    """One fixed controller per environment; the generator is never consulted."""

    name = "singleton"
    monotone = True

    def __init__(self, factory: Callable[[Environment], Controller], label: str = "singleton"):
        self.factory = factory
        self.label = label

    def sample(self, e, rng, margin=0.0):
        return self.factory(e)

    def replay(self, descriptor):
        raise SchemeError("singleton controllers are rebuilt from their environment")

    def all_controllers(self, e: Environment) -> list[Controller]:
        return [self.factory(e)]

    def describe(self):
        return {"scheme": self.name, "label": self.label}


class LeastRestrictiveScheme(ControllerScheme):
    """Least-restrictive safe controllers backed by a viability kernel.

    Each controller pre-draws one control per step, uniform over the kernel's
    discretized controls, and a safety band: a fixed value, or uniform on
    ``band=(lo, hi)``.  The default band is one grid-cell diagonal.

    Sampling at margin ``d`` uses the kernel lowered by ``d``, which is the
    kernel of the corridor shrunk by ``d``.  Environments whose start lies
    outside that kernel get the null controller.
    """

    name = "least-restrictive"
    monotone = True

    def __init__(self, kernel: SafetyKernel, band=None):
        self.kernel = kernel
        if band is None:
            band = kernel.grid.cell_diagonal
        if np.ndim(band) == 0:
            band = (float(band), float(band))
        lo, hi = float(band[0]), float(band[1])
        if not 0 <= lo <= hi:
            raise SchemeError(f"band must satisfy 0 <= lo <= hi, got {band}")
        self.band = (lo, hi)

    def controller(self, seed: int, shift: float = 0.0) -> LeastRestrictiveController:
        rng = np.random.default_rng(seed)
        U = self.kernel.controls
        idx = rng.integers(0, len(U), size=self.kernel.H)
        band = float(rng.uniform(*self.band)) if self.band[1] > self.band[0] else self.band[0]
        info = {"scheme": self.name, "seed": int(seed), "shift": float(shift), "band": band}
        return LeastRestrictiveController(self.kernel, U[idx], band, float(shift), info)

    def sample(self, e, rng, margin=0.0):
        if e.H != self.kernel.H:
            raise SchemeError(f"kernel horizon {self.kernel.H} does not match environment horizon {e.H}")
        if not kernel_membership(self.kernel, e.x0, shift=margin):
            return NULL_CONTROLLER
        return self.controller(_seed_from(rng), margin)

    def replay(self, descriptor):
        return self.controller(descriptor["seed"], descriptor.get("shift", 0.0))

    def describe(self):
        return {"scheme": self.name, "band": list(self.band),
                "random_control": "uniform over discretized controls",
                "kernel": self.kernel.describe()}


def least_restrictive_scheme(kernel: SafetyKernel, band=None) -> LeastRestrictiveScheme:
    return LeastRestrictiveScheme(kernel, band)


# ----------------------------------------------------------------------------
# rejection sampling


@dataclass(frozen=True)
class FeasibleDraw:
    controller: Controller
    attempts: int
    traj_M: Optional[Trajectory] = None


def draw_feasible(scheme: ControllerScheme, e: Environment, abstraction: DynamicalModel,
                  margin: float, rng: np.random.Generator, cap: int = 100,
                  norm: Norm | str = Norm.EUCLIDEAN) -> FeasibleDraw:
    """Rejection sampling; also returns the accepted abstraction rollout."""
    if cap < 1:
        raise ValueError(f"rejection cap must be >= 1, got {cap}")
    for attempt in range(1, cap + 1):
        u = scheme.sample(e, rng, margin)
        if u.is_null:
            return FeasibleDraw(NULL_CONTROLLER, attempt)
        traj = simulate(abstraction, e.x0, u, e.H)
        if satisfies(traj, e, margin, norm):
            return FeasibleDraw(u, attempt, traj)
    return FeasibleDraw(NULL_CONTROLLER, cap)


def sample_feasible(scheme: ControllerScheme, e: Environment, abstraction: DynamicalModel,
                    margin: float, rng: np.random.Generator, cap: int = 100,
                    norm: Norm | str = Norm.EUCLIDEAN) -> Controller:
    """First sampled controller whose abstraction run meets the tightened task.

    Returns the null controller after ``cap`` rejections, or immediately when
    the scheme itself reports that no feasible controller exists.
    """
    return draw_feasible(scheme, e, abstraction, margin, rng, cap, norm).controller
