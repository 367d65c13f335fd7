"""Reach-avoid environments, satisfaction and trajectory distances.

A specification asks a trajectory to stay out of ``A(t)`` and inside ``R(t)``
for every step ``t`` in ``0..H``.  Tightening it by a margin ``d`` expands the
avoid sets and contracts the reach sets by ``d``; both are expressed as
thresholds on the signed distance.

Boundary convention (conservative toward violation):

* avoid: ``h(x, A) <= d`` counts as hitting the expanded avoid set;
* reach: ``h(x, R) < -d`` is required, so a state exactly on the contracted
  boundary is outside.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .geometry import Norm, SetExpr, as_set, signed_distance

__all__ = [
    "SpecError",
    "TimeVaryingSet",
    "Environment",
    "Trajectory",
    "satisfies",
    "boundary_distances",
    "step_margins",
    "margin_of_violation",
    "sup_trajectory_distance",
]


class SpecError(ValueError):
    """Horizon mismatch or malformed environment."""


@dataclass(frozen=True)
class TimeVaryingSet:
    """A set per time step; steps without an entry use ``default``."""

    H: int
    default: SetExpr
    entries: Mapping[int, SetExpr] = field(default_factory=dict)

    def __post_init__(self):
        if self.H < 0:
            raise SpecError(f"horizon must be >= 0, got {self.H}")
        entries = {int(t): v for t, v in dict(self.entries).items()}
        bad = [t for t in entries if not 0 <= t <= self.H]
        if bad:
            raise SpecError(f"set entries reference steps outside 0..{self.H}: {sorted(bad)}")
        object.__setattr__(self, "entries", entries)

    def at(self, t: int) -> SetExpr:
        return self.entries.get(t, self.default)

    def to_dict(self) -> dict:
        return {"H": self.H, "default": self.default.to_dict(),
                "entries": {str(t): K.to_dict() for t, K in sorted(self.entries.items())}}

    @classmethod
    def from_dict(cls, data: dict) -> "TimeVaryingSet":
        return cls(int(data["H"]), as_set(data.get("default", {"type": "empty"})),
                   {int(t): as_set(v) for t, v in data.get("entries", {}).items()})


@dataclass(frozen=True)
class Environment:
    """One reach-avoid scenario: start state, avoid schedule, reach schedule."""

    id: str
    x0: np.ndarray
    avoid: TimeVaryingSet
    reach: TimeVaryingSet
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if self.avoid.H != self.reach.H:
            raise SpecError(f"avoid horizon {self.avoid.H} != reach horizon {self.reach.H}")

    @property
    def H(self) -> int:
        return self.avoid.H

    def to_dict(self) -> dict:
        return {"id": self.id, "x0": self.x0.tolist(), "avoid": self.avoid.to_dict(),
                "reach": self.reach.to_dict(), "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        return cls(str(data["id"]), data["x0"], TimeVaryingSet.from_dict(data["avoid"]),
                   TimeVaryingSet.from_dict(data["reach"]), dict(data.get("params", {})))


@dataclass(frozen=True)
class Trajectory:
    """States ``x(0..H)`` and the controls ``u(0..H-1)`` that produced them."""

    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        controls = np.asarray(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1) if controls.size else controls.reshape(0, 0)
        if controls.shape[0] != states.shape[0] - 1:
            raise SpecError(
                f"{states.shape[0]} states need {states.shape[0] - 1} controls, got {controls.shape[0]}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def H(self) -> int:
        return self.states.shape[0] - 1

    def to_csv(self, path) -> None:
        """One row per step: ``t, x0.., u0..``; the final step has no control."""
        n = self.states.shape[1]
        m = self.controls.shape[1] if self.controls.ndim == 2 else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)])
            for t in range(self.H + 1):
                u = [repr(float(v)) for v in self.controls[t]] if t < self.H else [""] * m
                w.writerow([t] + [repr(float(v)) for v in self.states[t]] + u)


def _check_horizon(traj: Trajectory, H: int) -> None:
    if traj.H != H:
        raise SpecError(f"trajectory horizon {traj.H} does not match environment horizon {H}")


def _schedule_distance(states: np.ndarray, sched: TimeVaryingSet, norm) -> np.ndarray:
    # default set evaluated in one batch, explicit entries one by one
    out = np.asarray(signed_distance(states, sched.default, norm), dtype=float).copy()
    for t, K in sched.entries.items():
        out[t] = signed_distance(states[t], K, norm)
    return out


def boundary_distances(traj: Trajectory, e: Environment,
                       norm: Norm | str = Norm.EUCLIDEAN) -> tuple[np.ndarray, np.ndarray]:
    """Per-step ``h(x(t), A(t))`` and ``h(x(t), R(t))``."""
    _check_horizon(traj, e.H)
    return (_schedule_distance(traj.states, e.avoid, norm),
            _schedule_distance(traj.states, e.reach, norm))


def step_margins(traj: Trajectory, e: Environment, norm: Norm | str = Norm.EUCLIDEAN) -> np.ndarray:
    """Per-step ``min{h(x(t), A(t)), -h(x(t), R(t))}``; ``+inf`` when unconstrained."""
    hA, hR = boundary_distances(traj, e, norm)
    return np.minimum(hA, -hR)


def satisfies(traj: Trajectory, e: Environment, margin: float = 0.0,
              norm: Norm | str = Norm.EUCLIDEAN) -> bool:
    """Whether ``traj`` meets the reach-avoid task of ``e`` tightened by ``margin``."""
    if margin < 0:
        raise SpecError(f"specification margin must be >= 0, got {margin}")
    hA, hR = boundary_distances(traj, e, norm)
    return bool(np.all(hA > margin) and np.all(hR < -margin))


def margin_of_violation(traj_M: Trajectory, system_violates: bool, e: Environment,
                        norm: Norm | str = Norm.EUCLIDEAN) -> float:
    """Smallest boundary margin of the abstraction run, counted only if the system failed.

    An environment with no constraint at all yields ``+inf`` when the system
    violates, which cannot happen for a real violation.
    """
    if not system_violates:
        return 0.0
    return float(np.min(step_margins(traj_M, e, norm)))


def sup_trajectory_distance(traj_S: Trajectory, traj_M: Trajectory,
                            norm: Norm | str = Norm.EUCLIDEAN,
                            coords: Optional[Sequence[int]] = None) -> float:
    """``max_t ||x_S(t) - x_M(t)||`` over the selected coordinates."""
    if traj_S.H != traj_M.H:
        raise SpecError(f"horizon mismatch: {traj_S.H} vs {traj_M.H}")
    diff = traj_S.states - traj_M.states
    if coords is not None:
        diff = diff[:, list(coords)]
    if Norm.parse(norm) is Norm.INFINITY:
        per_step = np.max(np.abs(diff), axis=1)
    else:
        per_step = np.linalg.norm(diff, axis=1)
    return float(np.max(per_step))
