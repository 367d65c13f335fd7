"""Per-sample distances for the four metric variants.

``ssm``             sup distance between the two rollouts, controllers unfiltered
``ssm-feasible``    the same, over controllers feasible for the abstraction
``ssm-falsifying``  the feasible sup distance, counted only when the system fails
``spec``            smallest boundary margin of the abstraction rollout,
                    counted only when the system fails

Samples with the null controller contribute ``0`` and carry no flags.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .control import Controller
from .dynamics import DynamicalModel, simulate
from .geometry import Norm
from .spec import (Environment, Trajectory, margin_of_violation, satisfies,
                   sup_trajectory_distance)

__all__ = ["SCHEMA_VERSION", "MetricKind", "NormConfig", "SampleEvaluation", "evaluate_sample"]

SCHEMA_VERSION = 1


class MetricKind(str, Enum):
    SSM = "ssm"
    SSM_FEASIBLE = "ssm-feasible"
    SSM_FALSIFYING = "ssm-falsifying"
    SPEC = "spec"

    @classmethod
    def parse(cls, value) -> "MetricKind":
        if isinstance(value, MetricKind):
            return value
        key = str(value).lower().replace("_", "-")
        for kind in cls:
            if kind.value == key or kind.name.lower().replace("_", "-") == key:
                return kind
        raise ValueError(f"unknown metric {value!r}; choose from {[k.value for k in cls]}")

    @property
    def needs_feasible(self) -> bool:
        return self is not MetricKind.SSM


@dataclass(frozen=True)
class NormConfig:
    """Norm for set distances and trajectory distances, plus the compared coordinates."""

    norm: Norm = Norm.EUCLIDEAN
    coords: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        if self.coords is not None:
            object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    def to_dict(self) -> dict:
        return {"norm": self.norm.value, "coords": None if self.coords is None else list(self.coords)}


@dataclass
class SampleEvaluation:
    """One row of the sample log."""

    index: int
    seed: int
    env_id: str
    descriptor: dict
    d: float
    sat_M: Optional[bool] = None
    sat_S: Optional[bool] = None
    attempts: int = 0
    env: Optional[dict] = None
    traj_S: Optional[Trajectory] = field(default=None, repr=False)
    traj_M: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def is_null(self) -> bool:
        return self.descriptor.get("scheme") == "null"

    @property
    def violating(self) -> bool:
        return self.sat_S is False

    def to_record(self) -> dict:
        rec = {"schema": SCHEMA_VERSION, "index": self.index, "seed": self.seed,
               "env_id": self.env_id, "controller": self.descriptor, "d": self.d,
               "sat_M": self.sat_M, "sat_S": self.sat_S, "attempts": self.attempts}
        if self.env is not None:
            rec["env"] = self.env
        return rec


def evaluate_sample(kind: MetricKind, e: Environment, u: Controller, system: DynamicalModel,
                    abstraction: DynamicalModel, norm_cfg: NormConfig = NormConfig(),
                    traj_M: Optional[Trajectory] = None, index: int = 0, seed: int = 0,
                    attempts: int = 0) -> SampleEvaluation:
    """Roll out ``u`` on both models and score the pair under ``kind``.

    ``traj_M`` may carry an abstraction rollout already computed during
    rejection sampling; it is reused instead of simulated again.
    """
    kind = MetricKind.parse(kind)
    if u.is_null:
        return SampleEvaluation(index, seed, e.id, u.descriptor, 0.0, attempts=attempts)
    if traj_M is None:
        traj_M = simulate(abstraction, e.x0, u, e.H)
    traj_S = simulate(system, e.x0, u, e.H)
    sat_M = satisfies(traj_M, e, 0.0, norm_cfg.norm)
    sat_S = satisfies(traj_S, e, 0.0, norm_cfg.norm)

    if kind is MetricKind.SPEC:
        d = margin_of_violation(traj_M, not sat_S, e, norm_cfg.norm)
    else:
        d = sup_trajectory_distance(traj_S, traj_M, norm_cfg.norm, norm_cfg.coords)
        if kind is MetricKind.SSM_FALSIFYING and sat_S:
            d = 0.0
    if math.isnan(d):
        raise ValueError(f"metric evaluated to NaN for environment {e.id}")
    return SampleEvaluation(index, seed, e.id, u.descriptor, float(d), sat_M, sat_S, attempts,
                            traj_S=traj_S, traj_M=traj_M)
