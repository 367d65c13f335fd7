"""Problem assembly: built-in presets and explicit configuration records.

A :class:`Problem` bundles everything an estimation run needs: the system,
the abstraction, the environment space, the controller scheme used for
feasible sampling, and the (possibly different) scheme used for plain SSM.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .control import (CallableController, ControllerScheme, LeastRestrictiveScheme, LQRScheme,
                      SingletonScheme, UniformSequenceScheme)
from .dynamics import DynamicalModel, KinematicBicycle, LinearModel, QuadrotorVertical, model_from_dict
from .geometry import Box, Complement, Empty, SetExpr, as_set
from .metrics import MetricKind, NormConfig
from .reach import GridSpec, SafetyKernel, compute_kernel
from .scenario import BoxStartSpace, EnvironmentSpace, TargetBallSpace

__all__ = ["ConfigError", "Problem", "PRESETS", "build_preset", "build_problem"]


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class Problem:
    name: str
    system: DynamicalModel
    abstraction: DynamicalModel
    space: EnvironmentSpace
    scheme: ControllerScheme
    raw_scheme: ControllerScheme
    norm: NormConfig = field(default_factory=NormConfig)
    corridor: Optional[SetExpr] = None
    kernel: Optional[SafetyKernel] = None
    grid: Optional[GridSpec] = None
    controls: Optional[np.ndarray] = None
    domain: Any = None
    info: dict = field(default_factory=dict)

    @property
    def H(self) -> int:
        return self.space.H

    def scheme_for(self, kind: MetricKind) -> ControllerScheme:
        return self.scheme if MetricKind.parse(kind).needs_feasible else self.raw_scheme

    def kernel_for(self, model: DynamicalModel, margin: float = 0.0) -> SafetyKernel:
        if self.corridor is None or self.grid is None:
            raise ConfigError(f"problem {self.name!r} has no corridor/grid for kernel computation")
        return compute_kernel(model, self.corridor, margin, self.grid, self.controls, self.H,
                              self.norm.norm)

    def describe(self) -> dict:
        return {"name": self.name, "system": self.system.descriptor(),
                "abstraction": self.abstraction.descriptor(), "space": self.space.describe(),
                "scheme": _scheme_summary(self.scheme), "raw_scheme": _scheme_summary(self.raw_scheme),
                "norm": self.norm.to_dict(), **self.info}


def _scheme_summary(scheme: ControllerScheme) -> dict:
    d = dict(scheme.describe())
    d.pop("kernel", None)
    return d


# ----------------------------------------------------------------------------
# presets

RUNNING_A = [[2.0, 0.0], [0.0, 0.1]]


def running_example() -> Problem:
    system = LinearModel(RUNNING_A, [[1.0], [0.0]])
    abstraction = LinearModel(RUNNING_A, [[1.0], [0.1]])
    space = TargetBallSpace(20, [0.0, 0.0], [[-4.0, 4.0], [0.0, 0.0]], 0.5)
    scheme = LQRScheme(abstraction, (0.1, 100.0))
    return Problem("running-example", system, abstraction, space, scheme, scheme)


QUAD_CORRIDOR = Box([0.5], [2.5], coords=(0,))
QUAD_GRID = GridSpec((0.0, -4.0), (3.0, 4.0), (201, 201), ("z", "v"))
QUAD_START = ((0.5, 2.5), (-3.0, 4.0))
QUAD_BAND_MAX = 0.2


def quadrotor(name: str, k_system: float, k_abstraction: float, grid: GridSpec = QUAD_GRID,
              H: int = 100, band=None) -> Problem:
    system = QuadrotorVertical(k_system)
    abstraction = QuadrotorVertical(k_abstraction)
    controls = np.linspace(0.0, 1.0, 11)
    kernel = compute_kernel(abstraction, QUAD_CORRIDOR, 0.0, grid, controls, H)
    if band is None:
        band = (grid.cell_diagonal, QUAD_BAND_MAX)
    space = BoxStartSpace(H, QUAD_START, avoid=Complement(QUAD_CORRIDOR))
    return Problem(name, system, abstraction, space, LeastRestrictiveScheme(kernel, band),
                   UniformSequenceScheme([0.0], [1.0], H), NormConfig("euclidean", (0,)),
                   QUAD_CORRIDOR, kernel, grid, controls, QUAD_START,
                   {"k_system": k_system, "k_abstraction": k_abstraction})


def lane_keeper(wheelbase: float, gains=(1.5, 2.5), target_speed: float = 10.0 / 3.6):
    """Proportional steering toward the lane center at a held speed."""
    k_x, k_th = gains

    def factory(e):
        def act(t, x):
            a = 1.0 if x[2] < target_speed else 0.0
            return np.array([a, -k_x * x[0] - k_th * x[3]])
        return CallableController(act, {"scheme": "singleton", "label": "lane-keeper",
                                        "gains": [k_x, k_th], "env": e.id})
    return SingletonScheme(factory, "lane-keeper")


def bicycle_demo() -> Problem:
    abstraction = KinematicBicycle()
    system = KinematicBicycle(wheelbase=3.0)
    H = 200
    lane = Box([-0.5], [0.5], coords=(0,))
    space = BoxStartSpace(H, [[-0.2, 0.2], [0.0, 0.0], [0.0, 0.0], [-math.pi / 4, math.pi / 4]],
                          avoid=Empty(), reach=lane)
    scheme = lane_keeper(abstraction.wheelbase)
    return Problem("bicycle-demo", system, abstraction, space, scheme, scheme,
                   NormConfig("euclidean", (0,)), info={"note": "model-mismatch demo, wheelbase 3.0 vs 2.5"})


PRESETS = {
    "running-example": running_example,
    "quadrotor-conservative": functools.partial(quadrotor, "quadrotor-conservative", 18.0, 17.0),
    "quadrotor-optimistic": functools.partial(quadrotor, "quadrotor-optimistic", 17.0, 18.0),
    "bicycle-demo": bicycle_demo,
}


@functools.lru_cache(maxsize=None)
def build_preset(name: str) -> Problem:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]()


# ----------------------------------------------------------------------------
# explicit configuration


def _take(block: dict, where: str, allowed: set, required: set = frozenset()) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = set(required) - set(block)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")
    return block


def _set(value, where: str) -> SetExpr:
    try:
        return as_set(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _space(block: dict) -> EnvironmentSpace:
    kind = block.get("space")
    if kind == "target-ball":
        b = _take(block, "environment", {"space", "H", "x0", "target_ranges", "radius", "avoid"},
                  {"H", "x0", "target_ranges", "radius"})
        return TargetBallSpace(b["H"], b["x0"], b["target_ranges"], b["radius"],
                               _set(b.get("avoid", {"type": "empty"}), "environment.avoid"))
    if kind == "box-start":
        b = _take(block, "environment", {"space", "H", "x0_ranges", "avoid", "reach"},
                  {"H", "x0_ranges"})
        return BoxStartSpace(b["H"], b["x0_ranges"],
                             _set(b.get("avoid", {"type": "empty"}), "environment.avoid"),
                             _set(b.get("reach", {"type": "all"}), "environment.reach"))
    raise ConfigError(f"environment.space must be 'target-ball' or 'box-start', got {kind!r}")


def _grid(block: Optional[dict]) -> GridSpec:
    if block is None:
        return GridSpec()
    b = _take(block, "scheme.grid", {"lo", "hi", "counts", "names"})
    return GridSpec(**b)


def _scheme(block: dict, where: str, abstraction, space, norm) -> tuple[ControllerScheme, dict]:
    kind = block.get("type") if isinstance(block, dict) else None
    extra: dict = {}
    if kind == "lqr":
        b = _take(block, where, {"type", "q_range"})
        if not isinstance(abstraction, LinearModel):
            raise ConfigError(f"{where}: lqr needs a linear abstraction")
        return LQRScheme(abstraction, b.get("q_range", (0.1, 100.0))), extra
    if kind == "uniform-sequence":
        b = _take(block, where, {"type", "lo", "hi", "levels"})
        lo = b.get("lo", abstraction.u_lo.tolist())
        hi = b.get("hi", abstraction.u_hi.tolist())
        return UniformSequenceScheme(lo, hi, space.H, b.get("levels")), extra
    if kind == "least-restrictive":
        b = _take(block, where, {"type", "corridor", "grid", "controls", "band"}, {"corridor"})
        corridor = _set(b["corridor"], f"{where}.corridor")
        grid = _grid(b.get("grid"))
        n_ctrl = int(b.get("controls", 11))
        controls = np.linspace(abstraction.u_lo, abstraction.u_hi, n_ctrl)
        kernel = compute_kernel(abstraction, corridor, 0.0, grid, controls, space.H, norm.norm)
        extra = {"corridor": corridor, "kernel": kernel, "grid": grid, "controls": controls}
        return LeastRestrictiveScheme(kernel, b.get("band")), extra
    raise ConfigError(f"{where}.type must be one of lqr, uniform-sequence, least-restrictive; got {kind!r}")


def build_problem(cfg: dict) -> Problem:
    """Problem from an explicit record with system/abstraction/environment/scheme blocks."""
    _take(cfg, "problem", {"system", "abstraction", "environment", "scheme", "ssm_scheme",
                           "norm", "coords", "start_domain"},
          {"system", "abstraction", "environment", "scheme"})
    try:
        system = model_from_dict(cfg["system"])
        abstraction = model_from_dict(cfg["abstraction"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if system.n != abstraction.n or system.m != abstraction.m:
        raise ConfigError("system and abstraction must share state and control dimensions")
    try:
        norm = NormConfig(cfg.get("norm", "euclidean"), cfg.get("coords"))
        space = _space(cfg["environment"])
        scheme, extra = _scheme(cfg["scheme"], "scheme", abstraction, space, norm)
        raw = scheme
        if "ssm_scheme" in cfg:
            raw, _ = _scheme(cfg["ssm_scheme"], "ssm_scheme", abstraction, space, norm)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid problem configuration: {exc}") from None
    domain = cfg.get("start_domain")
    if domain is None and isinstance(space, BoxStartSpace) and space.ranges.shape[0] == 2:
        domain = tuple(map(tuple, space.ranges.tolist()))
    return Problem("custom", system, abstraction, space, scheme, raw, norm,
                   extra.get("corridor"), extra.get("kernel"), extra.get("grid"),
                   extra.get("controls"), domain)
