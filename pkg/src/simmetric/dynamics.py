"""Discrete-time models and the rollout engine.

Models are immutable.  ``step`` accepts a single state ``(n,)`` with control
``(m,)`` or batches ``(k, n)`` / ``(k, m)``; batch evaluation is what the grid
solver in :mod:`simmetric.reach` relies on.

Custom models register with :func:`register_model` and are then constructible
from a config record ``{"type": <name>, ...params}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spec import Trajectory

__all__ = [
    "DivergenceError",
    "ModelError",
    "DynamicalModel",
    "LinearModel",
    "QuadrotorVertical",
    "KinematicBicycle",
    "register_model",
    "model_from_dict",
    "MODEL_REGISTRY",
    "simulate",
]


class ModelError(ValueError):
    """Inconsistent model parameters or mismatched dimensions."""


class DivergenceError(RuntimeError):
    """A rollout produced a non-finite state."""

    def __init__(self, step: int, state):
        super().__init__(f"non-finite state at step {step}: {state}")
        self.step = step
        self.state = state


class DynamicalModel:
    """Base interface.  Subclasses set ``n``, ``m`` and the control bounds."""

    n: int
    m: int

    @property
    def u_lo(self) -> np.ndarray:
        return np.full(self.m, -np.inf)

    @property
    def u_hi(self) -> np.ndarray:
        return np.full(self.m, np.inf)

    def clamp(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.u_lo, self.u_hi)

    def step(self, x, u, t: int = 0) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


MODEL_REGISTRY: dict[str, Callable[..., DynamicalModel]] = {}


def register_model(name: str):
    """Class decorator adding a model constructor to the registry."""

    def deco(cls):
        if name in MODEL_REGISTRY:
            raise ModelError(f"model type {name!r} is already registered")
        MODEL_REGISTRY[name] = cls
        cls.type_name = name
        return cls

    return deco


def model_from_dict(data: dict) -> DynamicalModel:
    params = dict(data)
    kind = params.pop("type", None)
    if kind not in MODEL_REGISTRY:
        raise ModelError(f"unknown model type {kind!r}; known: {sorted(MODEL_REGISTRY)}")
    try:
        return MODEL_REGISTRY[kind](**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for model {kind!r}: {exc}") from None


@register_model("linear")
@dataclass(frozen=True, eq=False)
class LinearModel(DynamicalModel):
    """``x+ = A x + B u``, unbounded controls."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ModelError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u, t=0):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return x @ self.A.T + u @ self.B.T

    def descriptor(self):
        return {"type": "linear", "A": self.A.tolist(), "B": self.B.tolist()}


@register_model("quadrotor")
@dataclass(frozen=True)
class QuadrotorVertical(DynamicalModel):
    """Vertical quadrotor, state ``(z, v)``, normalized thrust ``u`` in ``[0, 1]``.

    ``z+ = z + T v``, ``v+ = v + T (k u + g)``.
    """

    k: float
    T: float = 0.01
    g: float = -9.8

    n = 2
    m = 1

    def __post_init__(self):
        if not self.T > 0:
            raise ModelError(f"time step must be positive, got {self.T}")

    @property
    def u_lo(self):
        return np.zeros(1)

    @property
    def u_hi(self):
        return np.ones(1)

    def step(self, x, u, t=0):
        x = np.asarray(x, dtype=float)
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        z, v = x[..., 0], x[..., 1]
        out = np.empty(np.broadcast(z, u[..., 0]).shape + (2,))
        out[..., 0] = z + self.T * v
        out[..., 1] = v + self.T * (self.k * u[..., 0] + self.g)
        return out

    def descriptor(self):
        return {"type": "quadrotor", "k": self.k, "T": self.T, "g": self.g}


@register_model("bicycle")
@dataclass(frozen=True)
class KinematicBicycle(DynamicalModel):
    """Kinematic bicycle for lane keeping, explicit Euler at step ``dt``.

    State ``(x, y, v, theta)``: lateral offset from the lane center, position
    along the road, speed and heading (zero heading points along the road).
    Control ``(a, omega)``: acceleration in ``[-a_max, a_max]`` and steering in
    ``[-steer_max, steer_max]``.  Speed saturates to ``[0, v_max]``.
    """

    wheelbase: float = 2.5
    dt: float = 0.03
    v_max: float = 10.0 / 3.6
    steer_max: float = math.pi / 4
    a_max: float = 1.0

    n = 4
    m = 2

    def __post_init__(self):
        if not (self.wheelbase > 0 and self.dt > 0 and self.v_max > 0 and self.steer_max > 0):
            raise ModelError("bicycle parameters must be positive")

    @property
    def u_lo(self):
        return np.array([-self.a_max, -self.steer_max])

    @property
    def u_hi(self):
        return np.array([self.a_max, self.steer_max])

    def step(self, x, u, t=0):
        x = np.asarray(x, dtype=float)
        u = self.clamp(u)
        px, py, v, th = (x[..., i] for i in range(4))
        a, omega = u[..., 0], u[..., 1]
        out = np.empty(np.broadcast(px, a).shape + (4,))
        out[..., 0] = px + self.dt * v * np.sin(th)
        out[..., 1] = py + self.dt * v * np.cos(th)
        out[..., 2] = np.clip(v + self.dt * a, 0.0, self.v_max)
        out[..., 3] = th + self.dt * v / self.wheelbase * np.tan(omega)
        return out

    def descriptor(self):
        return {"type": "bicycle", "wheelbase": self.wheelbase, "dt": self.dt,
                "v_max": self.v_max, "steer_max": self.steer_max, "a_max": self.a_max}


def simulate(model: DynamicalModel, x0, controller, H: int) -> Trajectory:
    """Roll ``controller`` forward on ``model`` for ``H`` steps from ``x0``."""
    if getattr(controller, "is_null", False):
        raise ValueError("the null controller cannot be simulated")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != model.n:
        raise ModelError(f"x0 has dimension {x.size}, model expects {model.n}")
    states = np.empty((H + 1, model.n))
    controls = np.empty((H, model.m))
    states[0] = x
    for t in range(H):
        u = model.clamp(np.asarray(controller.act(t, states[t]), dtype=float).reshape(-1))
        if u.size != model.m:
            raise ModelError(f"controller returned {u.size} controls, model expects {model.m}")
        controls[t] = u
        with np.errstate(over="ignore", invalid="ignore"):
            states[t + 1] = model.step(states[t], u, t)
        if not np.all(np.isfinite(states[t + 1])):
            raise DivergenceError(t + 1, states[t + 1])
    return Trajectory(states, controls)
