"""Composable sets with signed-distance evaluation.

Every set knows how to compute ``h(x, K)``: the distance to ``K`` when ``x``
lies outside, and minus the distance to the complement when ``x`` lies inside.
Modified (expanded / contracted) sets are never built explicitly; membership
in ``K ⊕ d`` is the threshold test ``h(x, K) <= d``.

Distances are evaluated in either the Euclidean or the infinity norm.  Balls
are balls of the active norm, so ``h`` stays exact for both choices.

All evaluation routines accept a single state of shape ``(n,)`` or a batch of
shape ``(m, n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Norm",
    "GeometryError",
    "SetExpr",
    "Empty",
    "All",
    "Ball",
    "Box",
    "HalfSpace",
    "Complement",
    "Union",
    "signed_distance",
    "contains_with_margin",
    "set_from_dict",
]


class Norm(str, Enum):
    EUCLIDEAN = "euclidean"
    INFINITY = "inf"

    @classmethod
    def parse(cls, value: "Norm | str | None") -> "Norm":
        if value is None:
            return cls.EUCLIDEAN
        if isinstance(value, Norm):
            return value
        key = str(value).lower()
        aliases = {"euclidean": cls.EUCLIDEAN, "l2": cls.EUCLIDEAN, "2": cls.EUCLIDEAN,
                   "inf": cls.INFINITY, "infinity": cls.INFINITY, "linf": cls.INFINITY}
        if key not in aliases:
            raise GeometryError(f"unknown norm {value!r}")
        return aliases[key]


class GeometryError(ValueError):
    """Malformed set or a state whose dimension does not fit the set."""


def _vec(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise GeometryError(f"{name} must be non-empty")
    return arr


def _coords(coords) -> Optional[tuple[int, ...]]:
    if coords is None:
        return None
    out = tuple(int(c) for c in coords)
    if len(set(out)) != len(out):
        raise GeometryError(f"projection indices must be distinct, got {out}")
    if any(c < 0 for c in out):
        raise GeometryError(f"projection indices must be non-negative, got {out}")
    return out


class SetExpr:
    """Base class for all set expressions."""

    coords: Optional[tuple[int, ...]] = None

    # dimension of the (projected) space the set lives in; None = any
    def _dim(self) -> Optional[int]:
        return None

    def _project(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[-1]
        if self.coords is not None:
            if max(self.coords) >= n:
                raise GeometryError(
                    f"projection {self.coords} out of range for state dimension {n}")
            X = X[..., list(self.coords)]
        dim = self._dim()
        if dim is not None and X.shape[-1] != dim:
            raise GeometryError(
                f"state dimension {X.shape[-1]} does not match set dimension {dim}")
        return X

    def _sd(self, X: np.ndarray, norm: Norm) -> np.ndarray:
        raise NotImplementedError

    def _contains(self, X: np.ndarray, norm: Norm) -> np.ndarray:
        """Direct membership arithmetic, independent of the distance code."""
        raise NotImplementedError

    def sd(self, X: np.ndarray, norm: Norm) -> np.ndarray:
        return self._sd(self._project(X), norm)

    def contains(self, x, norm: "Norm | str" = "euclidean") -> np.ndarray | bool:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        res = self._contains(self._project(np.atleast_2d(X)), Norm.parse(norm))
        return bool(res[0]) if single else res

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _with_coords(self, d: dict) -> dict:
        if self.coords is not None:
            d["coords"] = list(self.coords)
        return d


@dataclass(frozen=True)
class Empty(SetExpr):
    def _sd(self, X, norm):
        return np.full(X.shape[0], math.inf)

    def _contains(self, X, norm):
        return np.zeros(X.shape[0], dtype=bool)

    def _project(self, X):
        return X

    def to_dict(self):
        return {"type": "empty"}


@dataclass(frozen=True)
class All(SetExpr):
    def _sd(self, X, norm):
        return np.full(X.shape[0], -math.inf)

    def _contains(self, X, norm):
        return np.ones(X.shape[0], dtype=bool)

    def _project(self, X):
        return X

    def to_dict(self):
        return {"type": "all"}


@dataclass(frozen=True, eq=False)
class Ball(SetExpr):
    """Closed ball ``{x : ||x - center|| <= radius}`` in the evaluation norm."""

    center: np.ndarray
    radius: float
    coords: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "coords", _coords(self.coords))
        if not self.radius >= 0:
            raise GeometryError(f"ball radius must be >= 0, got {self.radius}")
        if self.coords is not None and len(self.coords) != self.center.size:
            raise GeometryError("projection length must match the ball center")

    def _dim(self):
        return self.center.size

    def _sd(self, X, norm):
        diff = X - self.center
        if norm is Norm.INFINITY:
            dist = np.max(np.abs(diff), axis=-1)
        else:
            dist = np.linalg.norm(diff, axis=-1)
        return dist - self.radius

    def _contains(self, X, norm):
        if norm is Norm.INFINITY:
            return np.all(np.abs(X - self.center) <= self.radius, axis=-1)
        return np.sum((X - self.center) ** 2, axis=-1) <= self.radius ** 2

    def to_dict(self):
        return self._with_coords({"type": "ball", "center": self.center.tolist(),
                                  "radius": self.radius})


@dataclass(frozen=True, eq=False)
class Box(SetExpr):
    """Closed axis-aligned box ``lo <= x <= hi``."""

    lo: np.ndarray
    hi: np.ndarray
    coords: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec(self.lo, "lo"))
        object.__setattr__(self, "hi", _vec(self.hi, "hi"))
        object.__setattr__(self, "coords", _coords(self.coords))
        if self.lo.shape != self.hi.shape:
            raise GeometryError("box bounds must have the same length")
        if np.any(self.lo > self.hi):
            raise GeometryError(f"box requires lo <= hi, got {self.lo} / {self.hi}")
        if self.coords is not None and len(self.coords) != self.lo.size:
            raise GeometryError("projection length must match the box bounds")

    def _dim(self):
        return self.lo.size

    def _sd(self, X, norm):
        below = self.lo - X
        above = X - self.hi
        excess = np.maximum(np.maximum(below, above), 0.0)
        if norm is Norm.INFINITY:
            outside = np.max(excess, axis=-1)
        else:
            outside = np.linalg.norm(excess, axis=-1)
        # depth to the nearest face; identical for both norms
        depth = np.min(np.minimum(-below, -above), axis=-1)
        return np.where(outside > 0.0, outside, -depth)

    def _contains(self, X, norm):
        return np.all((X >= self.lo) & (X <= self.hi), axis=-1)

    def to_dict(self):
        return self._with_coords({"type": "box", "lo": self.lo.tolist(),
                                  "hi": self.hi.tolist()})


@dataclass(frozen=True, eq=False)
class HalfSpace(SetExpr):
    """``{x : normal . x >= offset}``."""

    normal: np.ndarray
    offset: float
    coords: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "normal", _vec(self.normal, "normal"))
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "coords", _coords(self.coords))
        if not np.any(self.normal != 0):
            raise GeometryError("half-space normal must be non-zero")
        if self.coords is not None and len(self.coords) != self.normal.size:
            raise GeometryError("projection length must match the normal")

    def _dim(self):
        return self.normal.size

    def _sd(self, X, norm):
        # distance to a hyperplane is measured with the dual norm of the normal
        scale = np.sum(np.abs(self.normal)) if norm is Norm.INFINITY else np.linalg.norm(self.normal)
        return (self.offset - X @ self.normal) / scale

    def _contains(self, X, norm):
        return X @ self.normal >= self.offset

    def to_dict(self):
        return self._with_coords({"type": "halfspace", "normal": self.normal.tolist(),
                                  "offset": self.offset})


@dataclass(frozen=True)
class Complement(SetExpr):
    inner: SetExpr
    coords: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "coords", _coords(self.coords))

    def _sd(self, X, norm):
        return -self.inner.sd(X, norm)

    def _contains(self, X, norm):
        return ~np.asarray(self.inner.contains(X, norm), dtype=bool)

    def to_dict(self):
        return self._with_coords({"type": "complement", "inner": self.inner.to_dict()})


@dataclass(frozen=True)
class Union(SetExpr):
    """Union of members; signed distance is the pointwise minimum.

    Exact outside the union and whenever member interiors are disjoint; inside
    overlapping members it under-reports the depth.
    """

    members: tuple[SetExpr, ...] = field(default_factory=tuple)
    coords: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "coords", _coords(self.coords))

    def _sd(self, X, norm):
        if not self.members:
            return np.full(X.shape[0], math.inf)
        return np.min(np.stack([m.sd(X, norm) for m in self.members]), axis=0)

    def _contains(self, X, norm):
        if not self.members:
            return np.zeros(X.shape[0], dtype=bool)
        return np.any(np.stack([np.asarray(m.contains(X, norm), dtype=bool) for m in self.members]),
                      axis=0)

    def to_dict(self):
        return self._with_coords({"type": "union",
                                  "members": [m.to_dict() for m in self.members]})


def signed_distance(x, K: SetExpr, norm: Norm | str = Norm.EUCLIDEAN):
    """Signed distance of ``x`` to ``K``.

    Returns a float for a single state and an array for a batch of states.
    ``Empty`` gives ``+inf`` and ``All`` gives ``-inf``.
    """
    norm = Norm.parse(norm)
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1)
    single = X.ndim == 1
    out = K.sd(np.atleast_2d(X), norm)
    return float(out[0]) if single else out


def contains_with_margin(x, K: SetExpr, d: float, norm: Norm | str = Norm.EUCLIDEAN):
    """Membership of ``x`` in ``K ⊕ d`` (``K ⊖ |d|`` for negative ``d``).

    Ties count as membership.
    """
    return signed_distance(x, K, norm) <= d


def set_from_dict(data: dict) -> SetExpr:
    """Build a set from its tagged-record form, e.g. ``{"type": "box", ...}``."""
    if not isinstance(data, dict) or "type" not in data:
        raise GeometryError(f"set record needs a 'type' field: {data!r}")
    kind = str(data["type"]).lower()
    fields = {k: v for k, v in data.items() if k != "type"}
    allowed = {
        "empty": set(), "all": set(),
        "ball": {"center", "radius", "coords"},
        "box": {"lo", "hi", "coords"},
        "halfspace": {"normal", "offset", "coords"},
        "complement": {"inner", "coords"},
        "union": {"members", "coords"},
    }
    if kind not in allowed:
        raise GeometryError(f"unknown set type {kind!r}")
    unknown = set(fields) - allowed[kind]
    if unknown:
        raise GeometryError(f"unknown keys for {kind} set: {sorted(unknown)}")
    try:
        if kind == "empty":
            return Empty()
        if kind == "all":
            return All()
        if kind == "ball":
            return Ball(fields["center"], fields["radius"], fields.get("coords"))
        if kind == "box":
            return Box(fields["lo"], fields["hi"], fields.get("coords"))
        if kind == "halfspace":
            return HalfSpace(fields["normal"], fields["offset"], fields.get("coords"))
        if kind == "complement":
            return Complement(set_from_dict(fields["inner"]), fields.get("coords"))
        return Union(tuple(set_from_dict(m) for m in fields.get("members", [])),
                     fields.get("coords"))
    except KeyError as exc:
        raise GeometryError(f"{kind} set is missing field {exc.args[0]!r}") from None


def as_set(value: "SetExpr | dict | Sequence") -> SetExpr:
    if isinstance(value, SetExpr):
        return value
    if isinstance(value, dict):
        return set_from_dict(value)
    raise GeometryError(f"cannot interpret {value!r} as a set")
