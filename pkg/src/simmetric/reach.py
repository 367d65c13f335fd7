"""Grid viability kernels for two-dimensional models.

Discrete-time safety value iteration on a rectangular grid::

    V_H(x) = m(x)
    V_t(x) = min(m(x), max_u V_{t+1}(f(x, u)))

with ``m(x) = -h(x, corridor) - d`` and bilinear interpolation for successors
that fall between nodes.  The kernel is ``{x : V_0(x) >= 0}``.

Successors that leave the grid are unsafe.  They receive the finite value
``min(m) - 1`` rather than ``-inf``, which keeps every stored value finite and
keeps the interpolation weights well defined.  Because the sentinel moves with
``m``, raising the margin by ``d`` lowers every value by exactly ``d``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import DynamicalModel
from .geometry import Norm, SetExpr, signed_distance

__all__ = [
    "GridSpec",
    "SafetyKernel",
    "ContainmentReport",
    "compute_kernel",
    "kernel_membership",
    "kernel_containment",
    "export_kernel",
    "read_kernel_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned node grid; node ``(i, j)`` sits at ``lo + (i, j) * spacing``."""

    lo: tuple[float, float] = (0.0, -4.0)
    hi: tuple[float, float] = (3.0, 4.0)
    counts: tuple[int, int] = (201, 201)
    names: tuple[str, str] = ("x0", "x1")

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        if len(self.lo) != 2 or len(self.hi) != 2 or len(self.counts) != 2:
            raise ValueError("grids are two-dimensional")
        if min(self.counts) < 2:
            raise ValueError(f"need at least 2 nodes per axis, got {self.counts}")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"grid bounds must satisfy lo < hi, got {self.lo} / {self.hi}")

    @property
    def spacing(self) -> tuple[float, float]:
        return tuple((h - l) / (c - 1) for l, h, c in zip(self.lo, self.hi, self.counts))

    @property
    def cell_diagonal(self) -> float:
        return float(np.hypot(*self.spacing))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.linspace(l, h, c) for l, h, c in zip(self.lo, self.hi, self.counts))

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(n0 * n1, 2)``, first axis slowest."""
        a, b = self.axes()
        A, B = np.meshgrid(a, b, indexing="ij")
        return np.column_stack([A.ravel(), B.ravel()])

    def in_bounds(self, x) -> bool:
        return bool(self.lo[0] <= x[0] <= self.hi[0] and self.lo[1] <= x[1] <= self.hi[1])

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "counts": list(self.counts),
                "names": list(self.names)}


@dataclass(frozen=True)
class _Stencil:
    """Bilinear interpolation stencil for a batch of query points."""

    i: np.ndarray
    j: np.ndarray
    wa: np.ndarray
    wb: np.ndarray
    off: np.ndarray

    @classmethod
    def build(cls, grid: GridSpec, X: np.ndarray) -> "_Stencil":
        (l0, l1), (s0, s1), (n0, n1) = grid.lo, grid.spacing, grid.counts
        f0 = (X[:, 0] - l0) / s0
        f1 = (X[:, 1] - l1) / s1
        off = (f0 < 0) | (f0 > n0 - 1) | (f1 < 0) | (f1 > n1 - 1) | ~np.isfinite(f0 + f1)
        f0 = np.where(off, 0.0, f0)
        f1 = np.where(off, 0.0, f1)
        i = np.minimum(np.floor(f0).astype(np.int64), n0 - 2)
        j = np.minimum(np.floor(f1).astype(np.int64), n1 - 2)
        return cls(i, j, f0 - i, f1 - j, off)

    def apply(self, V: np.ndarray, sentinel: float) -> np.ndarray:
        i, j, a, b = self.i, self.j, self.wa, self.wb
        out = ((1 - a) * (1 - b) * V[i, j] + a * (1 - b) * V[i + 1, j]
               + (1 - a) * b * V[i, j + 1] + a * b * V[i + 1, j + 1])
        out[self.off] = sentinel
        return out


@dataclass(frozen=True, eq=False)
class SafetyKernel:
    """Value functions ``V_0..V_H`` on a grid plus the maximizing control per node."""

    grid: GridSpec
    controls: np.ndarray          # (k, m) discretized admissible controls
    H: int
    margin: float
    values: np.ndarray            # (H + 1, n0, n1)
    best: np.ndarray              # (H, n0, n1) index into controls
    sentinel: float
    model: DynamicalModel
    corridor: SetExpr
    meta: dict = field(default_factory=dict)

    def value(self, t: int, x, shift: float = 0.0) -> float:
        """Bilinear ``V_t(x) - shift``; states off the grid get the unsafe sentinel."""
        (l0, l1), (s0, s1), (n0, n1) = self.grid.lo, self.grid.spacing, self.grid.counts
        f0 = (x[0] - l0) / s0
        f1 = (x[1] - l1) / s1
        if not (0.0 <= f0 <= n0 - 1 and 0.0 <= f1 <= n1 - 1):
            return self.sentinel - shift
        i = min(int(f0), n0 - 2)
        j = min(int(f1), n1 - 2)
        a = f0 - i
        b = f1 - j
        V = self.values[t]
        return float((1 - a) * (1 - b) * V[i, j] + a * (1 - b) * V[i + 1, j]
                     + (1 - a) * b * V[i, j + 1] + a * b * V[i + 1, j + 1]) - shift

    def mask(self, t: int = 0, shift: float = 0.0) -> np.ndarray:
        """Boolean node mask of ``{V_t - shift >= 0}``."""
        return self.values[t] - shift >= 0.0

    def best_control(self, t: int, x) -> tuple[np.ndarray, float]:
        """One-step lookahead: control maximizing ``V_{t+1}(f(x, u))`` and that value."""
        x = np.asarray(x, dtype=float)
        succ = self.model.step(np.broadcast_to(x, (len(self.controls), x.size)), self.controls, t)
        vals = [self.value(t + 1, s) for s in succ]
        k = int(np.argmax(vals))
        return self.controls[k], vals[k]

    def describe(self) -> dict:
        return {"grid": self.grid.to_dict(), "controls": self.controls.tolist(),
                "H": self.H, "margin": self.margin, "model": self.model.descriptor(),
                "corridor": self.corridor.to_dict(), **self.meta}


def compute_kernel(model: DynamicalModel, corridor: SetExpr, margin: float = 0.0,
                   grid: Optional[GridSpec] = None, controls: Optional[Sequence] = None,
                   H: int = 100, norm: Norm | str = Norm.EUCLIDEAN) -> SafetyKernel:
    """Viability kernel of ``corridor`` shrunk by ``margin`` over ``H`` steps."""
    if model.n != 2:
        raise ValueError(f"grid kernels need a 2-D state model, got dimension {model.n}")
    grid = grid or GridSpec()
    if controls is None:
        controls = np.linspace(model.u_lo, model.u_hi, 11)
    U = np.asarray(controls, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, 1)
    if U.shape[1] != model.m:
        raise ValueError(f"controls have width {U.shape[1]}, model expects {model.m}")
    if np.any(U < model.u_lo - 1e-12) or np.any(U > model.u_hi + 1e-12):
        raise ValueError("discretized controls must lie within the model bounds")

    n0, n1 = grid.counts
    X = grid.nodes()
    m = (-np.asarray(signed_distance(X, corridor, norm)) - margin).reshape(n0, n1)
    if not np.all(np.isfinite(m)):
        raise ValueError("corridor margin must be finite on the grid (Empty/All corridors are degenerate)")
    sentinel = float(m.min()) - 1.0

    stencils = []
    any_off = False
    for u in U:
        succ = model.step(X, np.broadcast_to(u, (X.shape[0], model.m)), 0)
        st = _Stencil.build(grid, succ)
        any_off |= bool(st.off.any())
        stencils.append(st)
    if any_off:
        log.info("some successors leave the grid; they are treated as unsafe")

    values = np.empty((H + 1, n0, n1))
    best = np.empty((H, n0, n1), dtype=np.int16)
    values[H] = m
    for t in range(H - 1, -1, -1):
        cand = np.stack([st.apply(values[t + 1], sentinel) for st in stencils])
        k = np.argmax(cand, axis=0)
        best[t] = k.reshape(n0, n1)
        values[t] = np.minimum(m, cand[k, np.arange(X.shape[0])].reshape(n0, n1))
    return SafetyKernel(grid, U, H, float(margin), values, best, sentinel, model, corridor)


def kernel_membership(kernel: SafetyKernel, x0, shift: float = 0.0) -> bool:
    """``V_0(x0) >= 0`` with bilinear interpolation; off-grid starts are rejected."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not kernel.grid.in_bounds(x0):
        log.warning("state %s is outside the kernel grid; treated as outside the kernel", x0)
        return False
    return kernel.value(0, x0, shift) >= 0.0


@dataclass(frozen=True)
class ContainmentReport:
    """Cellwise check of ``inner ⊆ outer`` at ``t = 0``."""

    inner_cells: int
    outer_cells: int
    violating_cells: int
    domain_cells: int
    violating_domain_cells: int
    domain: Optional[tuple[tuple[float, float], tuple[float, float]]]

    @property
    def contained(self) -> bool:
        return self.violating_cells == 0

    @property
    def contained_on_domain(self) -> bool:
        return self.violating_domain_cells == 0

    def to_dict(self) -> dict:
        return {"inner_cells": self.inner_cells, "outer_cells": self.outer_cells,
                "violating_cells": self.violating_cells, "domain_cells": self.domain_cells,
                "violating_domain_cells": self.violating_domain_cells,
                "contained": self.contained, "contained_on_domain": self.contained_on_domain,
                "domain": [list(r) for r in self.domain] if self.domain else None}


def kernel_containment(inner: np.ndarray, outer: np.ndarray, grid: GridSpec,
                       domain=None) -> ContainmentReport:
    """Compare two node masks; ``domain`` is ``((lo0, hi0), (lo1, hi1))`` or ``None``."""
    if inner.shape != outer.shape:
        raise ValueError("kernel masks must share a grid")
    bad = inner & ~outer
    if domain is None:
        dom = np.ones_like(inner, dtype=bool)
    else:
        a, b = grid.axes()
        (z0, z1), (v0, v1) = domain
        dom = (((a >= z0) & (a <= z1))[:, None]) & (((b >= v0) & (b <= v1))[None, :])
    return ContainmentReport(int(inner.sum()), int(outer.sum()), int(bad.sum()), int(dom.sum()),
                             int((bad & dom).sum()),
                             None if domain is None else tuple(tuple(map(float, r)) for r in domain))


def export_kernel(kernel: SafetyKernel, path, t: int = 0) -> int:
    """Write ``V_t`` as CSV rows ``(axis0, axis1, value)``; returns the row count."""
    X = kernel.grid.nodes()
    vals = kernel.values[t].ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*kernel.grid.names, "value"])
        for (a, b), v in zip(X, vals):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
    return len(vals)


def read_kernel_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`export_kernel`: node coordinates ``(k, 2)`` and values ``(k,)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[float(c) for c in r] for r in rows], dtype=float).reshape(-1, 3)
    return data[:, :2], data[:, 2]
