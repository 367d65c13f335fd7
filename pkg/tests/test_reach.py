import logging

import numpy as np
import pytest

from simmetric.control import LeastRestrictiveScheme
from simmetric.dynamics import DynamicalModel, LinearModel, QuadrotorVertical, simulate
from simmetric.geometry import All, Box, Complement
from simmetric.reach import (GridSpec, compute_kernel, export_kernel, kernel_containment,
                             kernel_membership, read_kernel_csv)
from simmetric.spec import Environment, TimeVaryingSet, satisfies

CORRIDOR = Box([0.5], [2.5], coords=(0,))
FULL = GridSpec((0.0, -4.0), (3.0, 4.0), (201, 201), ("z", "v"))
COARSE = GridSpec((0.0, -4.0), (3.0, 4.0), (41, 41), ("z", "v"))
U11 = np.linspace(0, 1, 11)


class Static(DynamicalModel):
    n, m = 2, 1

    def step(self, x, u, t=0):
        return np.array(x, dtype=float)

    def descriptor(self):
        return {"type": "static"}


@pytest.fixture(scope="module")
def k18():
    return compute_kernel(QuadrotorVertical(18.0), CORRIDOR, 0.0, FULL, U11, 100)


@pytest.fixture(scope="module")
def k17():
    return compute_kernel(QuadrotorVertical(17.0), CORRIDOR, 0.0, FULL, U11, 100)


def test_static_model_kernel_is_corridor():
    grid = GridSpec((0.0, -1.0), (3.0, 1.0), (61, 5))
    K = compute_kernel(Static(), CORRIDOR, 0.0, grid, [[0.0]], 10)
    z = grid.axes()[0]
    expected = (z >= 0.5 - 1e-12) & (z <= 2.5 + 1e-12)
    assert np.array_equal(K.mask()[:, 2], expected)


def test_values_finite_and_bounded_by_corridor_margin(k17):
    assert np.all(np.isfinite(k17.values))
    m = k17.values[-1]
    assert np.all(k17.values <= m[None] + 1e-12)


def test_monotone_shrinkage_in_horizon(k17):
    assert np.all(k17.values[:-1] <= k17.values[1:] + 1e-12)


@pytest.mark.parametrize("d1,d2", [(0.1, 0.0), (0.3, 0.1), (0.3, 0.0)])
def test_margin_containment(d1, d2):
    model = QuadrotorVertical(17.0)
    a = compute_kernel(model, CORRIDOR, d1, FULL, U11, 100)
    b = compute_kernel(model, CORRIDOR, d2, FULL, U11, 100)
    rep = kernel_containment(a.mask(), b.mask(), FULL)
    assert rep.contained and rep.inner_cells < rep.outer_cells


def test_margin_is_an_exact_shift(k17):
    k = compute_kernel(QuadrotorVertical(17.0), CORRIDOR, 0.1, FULL, U11, 100)
    assert np.max(np.abs(k.values - (k17.values - 0.1))) < 1e-12


def test_weaker_abstraction_kernel_inside_system_kernel(k17, k18):
    rep = kernel_containment(k17.mask(), k18.mask(), FULL)
    assert rep.contained and rep.violating_cells == 0


def test_membership_examples(k17, caplog):
    assert kernel_membership(k17, [1.5, 0.0])
    assert not kernel_membership(k17, [2.5, 3.5])
    with caplog.at_level(logging.WARNING):
        assert not kernel_membership(k17, [5.0, 0.0])
    assert "outside the kernel grid" in caplog.text


def test_membership_tie_is_safe():
    grid = GridSpec((0.0, -1.0), (3.0, 1.0), (61, 5))
    K = compute_kernel(Static(), CORRIDOR, 0.0, grid, [[0.0]], 3)
    assert kernel_membership(K, [0.5, 0.0])
    assert not kernel_membership(K, [0.45, 0.0])


def test_soundness_sweep_coarse():
    model = QuadrotorVertical(18.0)
    H = 60
    K = compute_kernel(model, CORRIDOR, 0.0, COARSE, U11, H)
    diag = COARSE.cell_diagonal
    scheme = LeastRestrictiveScheme(K)
    nodes = COARSE.nodes()[K.values[0].ravel() >= diag]
    assert len(nodes) > 100
    for i, x0 in enumerate(nodes):
        e = Environment("n", x0, TimeVaryingSet(H, Complement(CORRIDOR)), TimeVaryingSet(H, All()))
        tr = simulate(model, x0, scheme.controller(seed=i), H)
        assert satisfies(tr, e), f"node {x0} left the corridor"


def test_export_and_round_trip(tmp_path):
    grid = GridSpec((0.0, -1.0), (1.0, 1.0), (3, 3), ("z", "v"))
    K = compute_kernel(LinearModel(np.eye(2), np.zeros((2, 1))), Box([0.2], [0.8], coords=(0,)),
                       0.0, grid, [[0.0]], 2)
    p = tmp_path / "k.csv"
    assert export_kernel(K, p) == 9
    lines = p.read_text().splitlines()
    assert lines[0] == "z,v,value" and len(lines) == 10
    X, vals = read_kernel_csv(p)
    assert np.array_equal(X, grid.nodes())
    assert vals.tobytes() == K.values[0].ravel().tobytes()


def test_row_count_is_product_of_counts(tmp_path):
    grid = GridSpec((0.0, -1.0), (1.0, 1.0), (4, 7))
    K = compute_kernel(LinearModel(np.eye(2), np.zeros((2, 1))), Box([0.2], [0.8], coords=(0,)),
                       0.0, grid, [[0.0]], 1)
    assert export_kernel(K, tmp_path / "k.csv") == 28


def test_containment_domain_restriction():
    grid = GridSpec((0.0, 0.0), (1.0, 1.0), (3, 3))
    inner = np.ones((3, 3), dtype=bool)
    outer = np.ones((3, 3), dtype=bool)
    outer[0, 0] = False
    rep = kernel_containment(inner, outer, grid, ((0.4, 1.0), (0.0, 1.0)))
    assert rep.violating_cells == 1 and rep.violating_domain_cells == 0
    assert not rep.contained and rep.contained_on_domain


def test_rejects_non_planar_models():
    with pytest.raises(ValueError):
        compute_kernel(LinearModel(np.eye(3), np.zeros((3, 1))), CORRIDOR)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec((0, 0), (1, 1), (1, 5))
    with pytest.raises(ValueError):
        GridSpec((1, 0), (0, 1), (3, 3))
