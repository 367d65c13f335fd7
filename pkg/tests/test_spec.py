import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simmetric.geometry import All, Ball, Box, Complement, Empty, HalfSpace, Union
from simmetric.spec import (Environment, SpecError, TimeVaryingSet, Trajectory,
                            margin_of_violation, satisfies, step_margins, sup_trajectory_distance)


def traj(states, m=1):
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states.reshape(-1, 1)
    return Trajectory(states, np.zeros((len(states) - 1, m)))


def env(H, avoid=Empty(), reach=All(), avoid_at=None, reach_at=None, x0=(0.0,)):
    return Environment("e", x0, TimeVaryingSet(H, avoid, avoid_at or {}),
                       TimeVaryingSet(H, reach, reach_at or {}))


# examples -------------------------------------------------------------------

def test_vacuous_spec_is_satisfied():
    assert satisfies(traj(np.zeros((6, 2))), env(5, x0=(0, 0)))


def test_terminal_ball_thresholds():
    xs = np.array([1.0, 2.0])
    final = xs + np.array([0.3, 0.0])
    e = env(1, reach_at={1: Ball(xs, 0.5)}, x0=(0.0, 0.0))
    t = traj([[0.0, 0.0], final])
    assert satisfies(t, e, 0.0)
    assert not satisfies(t, e, 0.25)


def test_margin_of_violation_examples():
    e = env(1, avoid_at={1: HalfSpace([1.0], 1.0)})
    t = traj([0.0, 0.4])
    assert margin_of_violation(t, True, e) == pytest.approx(0.6)
    assert margin_of_violation(t, False, e) == 0.0


def test_step_margins_infinite_when_unconstrained():
    m = step_margins(traj([0.0, 1.0]), env(1))
    assert np.all(np.isinf(m)) and np.all(m > 0)


def test_sup_distance_examples():
    a = traj([0.0, 1.0, 2.0])
    b = traj([0.0, 0.0, 0.0])
    assert sup_trajectory_distance(a, a) == 0.0
    assert sup_trajectory_distance(a, b) == 2.0


def test_sup_distance_projection():
    a = traj([[0.0, 0.0], [1.0, 5.0]])
    b = traj([[0.0, 0.0], [0.5, -5.0]])
    assert sup_trajectory_distance(a, b, coords=(0,)) == pytest.approx(0.5)
    assert sup_trajectory_distance(a, b, "inf") == pytest.approx(10.0)


def test_horizon_mismatch_errors():
    e = env(3)
    with pytest.raises(SpecError):
        satisfies(traj([0.0, 1.0]), e)
    with pytest.raises(SpecError):
        sup_trajectory_distance(traj([0.0, 1.0]), traj([0.0, 1.0, 2.0]))
    with pytest.raises(SpecError):
        Environment("x", [0.0], TimeVaryingSet(2, Empty()), TimeVaryingSet(3, Empty()))
    with pytest.raises(SpecError):
        TimeVaryingSet(2, Empty(), {5: All()})


def test_reach_tie_counts_as_outside():
    e = env(1, reach_at={1: Box([-1.0], [1.0])})
    assert not satisfies(traj([0.0, 1.0]), e)
    assert satisfies(traj([0.0, 0.99]), e)


def test_avoid_tie_counts_as_inside():
    e = env(1, avoid=Box([1.0], [2.0]))
    assert not satisfies(traj([0.0, 1.0]), e)


def test_environment_round_trip():
    e = Environment("e7", [0.0, 1.0], TimeVaryingSet(3, Complement(Box([0.5], [2.5], coords=(0,)))),
                    TimeVaryingSet(3, All(), {3: Ball([1.0, 0.0], 0.5)}), {"k": 1})
    e2 = Environment.from_dict(e.to_dict())
    assert e2.to_dict() == e.to_dict()


def test_trajectory_csv(tmp_path):
    t = Trajectory(np.array([[0.0, 1.0], [0.5, 1.5], [1.0, 2.0]]), np.array([[0.1], [0.2]]))
    p = tmp_path / "t.csv"
    t.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "x0", "x1", "u0"]
    assert len(rows) == 4
    assert float(rows[2][3]) == 0.2 and rows[3][3] == ""


def test_negative_margin_rejected():
    with pytest.raises(SpecError):
        satisfies(traj([0.0]), env(0), -0.1)


# random scenes ----------------------------------------------------------------

pt = st.floats(-3, 3)


@st.composite
def set_expr(draw):
    kind = draw(st.sampled_from(["ball", "box", "half", "union", "empty"]))
    c = np.array([draw(pt), draw(pt)])
    if kind == "ball":
        return Ball(c, draw(st.floats(0.1, 2)))
    if kind == "box":
        w = np.array([draw(st.floats(0.1, 2)), draw(st.floats(0.1, 2))])
        return Box(c - w, c + w)
    if kind == "half":
        ang = draw(st.floats(0, 2 * math.pi))
        return HalfSpace([math.cos(ang), math.sin(ang)], draw(st.floats(-4, 4)))
    if kind == "union":
        return Union((Ball(c, draw(st.floats(0.1, 1))), Box(c + 1, c + 2)))
    return Empty()


@st.composite
def scenes(draw):
    H = draw(st.integers(1, 4))
    avoid = {t: draw(set_expr()) for t in range(H + 1) if draw(st.booleans())}
    reach = {t: Box([-5.0, -5.0], [5.0, 5.0]) if draw(st.booleans()) else Ball([0.0, 0.0], 6.0)
             for t in range(H + 1) if draw(st.booleans())}
    e = Environment("s", [0.0, 0.0], TimeVaryingSet(H, Empty(), avoid), TimeVaryingSet(H, All(), reach))
    states = np.array([[draw(pt), draw(pt)] for _ in range(H + 1)])
    return e, traj(states, 1)


@settings(max_examples=1000, deadline=None)
@given(scenes(), st.floats(0, 2), st.floats(0, 2))
def test_tighter_margin_implies_looser(scene, a, b):
    e, t = scene
    d1, d2 = max(a, b), min(a, b)
    if satisfies(t, e, d1):
        assert satisfies(t, e, d2)


@settings(max_examples=1000, deadline=None)
@given(scenes(), st.floats(0, 1), st.lists(st.tuples(pt, pt), min_size=5, max_size=5),
       st.sampled_from(["euclidean", "inf"]))
def test_close_trajectories_inherit_satisfaction(scene, d, dirs, norm):
    e, tM = scene
    # system trajectory within distance d of the abstraction, in the chosen norm
    pert = np.array(dirs[: tM.H + 1])
    scale = np.max(np.abs(pert), axis=1) if norm == "inf" else np.linalg.norm(pert, axis=1)
    pert = pert / np.maximum(scale, 1e-12)[:, None] * d * 0.999
    tS = traj(tM.states + pert, 1)
    gap = sup_trajectory_distance(tS, tM, norm)
    if satisfies(tM, e, gap, norm):
        assert satisfies(tS, e, 0.0, norm)


@settings(max_examples=1000, deadline=None)
@given(scenes(), st.lists(st.tuples(pt, pt), min_size=5, max_size=5))
def test_violation_margin_bounded_by_sup_distance(scene, offsets):
    e, tM = scene
    tS = traj(tM.states + np.array(offsets[: tM.H + 1]), 1)
    if satisfies(tM, e) and not satisfies(tS, e):
        mov = margin_of_violation(tM, True, e)
        assert 0 < mov <= sup_trajectory_distance(tS, tM)


@settings(max_examples=500, deadline=None)
@given(scenes())
def test_margin_positive_when_abstraction_satisfies(scene):
    e, tM = scene
    if satisfies(tM, e):
        assert margin_of_violation(tM, True, e) > 0
