import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simmetric.control import NULL_CONTROLLER, SequenceController, UniformSequenceScheme
from simmetric.dynamics import LinearModel
from simmetric.geometry import All, Empty, HalfSpace
from simmetric.metrics import SCHEMA_VERSION, MetricKind, NormConfig, evaluate_sample
from simmetric.spec import Environment, TimeVaryingSet

ALL_KINDS = list(MetricKind)


def toy_pair(gain_S, gain_M):
    return LinearModel([[1.0]], [[gain_S]]), LinearModel([[1.0]], [[gain_M]])


def wall_env(a, H):
    return Environment("w", [0.0], TimeVaryingSet(H, Empty(), {t: HalfSpace([1.0], a) for t in range(1, H + 1)}),
                       TimeVaryingSet(H, All()))


def test_hand_built_gap():
    S, M = toy_pair(1.2, 0.4)
    e = wall_env(1.0, 1)
    u = SequenceController(np.array([[1.0]]))
    spec = evaluate_sample(MetricKind.SPEC, e, u, S, M)
    fals = evaluate_sample(MetricKind.SSM_FALSIFYING, e, u, S, M)
    assert spec.sat_M and not spec.sat_S
    assert spec.d == pytest.approx(0.6)
    assert fals.d == pytest.approx(0.8)
    assert spec.d <= fals.d


def test_system_satisfied_gives_zero():
    S, M = toy_pair(0.5, 0.4)
    e = wall_env(1.0, 1)
    u = SequenceController(np.array([[1.0]]))
    for kind in (MetricKind.SPEC, MetricKind.SSM_FALSIFYING):
        ev = evaluate_sample(kind, e, u, S, M)
        assert ev.sat_S and ev.d == 0.0
    assert evaluate_sample(MetricKind.SSM, e, u, S, M).d == pytest.approx(0.1)


def test_null_controller_sample():
    S, M = toy_pair(1.0, 1.0)
    ev = evaluate_sample(MetricKind.SPEC, wall_env(1.0, 2), NULL_CONTROLLER, S, M)
    assert ev.d == 0.0 and ev.sat_M is None and ev.sat_S is None and ev.is_null


def test_record_is_json_with_schema():
    S, M = toy_pair(1.2, 0.4)
    ev = evaluate_sample("spec", wall_env(1.0, 1), SequenceController(np.array([[1.0]]), {"scheme": "x"}),
                         S, M, index=3, seed=99)
    rec = json.loads(json.dumps(ev.to_record()))
    assert rec["schema"] == SCHEMA_VERSION and rec["index"] == 3 and rec["seed"] == 99
    assert rec["controller"] == {"scheme": "x"} and rec["sat_S"] is False


def test_metric_kind_parse():
    assert MetricKind.parse("SSM_FEASIBLE") is MetricKind.SSM_FEASIBLE
    assert MetricKind.parse("spec") is MetricKind.SPEC
    with pytest.raises(ValueError):
        MetricKind.parse("bogus")


def test_projected_distance():
    S = LinearModel(np.eye(2), [[1.0], [5.0]])
    M = LinearModel(np.eye(2), [[0.5], [0.0]])
    e = Environment("p", [0.0, 0.0], TimeVaryingSet(1, Empty()), TimeVaryingSet(1, All()))
    u = SequenceController(np.array([[1.0]]))
    assert evaluate_sample("ssm", e, u, S, M, NormConfig("euclidean", (0,))).d == pytest.approx(0.5)
    assert evaluate_sample("ssm", e, u, S, M, NormConfig("inf")).d == pytest.approx(5.0)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.2, 1.0), st.floats(0.8, 2.0),
       st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.sampled_from(["euclidean", "inf"]))
def test_per_sample_ordering(a, gM, gS, seq, norm):
    S, M = toy_pair(gS, gM)
    e = wall_env(a, 3)
    u = SequenceController(np.array(seq).reshape(-1, 1))
    cfg = NormConfig(norm)
    ev = {k: evaluate_sample(k, e, u, S, M, cfg) for k in ALL_KINDS}
    for k, v in ev.items():
        if k is not MetricKind.SPEC or v.sat_M:
            assert v.d >= 0
    flags = ev[MetricKind.SPEC]
    if flags.sat_M and not flags.sat_S:
        assert (ev[MetricKind.SPEC].d <= ev[MetricKind.SSM_FALSIFYING].d
                <= ev[MetricKind.SSM_FEASIBLE].d)


def test_replay_reproduces_distance():
    S, M = toy_pair(1.3, 1.0)
    scheme = UniformSequenceScheme([0.0], [1.0], 5)
    e = wall_env(2.0, 5)
    rng = np.random.default_rng(4)
    for _ in range(20):
        u = scheme.sample(e, rng)
        first = evaluate_sample("ssm", e, u, S, M)
        again = evaluate_sample("ssm", e, scheme.replay(first.descriptor), S, M)
        assert first.d == again.d
