import math

import pytest
from hypothesis import given, strategies as st

from prunelab.errors import ConfigurationError, InputError
from prunelab.schedules import (PruningPlan, RegimeConfig, RetrainPolicy, describe, plan_constant, plan_geometric,
                                plan_hybrid, plan_one_shot, round_half_up, steps_ratio)

POL = RetrainPolicy.with_patience(5)


def remaining(plan):
    return [plan.total - s.cumulative for s in plan.steps]


# one-shot

def test_one_shot_counts():
    plan = plan_one_shot(1000, 0.8, POL)
    assert len(plan.steps) == 1 and plan.final_count == 800


def test_one_shot_rounds_half_up():
    assert plan_one_shot(10, 0.05, POL).final_count == 1


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_one_shot_rejects_p(p):
    with pytest.raises(InputError):
        plan_one_shot(1000, p, POL)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]


# constant

def test_constant_even_split():
    assert plan_constant(1000, 0.8, 4, POL).increments == [200, 200, 200, 200]


def test_constant_remainder_to_last():
    assert plan_constant(1000, 0.7, 3, POL).increments == [233, 233, 234]


def test_constant_rejects_empty_steps():
    with pytest.raises(InputError):
        plan_constant(10, 0.2, 3, POL)
    with pytest.raises(InputError):
        plan_constant(100, 0.5, 0, POL)


# geometric

def test_geometric_remaining_law():
    plan = plan_geometric(1000, 0.8, 0.2, POL)
    assert remaining(plan)[:3] == [800, 640, 512]


def test_geometric_exact_cube():
    plan = plan_geometric(1000, 0.271, 0.1, POL)
    assert remaining(plan) == [900, 810, 729]


def test_geometric_step_count_and_clamp():
    plan = plan_geometric(1000, 0.8, 0.2, POL)
    assert len(plan.steps) == math.ceil(math.log(0.2) / math.log(0.8)) == 8
    assert remaining(plan)[-1] == 200


def test_geometric_ratio_above_target_is_one_step():
    plan = plan_geometric(1000, 0.3, 0.5, POL)
    assert [s.cumulative for s in plan.steps] == [300]


def test_steps_ratio_lands_in_steps():
    r = steps_ratio(0.98, 5)
    assert (1 - r) ** 5 == pytest.approx(0.02)
    assert len(plan_geometric(100_000, 0.98, r, POL).steps) == 5


# hybrid

def test_hybrid_table_row_ends_at_target():
    plan = plan_hybrid(100_000, 0.7, 0.5, 0.01842)
    assert plan.steps[0].cumulative == 50_000 and plan.steps[0].phase == "one_shot"
    assert plan.final_count == 70_000
    incs = plan.increments[1:]
    assert all(a >= b - 1 for a, b in zip(incs, incs[1:]))


def test_hybrid_boundary_two_steps():
    plan = plan_hybrid(1000, 0.5, 0.499, 0.01)
    assert [s.cumulative for s in plan.steps] == [499, 500]


def test_hybrid_defaults():
    low = plan_hybrid(10_000, 0.5)
    assert low.ratio == 0.1 and low.steps[0].cumulative == 3500
    high = plan_hybrid(10_000, 0.9, policy_oneshot=RetrainPolicy.with_patience(40))
    assert high.ratio == 0.02
    assert high.steps[1].policy.patience == 2 and high.steps[0].policy.patience == 40
    assert high.final_count == 9000


def test_hybrid_rejects_pk_above_p():
    with pytest.raises(InputError):
        plan_hybrid(1000, 0.5, 0.6, 0.1)


# equivalences and rendering

def test_one_shot_constant_geometric_equivalent():
    a = plan_one_shot(1234, 0.42, POL)
    b = plan_constant(1234, 0.42, 1, POL)
    c = plan_geometric(1234, 0.42, 0.42, POL)
    assert [s.cumulative for s in a.steps] == [s.cumulative for s in b.steps] == [s.cumulative for s in c.steps]
    assert a.steps[0].phase == b.steps[0].phase == c.steps[0].phase == "one_shot"


def test_describe_rows():
    assert len(describe(plan_one_shot(100, 0.5, POL)).splitlines()) == 4
    text = describe(plan_constant(1000, 0.8, 4, POL)).splitlines()
    assert len(text) == 3 + 4 and "0.8000" in text[-1]
    hy = describe(plan_hybrid(100_000, 0.7, 0.5, 0.01842)).splitlines()
    assert "50000" in hy[3] and "one_shot" in hy[3] and "iterative" in hy[4]


def test_plan_dict_round_trip():
    plan = plan_hybrid(5000, 0.9, 0.6, 0.05)
    assert PruningPlan.from_dict(plan.to_dict()) == plan


def test_regime_config_build_and_round_trip():
    cfg = RegimeConfig(kind="iterative_geometric", target=0.9, steps=3, policy=RetrainPolicy.fixed(2))
    assert len(cfg.build(10_000).steps) == 3
    assert RegimeConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigurationError):
        RegimeConfig(kind="bogus")
    with pytest.raises(ConfigurationError):
        RegimeConfig(kind="iterative_constant", steps=0)


def test_policy_validation():
    with pytest.raises(ConfigurationError):
        RetrainPolicy.with_patience(0)
    with pytest.raises(ConfigurationError):
        RetrainPolicy.fixed(-1)
    assert RetrainPolicy.with_patience(3, 0.01).describe() == "patience(3, min_delta=0.01)"


# properties

ws = st.integers(10, 10**6)
ps = st.floats(0.01, 0.99)


def _check_plan(plan, w, p):
    cum = [s.cumulative for s in plan.steps]
    assert cum[-1] == round_half_up(p * w)
    assert all(b > a for a, b in zip(cum, cum[1:]))
    assert cum[0] >= 1


@given(ws, ps, st.integers(1, 20))
def test_constant_properties(w, p, steps):
    target = round_half_up(p * w)
    if steps > target or target < 1:
        return
    plan = plan_constant(w, p, steps, POL)
    _check_plan(plan, w, p)
    assert max(plan.increments) - min(plan.increments) <= 1
    assert sum(plan.increments) == target


@given(ws, ps, st.floats(0.01, 0.9))
def test_geometric_properties(w, p, r):
    if round_half_up(p * w) < 1:
        return
    plan = plan_geometric(w, p, r, POL)
    _check_plan(plan, w, p)
    if r < p:
        for s in plan.steps[:-1]:
            assert abs((w - s.cumulative) - w * (1 - r) ** s.trajectory_index) <= 1
        incs = plan.increments[:-1]
        assert all(a >= b - 1 for a, b in zip(incs, incs[1:]))


@given(ws, st.floats(0.05, 0.99), st.floats(0.2, 0.95), st.floats(0.005, 0.3))
def test_hybrid_properties(w, p, frac, r):
    p_k = frac * p
    first, target = round_half_up(p_k * w), round_half_up(p * w)
    if first < 1 or first >= target:
        return
    _check_plan(plan_hybrid(w, p, p_k, r), w, p)
