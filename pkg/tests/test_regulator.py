"""Budget throttling, cross-checked against a 1us tick-level oracle."""

import random
from fractions import Fraction

import pytest

from gangsim.regulator import CoreBudgetState, advance, begin_period
from gangsim.taskmodel import BestEffortTask

PERIOD = 1000


def tick_execution(budget, demand, dt):
    """Independent oracle: consume in 1us ticks until the counter reaches
    the budget (overflow interrupt), then stop.  Returns executed us."""
    consumed = Fraction(0)
    executed = 0
    for _ in range(dt):
        if budget is not None and consumed >= budget:
            break
        consumed += Fraction(demand, PERIOD)
        executed += 1
    return executed


def be(demand):
    return BestEffortTask(id="be", core_assignment=(0,), memory_demand_rate=demand)


def fresh(budget, now=0):
    return begin_period(CoreBudgetState(), now, budget)


def test_begin_period_resets_after_throttle():
    state = CoreBudgetState(period_start=Fraction(0), budget=Fraction(50), consumed=Fraction(50), throttled=True)
    state = begin_period(state, 1000, 100)
    assert state.consumed == 0
    assert not state.throttled
    assert state.budget == 100
    assert state.period_start == 1000


def test_exhaustion_at_half_period():
    # budget 100, demand 200/period: closed form Q*T/r = 500us.
    # Frozen against the tick oracle: tick_execution(100, 200, 1000) == 500.
    assert tick_execution(100, 200, 1000) == 500
    state, executed = advance(fresh(100), be(200), Fraction(PERIOD), PERIOD)
    assert executed == 500
    assert state.throttled
    assert state.consumed == 100


def test_zero_demand_never_throttles():
    state, executed = advance(fresh(100), be(0), Fraction(PERIOD), PERIOD)
    assert executed == PERIOD
    assert not state.throttled
    assert state.consumed == 0


def test_under_budget_runs_full_interval():
    state, executed = advance(fresh(300), be(200), Fraction(PERIOD), PERIOD)
    assert executed == PERIOD
    assert not state.throttled
    assert state.consumed == 200


def test_zero_budget_throttles_whole_period():
    state = fresh(0)
    assert state.exhausted
    state, executed = advance(state, be(400), Fraction(250), PERIOD)
    assert executed == 0
    assert state.throttled
    state, executed = advance(state, be(400), Fraction(750), PERIOD)
    assert executed == 0


def test_unlimited_budget_tracks_consumption():
    state = fresh(None)
    state, executed = advance(state, be(400), Fraction(PERIOD), PERIOD)
    assert executed == PERIOD
    assert state.consumed == 400
    assert state.budget is None
    assert not state.exhausted


def test_throttle_latches_within_period():
    state, _ = advance(fresh(10), be(400), Fraction(PERIOD), PERIOD)
    assert state.throttled
    for dt in (1, 17, 500):
        state, executed = advance(state, be(400), Fraction(dt), PERIOD)
        assert executed == 0


def test_split_advances_equal_one_advance():
    whole, executed_whole = advance(fresh(130), be(333), Fraction(PERIOD), PERIOD)
    split = fresh(130)
    executed_split = Fraction(0)
    for dt in (100, 250, 250, 150, 250):
        split, executed = advance(split, be(333), Fraction(dt), PERIOD)
        executed_split += executed
    assert split.consumed == whole.consumed
    assert split.throttled == whole.throttled
    assert executed_split == executed_whole


def test_fluid_matches_tick_oracle_within_one_tick():
    rng = random.Random(7)
    for _ in range(300):
        budget = rng.choice([None, 0, rng.randint(1, 600)])
        demand = rng.choice([0, rng.randint(1, 2000)])
        dt = rng.randint(1, PERIOD)
        state, executed = advance(fresh(budget), be(demand), Fraction(dt), PERIOD)
        oracle = tick_execution(budget, demand, dt)
        assert abs(executed - oracle) <= 1, (budget, demand, dt)
        state.check()


def test_budget_safety_is_exact_over_random_walks():
    rng = random.Random(11)
    for _ in range(100):
        budget = rng.randint(0, 400)
        state = fresh(budget)
        demand = rng.randint(1, 1500)
        remaining = PERIOD
        while remaining > 0:
            dt = rng.randint(1, remaining)
            state, executed = advance(state, be(demand), Fraction(dt), PERIOD)
            assert executed <= dt
            assert state.consumed <= budget
            state.check()
            remaining -= dt


def test_negative_dt_rejected():
    with pytest.raises(ValueError):
        advance(fresh(100), be(10), Fraction(-1), PERIOD)
