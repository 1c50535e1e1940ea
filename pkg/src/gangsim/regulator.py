"""Per-core memory-bandwidth budgets for best-effort cores.

Each best-effort core carries a budget of memory transactions per
regulation period, programmed at every period boundary from the currently
leading gang's declared threshold (unlimited when no gang runs).  A core
that exhausts its budget idles until the next boundary.  Consumption is
fluid: a running best-effort task consumes at its demand rate scaled by
elapsed time, which the engine integrates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Tuple

from .taskmodel import BestEffortTask


@dataclass(frozen=True)
class CoreBudgetState:
    """Budget bookkeeping for one core during one regulation period.

    budget None means unregulated (no threshold programmed).  throttled
    latches once the budget is exhausted and holds until the next period.
    """

    period_start: Fraction = Fraction(0)
    budget: Optional[Fraction] = None
    consumed: Fraction = Fraction(0)
    throttled: bool = False

    @property
    def exhausted(self) -> bool:
        return self.budget is not None and self.consumed >= self.budget

    def check(self) -> None:
        assert self.consumed >= 0
        if self.budget is not None:
            assert self.consumed <= self.budget, "consumption above budget"
            if self.throttled:
                assert self.consumed == self.budget, "throttled implies budget fully consumed"


def begin_period(
    state: CoreBudgetState, now, budget: Optional[int | Fraction]
) -> CoreBudgetState:
    """Reset the core's counter at a regulation-period boundary.

    ``budget`` is the leading gang's threshold at this instant, or None
    when no gang runs (unregulated period).
    """
    return CoreBudgetState(
        period_start=Fraction(now),
        budget=None if budget is None else Fraction(budget),
        consumed=Fraction(0),
        throttled=False,
    )


def advance(
    state: CoreBudgetState, be_task: BestEffortTask, dt: Fraction, period: int
) -> Tuple[CoreBudgetState, Fraction]:
    """Run ``be_task`` for up to ``dt`` within the current period.

    Returns (state, executed): executed is how long the task actually ran
    before (possibly) hitting the budget; the remainder of ``dt`` is
    throttled time.  ``dt`` must not cross a period boundary.
    """
    dt = Fraction(dt)
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if state.throttled:
        return state, Fraction(0)
    if state.exhausted:
        # Zero (or already-consumed) budget: the overflow fires before any
        # execution happens this period.
        new = replace(state, throttled=True)
        new.check()
        return new, Fraction(0)
    demand = be_task.memory_demand_rate
    if demand == 0 or state.budget is None:
        full = Fraction(demand, period) * dt
        new = replace(state, consumed=state.consumed + full)
        new.check()
        return new, dt
    room = state.budget - state.consumed
    full = Fraction(demand, period) * dt
    if full < room:
        new = replace(state, consumed=state.consumed + full)
        new.check()
        return new, dt
    # Budget hit at (or before) the end of the interval: overflow latches.
    executed = room * period / demand
    new = replace(state, consumed=state.budget, throttled=True)
    new.check()
    return new, executed
