"""Gang-scheduling lock: the state machine deciding who may run.

Models the global lock that serializes real-time gang occupancy of the
platform: a held flag, a bitmask of cores running gang threads, a bitmask
of cores whose best candidate lost to the current leader, the leading
gang's identity, and per-core thread slots.  Gang identity is the
priority value, so all membership tests compare priorities.

Transitions are pure: each operation returns a new state plus outputs.
Thread references may be any hashable object exposing an integer
``priority`` attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple


def bit(core: int) -> int:
    return 1 << core


def mask_cores(mask: int) -> list[int]:
    """Ascending core indices present in a bitmask."""
    out = []
    core = 0
    while mask:
        if mask & 1:
            out.append(core)
        mask >>= 1
        core += 1
    return out


class Decision(str, Enum):
    """Branch taken by pick_next, reified for testing."""

    RUN_NEXT = "run_next"
    JOIN_GANG = "join_gang"
    PREEMPT_AND_ACQUIRE = "preempt_and_acquire"
    BLOCKED = "blocked"
    RELEASE_ONLY = "release_only"


@dataclass(frozen=True)
class SelectionOutcome:
    decision: Decision
    cores_to_reschedule: int = 0


@dataclass(frozen=True)
class GangLockState:
    """Immutable snapshot of the gang lock."""

    core_count: int
    held: bool = False
    locked_cores: int = 0
    blocked_cores: int = 0
    leader: Optional[int] = None
    gthreads: tuple = ()

    @classmethod
    def empty(cls, core_count: int) -> "GangLockState":
        return cls(core_count=core_count, gthreads=(None,) * core_count)

    def check(self) -> None:
        """Assert structural invariants; raises AssertionError on corruption."""
        assert self.locked_cores & self.blocked_cores == 0, "locked and blocked masks overlap"
        assert self.held == (self.locked_cores != 0) == (self.leader is not None), (
            "held flag, locked mask and leader must agree"
        )
        assert len(self.gthreads) == self.core_count
        for core, thread in enumerate(self.gthreads):
            assert (thread is not None) == bool(self.locked_cores & bit(core)), (
                f"gthreads[{core}] inconsistent with locked mask"
            )
            if thread is not None:
                assert thread.priority == self.leader, "tracked thread outside leader gang"


def _acquire(state: GangLockState, core: int, thread) -> GangLockState:
    """Unconditional lock-acquisition writes (used after preemption too)."""
    gthreads = list(state.gthreads)
    gthreads[core] = thread
    return replace(
        state,
        held=True,
        locked_cores=state.locked_cores | bit(core),
        gthreads=tuple(gthreads),
        leader=thread.priority,
    )


def acquire(state: GangLockState, core: int, thread) -> GangLockState:
    """Acquire the free lock on behalf of ``thread`` running on ``core``."""
    if state.held:
        raise ValueError("acquire called while gang lock is held")
    new = _acquire(state, core, thread)
    new.check()
    return new


def try_release(
    state: GangLockState, core: int, departing
) -> Tuple[GangLockState, bool, int]:
    """Release ``core`` if ``departing`` is the thread tracked there.

    Returns (state, fully_released, cores_to_reschedule).  When the last
    locked core clears, the lock frees and the previously blocked cores
    are returned for rescheduling.  A departing thread that is not
    tracked is a no-op.
    """
    if not state.held:
        raise ValueError("try_release called while gang lock is free")
    if state.gthreads[core] != departing:
        return state, False, 0
    gthreads = list(state.gthreads)
    gthreads[core] = None
    locked = state.locked_cores & ~bit(core)
    if locked == 0:
        resched = state.blocked_cores
        new = replace(
            state,
            held=False,
            locked_cores=0,
            blocked_cores=0,
            leader=None,
            gthreads=tuple(gthreads),
        )
        new.check()
        return new, True, resched
    new = replace(state, locked_cores=locked, gthreads=tuple(gthreads))
    new.check()
    return new, False, 0


def gang_preempt(state: GangLockState) -> Tuple[GangLockState, int]:
    """Evict every thread of the current gang; returns their cores.

    Leaves held/leader set for the caller's immediate re-acquisition, so
    the returned state is transient and deliberately not invariant-checked.
    """
    resched = state.locked_cores
    return (
        replace(state, locked_cores=0, gthreads=(None,) * state.core_count),
        resched,
    )


def pick_next(
    state: GangLockState,
    core: int,
    departing,
    candidate,
) -> Tuple[GangLockState, object, SelectionOutcome]:
    """Per-core scheduling decision; the heart of the gang policy.

    ``departing`` is the thread previously running on this core (or None)
    and ``candidate`` the highest-priority ready thread pinned here (or
    None).  Applies, in order: release of the departing thread, then
    acquire / join / preempt-and-acquire / block, exactly one branch.

    Caller discipline: whenever this core's slot is tracked, its thread
    must be passed as ``departing`` (it is either still the candidate or
    on its way out); the release phase then keeps slot and masks coherent.

    The core's blocked bit is cleared on entry and re-derived, so a stale
    candidate never leaves a permanent blocked mark.

    Returns (state, scheduled thread or None, outcome).  The outcome's
    cores_to_reschedule carries every core that must re-run selection:
    the old gang's cores after a preemption, and the previously blocked
    cores after a full release (even when a new candidate immediately
    re-acquires the freed lock).
    """
    released_mask = 0
    if state.held and departing is not None:
        state, _, released_mask = try_release(state, core, departing)

    if state.blocked_cores & bit(core):
        state = replace(state, blocked_cores=state.blocked_cores & ~bit(core))

    if candidate is None:
        scheduled = None
        outcome = SelectionOutcome(Decision.RELEASE_ONLY, released_mask)
    elif not state.held:
        state = _acquire(state, core, candidate)
        scheduled = candidate
        outcome = SelectionOutcome(Decision.RUN_NEXT, released_mask)
    elif candidate.priority == state.leader:
        gthreads = list(state.gthreads)
        gthreads[core] = candidate
        state = replace(
            state,
            locked_cores=state.locked_cores | bit(core),
            gthreads=tuple(gthreads),
        )
        scheduled = candidate
        outcome = SelectionOutcome(Decision.JOIN_GANG, 0)
    elif candidate.priority > state.leader:
        state, preempted = gang_preempt(state)
        state = _acquire(state, core, candidate)
        scheduled = candidate
        outcome = SelectionOutcome(Decision.PREEMPT_AND_ACQUIRE, preempted)
    else:
        state = replace(state, blocked_cores=state.blocked_cores | bit(core))
        scheduled = None
        outcome = SelectionOutcome(Decision.BLOCKED, released_mask)

    state.check()
    return state, scheduled, outcome
