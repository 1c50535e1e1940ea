"""Deterministic event-driven scheduler simulation with exact traces.

The engine advances from event to event (job releases, completions,
regulation-period boundaries); between events every core's occupant and
progress rate is constant, so progress integrates exactly in rational
arithmetic.  Identical scenarios always produce identical traces.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import ganglock, regulator
from .ganglock import GangLockState, pick_next
from .regulator import CoreBudgetState, advance as budget_advance, begin_period
from .taskmodel import (
    BestEffortTask,
    InterferenceModel,
    Policy,
    Scenario,
    scenario_fingerprint,
    validate,
    virtual_gangs_bound,
)

IDLE = "IDLE"

RT_RUN = "rt_run"
BE_RUN = "be_run"
BE_THROTTLED = "be_throttled"
IDLE_KIND = "idle"


class ScenarioError(ValueError):
    """Scenario rejected before simulation (validation or binding)."""


@dataclass(frozen=True)
class GangThread:
    """Identity of one thread of one job, as seen by the gang lock."""

    task_id: str
    thread_index: int
    job_index: int
    priority: int
    core: int
    release: int


@dataclass(frozen=True)
class Segment:
    """One maximal run of constant occupant/kind/rate on one core."""

    core: int
    occupant: str
    kind: str
    start: Fraction
    end: Fraction
    rate: Fraction

    @property
    def duration(self) -> Fraction:
        return self.end - self.start


@dataclass(frozen=True)
class ThreadJobRecord:
    """Outcome of one thread of one job."""

    task_id: str
    thread_index: int
    job_index: int
    core: int
    release: int
    deadline: int
    compute: int
    finish: Optional[Fraction]
    progress: Fraction
    dispatches: int


@dataclass(frozen=True)
class JobRecord:
    """Task-level outcome of one job: finished when its last thread is."""

    task_id: str
    job_index: int
    release: int
    deadline: int
    finish: Optional[Fraction]
    response: Optional[Fraction]
    deadline_met: Optional[bool]


@dataclass(frozen=True)
class RegulatorPeriodRecord:
    """Budget accounting for one best-effort core over one regulation period."""

    core: int
    period_start: int
    period_end: Fraction
    budget: Optional[Fraction]
    consumed: Fraction
    leader_priority: Optional[int]


@dataclass(frozen=True)
class Trace:
    """Complete, exact simulation output for one scenario."""

    fingerprint: str
    policy: Policy
    core_count: int
    horizon: int
    segments: tuple[Segment, ...]
    jobs: tuple[JobRecord, ...]
    thread_jobs: tuple[ThreadJobRecord, ...]
    regulator_periods: tuple[RegulatorPeriodRecord, ...]


def progress_rate(
    task_id: str, co_runners: set[str], model: InterferenceModel
) -> Fraction:
    """Progress per wall-clock unit while co_runners execute concurrently.

    The worst (largest) pairwise slowdown dominates; an empty co-runner
    set means solo speed 1.
    """
    worst = Fraction(1)
    for other in co_runners:
        factor = model.factor(task_id, other)
        if factor > worst:
            worst = factor
    return 1 / worst


def rt_gang_select(
    lock: GangLockState,
    departing: Mapping[int, object],
    candidates: Mapping[int, object],
) -> tuple[GangLockState, dict[int, object]]:
    """One scheduling instant under the gang policy.

    Runs pick_next per core in ascending index, repeating the sweep until
    occupancy stabilizes; a preemption or release on a high-index core
    re-evaluates lower-index cores, standing in for the kernel's
    reschedule IPIs.  ``departing`` maps cores to the thread previously
    running there, ``candidates`` to the best ready pinned thread.

    Returns the settled lock state and per-core scheduled threads.
    """
    occupancy: dict[int, object] = {core: None for core in range(lock.core_count)}
    sweeps = 0
    while True:
        sweeps += 1
        assert sweeps <= 2 * lock.core_count + 8, "gang selection failed to settle"
        before = lock
        changed = False
        for core in range(lock.core_count):
            lock, scheduled, _ = pick_next(
                lock, core, departing.get(core), candidates.get(core)
            )
            if occupancy[core] is not scheduled:
                occupancy[core] = scheduled
                changed = True
        # A release or preemption on a high-index core must re-evaluate the
        # cores already visited (the kernel's reschedule IPIs); sweeping
        # until both occupancy and lock state are stable covers that.
        if not changed and lock == before:
            break
    for core in range(lock.core_count):
        assert lock.gthreads[core] is occupancy[core], "lock/occupancy mismatch"
    return lock, occupancy


def best_effort_fill(
    rt_occupancy: Mapping[int, object],
    be_by_core: Mapping[int, BestEffortTask],
    regulated: bool,
    leader_threshold: Optional[int],
    budget_states: Sequence[CoreBudgetState],
) -> dict[int, tuple[BestEffortTask, bool]]:
    """Offer cores left idle by real-time selection to best-effort tasks.

    Returns core -> (task, running).  running is False when the core is
    barred this instant: its period budget is exhausted, or the leading
    gang's threshold is zero (which forbids best-effort co-scheduling
    outright, without waiting for a counter overflow).  Baseline policies
    pass regulated=False and always run.
    """
    result: dict[int, tuple[BestEffortTask, bool]] = {}
    for core, task in be_by_core.items():
        if rt_occupancy.get(core) is not None:
            continue
        if not regulated:
            result[core] = (task, True)
            continue
        barred = leader_threshold == 0
        state = budget_states[core]
        result[core] = (task, not barred and not state.throttled and not state.exhausted)
    return result


class _Thread:
    """Mutable per-thread-job bookkeeping while the simulation runs."""

    __slots__ = ("ref", "compute", "deadline", "remaining", "finish", "dispatches")

    def __init__(self, ref: GangThread, compute: int, deadline: int):
        self.ref = ref
        self.compute = compute
        self.deadline = deadline
        self.remaining = Fraction(compute)
        self.finish: Optional[Fraction] = None
        self.dispatches = 0


class _CoreTimeline:
    """Per-core segment accumulator that merges equal adjacent runs."""

    __slots__ = ("core", "rows")

    def __init__(self, core: int):
        self.core = core
        self.rows: list[list] = []  # [occupant, kind, start, end, rate]

    def emit(self, occupant: str, kind: str, start: Fraction, end: Fraction, rate: Fraction):
        if end == start:
            return
        assert end > start
        if self.rows:
            last = self.rows[-1]
            assert last[3] == start, "segments must be contiguous"
            if last[0] == occupant and last[1] == kind and last[4] == rate:
                last[3] = end
                return
        self.rows.append([occupant, kind, start, end, rate])

    def freeze(self) -> list[Segment]:
        return [
            Segment(self.core, occupant, kind, start, end, rate)
            for occupant, kind, start, end, rate in self.rows
        ]


def simulate(scenario: Scenario) -> Trace:
    """Run the scenario over [0, horizon) and return its exact trace.

    The scenario must validate cleanly and have its virtual gangs bound.

    Within one simulated instant: releases take effect first, then
    completions, then real-time selection core by core in ascending index,
    then (at regulation boundaries) budget reprogramming, then best-effort
    fill.  Candidate ties are broken by ascending task id, then thread
    index, so identical scenarios always replay identically.
    """
    violations = validate(scenario)
    if violations:
        raise ScenarioError("; ".join(str(v) for v in violations))
    if not virtual_gangs_bound(scenario):
        raise ScenarioError("virtual gangs are not bound; call bind_virtual_gangs first")

    platform = scenario.platform
    m = platform.core_count
    horizon = scenario.horizon
    reg_period = platform.regulation_period
    switch_cost = platform.context_switch_cost
    gang_policy = scenario.policy is Policy.RT_GANG
    with_interference = scenario.policy is Policy.CO_SCHEDULE_INTERFERENCE
    model = scenario.interference

    threshold_by_priority = {task.priority: task.bandwidth_threshold for task in scenario.rt_tasks}

    threads: list[_Thread] = []
    by_core: dict[int, list[_Thread]] = {core: [] for core in range(m)}
    release_set: set[int] = set()
    for task in scenario.rt_tasks:
        job = 0
        while True:
            release = task.release_offset + job * task.period
            if release >= horizon:
                break
            deadline = release + task.period
            for index, (compute, core) in enumerate(
                zip(task.per_thread_compute, task.core_assignment)
            ):
                ref = GangThread(task.id, index, job, task.priority, core, release)
                thread = _Thread(ref, compute, deadline)
                threads.append(thread)
                by_core[core].append(thread)
            release_set.add(release)
            job += 1
    for core in range(m):
        by_core[core].sort(
            key=lambda th: (-th.ref.priority, th.ref.release, th.ref.task_id, th.ref.thread_index)
        )
    releases = sorted(release_set)

    be_by_core: dict[int, BestEffortTask] = {}
    for be in scenario.be_tasks:
        for core in be.core_assignment:
            be_by_core[core] = be
    regulate = gang_policy and bool(be_by_core)

    lock = GangLockState.empty(m)
    budgets = [CoreBudgetState() for _ in range(m)]
    rt_occ: list[Optional[_Thread]] = [None] * m
    exec_prev: list[Optional[str]] = [None] * m
    overhead: list[Fraction] = [Fraction(0)] * m
    timelines = [_CoreTimeline(core) for core in range(m)]
    reg_open: dict[int, tuple[int, Optional[int]]] = {}  # core -> (start, leader prio)
    reg_rows: list[RegulatorPeriodRecord] = []

    def close_regulator_periods(end: Fraction) -> None:
        for core in sorted(reg_open):
            start, leader = reg_open[core]
            state = budgets[core]
            reg_rows.append(
                RegulatorPeriodRecord(core, start, end, state.budget, state.consumed, leader)
            )
        reg_open.clear()

    now = Fraction(0)
    release_idx = 0
    while now < horizon:
        while release_idx < len(releases) and releases[release_idx] <= now:
            release_idx += 1

        candidates: dict[int, _Thread] = {}
        for core in range(m):
            for thread in by_core[core]:
                if thread.ref.release <= now and thread.remaining > 0:
                    candidates[core] = thread
                    break

        if gang_policy:
            departing = {
                core: rt_occ[core].ref for core in range(m) if rt_occ[core] is not None
            }
            cand_refs = {core: thread.ref for core, thread in candidates.items()}
            lock, occ_refs = rt_gang_select(lock, departing, cand_refs)
            rt_occ = [
                candidates[core] if occ_refs[core] is not None else None for core in range(m)
            ]
        else:
            rt_occ = [candidates.get(core) for core in range(m)]

        leader_threshold = (
            threshold_by_priority.get(lock.leader) if gang_policy and lock.held else None
        )

        if regulate and now.denominator == 1 and int(now) % reg_period == 0:
            close_regulator_periods(now)
            leader = lock.leader if lock.held else None
            for core in sorted(be_by_core):
                budgets[core] = begin_period(budgets[core], now, leader_threshold)
                reg_open[core] = (int(now), leader)

        fill = best_effort_fill(
            {core: rt_occ[core] for core in range(m)},
            be_by_core,
            regulate,
            leader_threshold,
            budgets,
        )

        for core in range(m):
            if rt_occ[core] is not None:
                exec_id: Optional[str] = rt_occ[core].ref.task_id
            elif core in fill and fill[core][1]:
                exec_id = fill[core][0].id
            else:
                exec_id = None
            if exec_id is None:
                overhead[core] = Fraction(0)
            elif exec_id != exec_prev[core]:
                overhead[core] = switch_cost
                if rt_occ[core] is not None:
                    rt_occ[core].dispatches += 1
            exec_prev[core] = exec_id

        running_ids = {eid for eid in exec_prev if eid is not None}
        rate_of: dict[str, Fraction] = {}
        for core in range(m):
            thread = rt_occ[core]
            if thread is None or thread.ref.task_id in rate_of:
                continue
            if with_interference:
                others = running_ids - {thread.ref.task_id}
                rate_of[thread.ref.task_id] = progress_rate(thread.ref.task_id, others, model)
            else:
                rate_of[thread.ref.task_id] = Fraction(1)

        upcoming = [Fraction(horizon)]
        if release_idx < len(releases):
            upcoming.append(Fraction(releases[release_idx]))
        if regulate:
            upcoming.append(Fraction((now // reg_period + 1) * reg_period))
        for core in range(m):
            thread = rt_occ[core]
            if thread is not None:
                rate = rate_of[thread.ref.task_id]
                upcoming.append(now + overhead[core] + thread.remaining / rate)
        nxt = min(upcoming)
        assert nxt > now
        dt = nxt - now

        for core in range(m):
            thread = rt_occ[core]
            timeline = timelines[core]
            if thread is not None:
                task_id = thread.ref.task_id
                oh = min(overhead[core], dt)
                if oh > 0:
                    timeline.emit(task_id, RT_RUN, now, now + oh, Fraction(0))
                    overhead[core] -= oh
                rest = dt - oh
                if rest > 0:
                    rate = rate_of[task_id]
                    timeline.emit(task_id, RT_RUN, now + oh, nxt, rate)
                    thread.remaining -= rate * rest
                    assert thread.remaining >= 0
                    if thread.remaining == 0:
                        thread.finish = nxt
            elif core in fill:
                be, running = fill[core]
                if not running:
                    timeline.emit(be.id, BE_THROTTLED, now, nxt, Fraction(0))
                    continue
                oh = min(overhead[core], dt)
                if oh > 0:
                    timeline.emit(be.id, BE_RUN, now, now + oh, Fraction(0))
                    overhead[core] -= oh
                rest = dt - oh
                if rest <= 0:
                    continue
                if regulate:
                    budgets[core], executed = budget_advance(budgets[core], be, rest, reg_period)
                    if executed > 0:
                        timeline.emit(be.id, BE_RUN, now + oh, now + oh + executed, Fraction(1))
                    if executed < rest:
                        timeline.emit(be.id, BE_THROTTLED, now + oh + executed, nxt, Fraction(0))
                else:
                    timeline.emit(be.id, BE_RUN, now + oh, nxt, Fraction(1))
            else:
                timeline.emit(IDLE, IDLE_KIND, now, nxt, Fraction(0))
        now = nxt

    if regulate:
        close_regulator_periods(Fraction(horizon))

    segments: list[Segment] = []
    for timeline in timelines:
        rows = timeline.freeze()
        if rows:
            assert rows[0].start == 0 and rows[-1].end == horizon
        else:
            assert horizon == 0
        segments.extend(rows)

    # Conservation: per (core, task), traced rt_run progress must equal the
    # progress the job bookkeeping says was made.  Exact, zero tolerance.
    traced: dict[tuple[int, str], Fraction] = {}
    for seg in segments:
        if seg.kind == RT_RUN:
            key = (seg.core, seg.occupant)
            traced[key] = traced.get(key, Fraction(0)) + seg.duration * seg.rate
    booked: dict[tuple[int, str], Fraction] = {}
    for thread in threads:
        key = (thread.ref.core, thread.ref.task_id)
        booked[key] = booked.get(key, Fraction(0)) + (thread.compute - thread.remaining)
    for key in set(traced) | set(booked):
        assert traced.get(key, Fraction(0)) == booked.get(key, Fraction(0)), (
            f"progress conservation violated for {key}"
        )

    thread_rows = tuple(
        ThreadJobRecord(
            task_id=thread.ref.task_id,
            thread_index=thread.ref.thread_index,
            job_index=thread.ref.job_index,
            core=thread.ref.core,
            release=thread.ref.release,
            deadline=thread.deadline,
            compute=thread.compute,
            finish=thread.finish,
            progress=thread.compute - thread.remaining,
            dispatches=thread.dispatches,
        )
        for thread in sorted(
            threads, key=lambda th: (th.ref.task_id, th.ref.job_index, th.ref.thread_index)
        )
    )

    grouped: dict[tuple[str, int], list[_Thread]] = {}
    for thread in threads:
        grouped.setdefault((thread.ref.task_id, thread.ref.job_index), []).append(thread)
    job_rows = []
    for (task_id, job_index), members in sorted(grouped.items()):
        release = members[0].ref.release
        deadline = members[0].deadline
        if all(th.finish is not None for th in members):
            finish = max(th.finish for th in members)
            response = finish - release
            met: Optional[bool] = finish <= deadline
        else:
            finish = None
            response = None
            met = False if deadline <= horizon else None
        job_rows.append(JobRecord(task_id, job_index, release, deadline, finish, response, met))

    return Trace(
        fingerprint=scenario_fingerprint(scenario),
        policy=scenario.policy,
        core_count=m,
        horizon=horizon,
        segments=tuple(segments),
        jobs=tuple(job_rows),
        thread_jobs=thread_rows,
        regulator_periods=tuple(reg_rows),
    )
