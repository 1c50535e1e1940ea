"""Schedulability analysis, trace metrics, and random taskset generation.

The one-gang-at-a-time policy serializes gangs, so the platform behaves
like a single fixed-priority preemptive core whose "tasks" are gangs.
That makes classical fixed-point response-time analysis applicable: a
gang's cost is its widest thread compute (the machine is occupied until
the last thread finishes) and its deadline its period.
"""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .engine import BE_RUN, BE_THROTTLED, IDLE_KIND, RT_RUN, Trace
from .taskmodel import (
    BestEffortTask,
    InterferenceModel,
    Platform,
    Policy,
    RtGangTask,
    Scenario,
    to_fraction,
)

HYPERPERIOD_CAP = 10**9  # microseconds


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class GangParams:
    """Analysis-level view of one gang (singleton task or virtual gang)."""

    priority: int
    cost: int
    period: int
    member_ids: tuple[str, ...]


def gang_parameters(tasks: Sequence[RtGangTask]) -> list[GangParams]:
    """Collapse bound tasks into gangs, highest priority first.

    cost = widest member thread compute (the lock is held until the last
    thread completes); period = shortest member period, which analyzes
    mixed-period virtual gangs conservatively and is exact otherwise.
    """
    groups: dict[int, list[RtGangTask]] = {}
    for task in tasks:
        groups.setdefault(task.priority, []).append(task)
    out = []
    for priority in sorted(groups, reverse=True):
        members = groups[priority]
        out.append(
            GangParams(
                priority=priority,
                cost=max(max(t.per_thread_compute) for t in members),
                period=min(t.period for t in members),
                member_ids=tuple(sorted(t.id for t in members)),
            )
        )
    return out


def rta_gang(tasks: Sequence[RtGangTask]) -> dict[int, Optional[int]]:
    """Worst-case response time per gang priority; None = unschedulable.

    Iterates R = C_i + sum_{j in hp(i)} ceil(R / P_j) * C_j from R = C_i
    to a fixed point, giving up once R exceeds the gang's deadline
    (= period).  Exact integer arithmetic.
    """
    gangs = gang_parameters(tasks)
    result: dict[int, Optional[int]] = {}
    for index, gang in enumerate(gangs):
        higher = gangs[:index]
        response = gang.cost
        while True:
            demand = gang.cost + sum(
                ceil_div(response, hp.period) * hp.cost for hp in higher
            )
            if demand == response:
                result[gang.priority] = response
                break
            response = demand
            if response > gang.period:
                result[gang.priority] = None
                break
    return result


def rta_per_task(tasks: Sequence[RtGangTask]) -> dict[str, Optional[int]]:
    """Per-task WCRT: each task inherits its gang's response time."""
    by_gang = rta_gang(tasks)
    return {task.id: by_gang[task.priority] for task in tasks}


def hyperperiod(periods: Sequence[int]) -> int:
    return math.lcm(*periods)


def bounded_hyperperiod(
    periods: Sequence[int], cap: int = HYPERPERIOD_CAP, fallback: Optional[int] = None
) -> int:
    """Hyperperiod, or a fallback horizon (with a warning) when it exceeds cap."""
    value = hyperperiod(periods)
    if value <= cap:
        return value
    horizon = fallback if fallback is not None else 2 * max(periods)
    warnings.warn(
        f"hyperperiod {value}us exceeds cap {cap}us; falling back to horizon {horizon}us",
        stacklevel=2,
    )
    return horizon


@dataclass(frozen=True)
class TaskMetrics:
    task_id: str
    jobs: int
    finished: int
    missed: int
    responses: tuple[Fraction, ...]
    wcrt: Optional[Fraction]


@dataclass(frozen=True)
class TraceMetrics:
    """Aggregates computed purely from a trace."""

    slack: Fraction
    busy: Mapping[str, Fraction]
    utilization: Mapping[str, Fraction]
    tasks: Mapping[str, TaskMetrics]


def trace_metrics(trace: Trace) -> TraceMetrics:
    """Slack, per-class busy time/utilization, and per-task response stats.

    Slack is core-time not spent running real-time work:
    sum over cores of (horizon - rt_run time).
    """
    busy: dict[str, Fraction] = {
        RT_RUN: Fraction(0),
        BE_RUN: Fraction(0),
        BE_THROTTLED: Fraction(0),
        IDLE_KIND: Fraction(0),
    }
    for seg in trace.segments:
        busy[seg.kind] += seg.duration
    total = Fraction(trace.core_count * trace.horizon)
    slack = total - busy[RT_RUN]
    utilization = {kind: (value / total if total else Fraction(0)) for kind, value in busy.items()}

    per_task: dict[str, TaskMetrics] = {}
    grouped: dict[str, list] = {}
    for job in trace.jobs:
        grouped.setdefault(job.task_id, []).append(job)
    for task_id, jobs in grouped.items():
        responses = tuple(sorted(j.response for j in jobs if j.response is not None))
        per_task[task_id] = TaskMetrics(
            task_id=task_id,
            jobs=len(jobs),
            finished=sum(1 for j in jobs if j.finish is not None),
            missed=sum(1 for j in jobs if j.deadline_met is False),
            responses=responses,
            wcrt=max(responses) if responses else None,
        )
    return TraceMetrics(slack=slack, busy=busy, utilization=utilization, tasks=per_task)


@dataclass(frozen=True)
class TaskAnalysis:
    """One task's analytic and simulated outcome side by side."""

    task_id: str
    priority: int
    rta_wcrt: Optional[int]
    simulated_wcrt: Optional[Fraction]
    deadline_met: Optional[bool]
    jobs: int
    finished: int
    missed: int


@dataclass(frozen=True)
class AnalysisReport:
    policy: Policy
    core_count: int
    horizon: int
    slack: Fraction
    utilization: Mapping[str, Fraction]
    tasks: tuple[TaskAnalysis, ...]


def analyze(rt_tasks: Sequence[RtGangTask], trace: Trace) -> AnalysisReport:
    """Combine gang RTA with simulated trace metrics into one report.

    The RTA column assumes the gang policy; for baseline traces it is
    reported as the reference bound the gang policy would achieve.
    """
    rta = rta_per_task(rt_tasks)
    metrics = trace_metrics(trace)
    rows = []
    for task in sorted(rt_tasks, key=lambda t: (-t.priority, t.id)):
        tm = metrics.tasks.get(task.id)
        if tm is None:
            rows.append(TaskAnalysis(task.id, task.priority, rta[task.id], None, None, 0, 0, 0))
            continue
        determinate = tm.finished + tm.missed
        met: Optional[bool] = None if determinate == 0 else tm.missed == 0
        rows.append(
            TaskAnalysis(
                task_id=task.id,
                priority=task.priority,
                rta_wcrt=rta[task.id],
                simulated_wcrt=tm.wcrt,
                deadline_met=met,
                jobs=tm.jobs,
                finished=tm.finished,
                missed=tm.missed,
            )
        )
    return AnalysisReport(
        policy=trace.policy,
        core_count=trace.core_count,
        horizon=trace.horizon,
        slack=metrics.slack,
        utilization=metrics.utilization,
        tasks=tuple(rows),
    )


def generate_taskset(
    seed: int,
    n_gangs: int,
    total_utilization,
    core_count: int,
    period_range: tuple[int, int],
    util_resolution: int = 10_000,
    bandwidth_threshold: int = 0,
) -> list[RtGangTask]:
    """Random gang set whose utilizations sum to total_utilization exactly.

    The utilization split is uniform over the discrete simplex at
    1/util_resolution granularity, and each period is drawn from
    period_range snapped so the compute time comes out an exact integer
    (so sum(C_i/P_i) equals the requested total in rational arithmetic).
    Priorities are rate-monotonic: shorter period = higher priority, ties
    broken by generation order.  Deterministic in seed.
    """
    if n_gangs < 1:
        raise ValueError("n_gangs must be >= 1")
    rng = random.Random(seed)
    total = to_fraction(total_utilization)
    if not 0 < total <= 1:
        raise ValueError(f"total_utilization must be in (0, 1], got {total}")
    scaled = total * util_resolution
    if scaled.denominator != 1:
        raise ValueError("total_utilization is finer than util_resolution")
    units = int(scaled)
    if units < n_gangs:
        raise ValueError("total_utilization too small to give every gang a share")
    lo, hi = period_range
    if lo <= 0 or hi < lo:
        raise ValueError(f"bad period range {period_range}")

    if n_gangs == 1:
        parts = [units]
    else:
        cuts = sorted(rng.sample(range(1, units), n_gangs - 1))
        bounds = [0] + cuts + [units]
        parts = [b - a for a, b in zip(bounds, bounds[1:])]

    drafts = []
    for share in parts:
        step = util_resolution // math.gcd(share, util_resolution)
        j_lo = ceil_div(lo, step)
        j_hi = hi // step
        if j_lo > j_hi:
            raise ValueError(
                f"period range {period_range} cannot fit utilization granularity {step}us"
            )
        period = rng.randint(j_lo, j_hi) * step
        compute = share * period // util_resolution
        thread_count = rng.randint(1, core_count)
        cores = sorted(rng.sample(range(core_count), thread_count))
        drafts.append((period, compute, cores))

    order = sorted(range(n_gangs), key=lambda i: (drafts[i][0], i))
    priority_of = {gang: n_gangs - rank for rank, gang in enumerate(order)}
    tasks = []
    for i, (period, compute, cores) in enumerate(drafts):
        tasks.append(
            RtGangTask(
                id=f"g{i + 1}",
                priority=priority_of[i],
                period=period,
                per_thread_compute=(compute,) * len(cores),
                core_assignment=cores,
                bandwidth_threshold=bandwidth_threshold,
            )
        )
    return tasks


def random_scenario(
    seed: int,
    min_gangs: int = 2,
    max_gangs: int = 6,
    min_cores: int = 2,
    max_cores: int = 8,
    policy: Policy = Policy.RT_GANG,
    with_best_effort: bool = True,
    with_offsets: bool = True,
) -> Scenario:
    """Seeded random scenario for property testing: gangs, best-effort
    tasks with assorted demand rates, thresholds (including zero), and a
    sprinkling of interference factors."""
    rng = random.Random(seed)
    core_count = rng.randint(min_cores, max_cores)
    n_gangs = rng.randint(min_gangs, max_gangs)
    util = Fraction(rng.randint(40, 95), 100)
    base = generate_taskset(
        seed=rng.randrange(2**32),
        n_gangs=n_gangs,
        total_utilization=util,
        core_count=core_count,
        period_range=(10_000, 60_000),
    )
    tasks = []
    for task in base:
        offset = rng.choice([0, 0, rng.randint(0, 5_000)]) if with_offsets else 0
        tasks.append(
            replace(
                task,
                release_offset=offset,
                bandwidth_threshold=rng.choice([0, 0, 50, 200, 10**6]),
            )
        )

    be_tasks: list[BestEffortTask] = []
    if with_best_effort:
        free = list(range(core_count))
        rng.shuffle(free)
        n_be = rng.randint(1, 2)
        chunk = max(1, len(free) // n_be)
        for i in range(n_be):
            cores = sorted(free[i * chunk : (i + 1) * chunk])
            if not cores:
                continue
            be_tasks.append(
                BestEffortTask(
                    id=f"be{i + 1}",
                    core_assignment=cores,
                    memory_demand_rate=rng.choice([0, 100, 300, 1500]),
                )
            )

    ids = [t.id for t in tasks] + [b.id for b in be_tasks]
    slowdown = {}
    for _ in range(rng.randint(0, 4)):
        victim = rng.choice([t.id for t in tasks])
        interferer = rng.choice(ids)
        if victim == interferer:
            continue
        slowdown[(victim, interferer)] = to_fraction(rng.choice(["1.5", "2", "4", "10.33"]))

    horizon = 2 * max(t.period for t in tasks)
    return Scenario(
        platform=Platform(core_count=core_count),
        rt_tasks=tasks,
        be_tasks=be_tasks,
        interference=InterferenceModel(slowdown),
        policy=policy,
        horizon=horizon,
        seed=seed,
    )
