"""Domain types for platform, tasks, gangs and scenarios.

Conventions used throughout the package:

* Durations and timestamps are integer microseconds at the model boundary.
  The simulator widens to exact rationals (``fractions.Fraction``)
  internally, so there is no float drift anywhere.  The context-switch
  cost may itself be fractional (measured costs such as 7.19 us are kept
  exact as 719/100).
* A larger priority integer means higher priority.
* Deadlines are implicit and equal to the period.
* Releases are strictly periodic with an optional fixed offset.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

RationalLike = Union[int, float, str, Fraction]

FORMAT_VERSION = 1


def to_fraction(value: RationalLike) -> Fraction:
    """Exact rational from an int, Fraction, string, or decimal float.

    Floats are converted through their shortest decimal repr, so a value
    written as ``10.33`` means exactly 1033/100.  Strings may be decimal
    ("7.19") or rational ("719/100") literals.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational")


def encode_rational(value: Fraction) -> Union[int, str]:
    """JSON-friendly exact encoding: plain int when integral, else 'num/den'."""
    if value.denominator == 1:
        return int(value)
    return str(value)


class Policy(str, Enum):
    """Scheduling policy applied by the simulation engine."""

    CO_SCHEDULE = "co-schedule"
    CO_SCHEDULE_INTERFERENCE = "co-schedule-interference"
    RT_GANG = "rt-gang"


@dataclass(frozen=True)
class Platform:
    """Homogeneous shared-memory multicore platform.

    regulation_period is the interval over which per-core memory budgets
    are enforced; context_switch_cost is charged as non-progress time
    whenever a core switches to a new occupant.
    """

    core_count: int
    regulation_period: int = 1000
    context_switch_cost: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_switch_cost", to_fraction(self.context_switch_cost))


@dataclass(frozen=True)
class RtGangTask:
    """Periodic parallel real-time task; all threads released together.

    per_thread_compute holds each thread's solo execution time and
    core_assignment pins thread i to core_assignment[i] (no migration).
    bandwidth_threshold is the memory traffic (transactions per regulation
    period, per best-effort core) this task tolerates from best-effort
    work while it runs; 0 forbids best-effort co-scheduling entirely.
    """

    id: str
    priority: int
    period: int
    per_thread_compute: Sequence[int]
    core_assignment: Sequence[int]
    bandwidth_threshold: int = 0
    release_offset: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_thread_compute", tuple(self.per_thread_compute))
        object.__setattr__(self, "core_assignment", tuple(self.core_assignment))

    @property
    def thread_count(self) -> int:
        return len(self.per_thread_compute)

    @property
    def utilization(self) -> Fraction:
        """Gang utilization: widest thread compute over period."""
        return Fraction(max(self.per_thread_compute), self.period)


@dataclass(frozen=True)
class VirtualGangSpec:
    """Statically linked set of tasks scheduled as one gang.

    Binding assigns shared_priority and bandwidth_threshold to every
    member; afterwards gang identity is the priority value.
    """

    member_ids: Sequence[str]
    shared_priority: int
    bandwidth_threshold: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "member_ids", tuple(self.member_ids))


@dataclass(frozen=True)
class BestEffortTask:
    """Fluid best-effort workload with infinite backlog.

    Always ready, always below every real-time task; one thread per
    assigned core.  memory_demand_rate is in transactions per regulation
    period while running unthrottled.
    """

    id: str
    core_assignment: Sequence[int]
    memory_demand_rate: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "core_assignment", tuple(self.core_assignment))


@dataclass(frozen=True)
class InterferenceModel:
    """Pairwise slowdown factors for co-scheduled execution.

    slowdown maps (victim id, interferer id) to a factor >= 1 by which the
    victim's progress stretches while the interferer runs anywhere on the
    platform.  Missing pairs and self-pairs are 1 (no interference).
    """

    slowdown: Mapping[tuple[str, str], Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        normalized = {
            (victim, interferer): to_fraction(factor)
            for (victim, interferer), factor in self.slowdown.items()
        }
        object.__setattr__(self, "slowdown", normalized)

    def factor(self, victim: str, interferer: str) -> Fraction:
        if victim == interferer:
            return Fraction(1)
        return self.slowdown.get((victim, interferer), Fraction(1))


@dataclass(frozen=True)
class Scenario:
    """Complete simulation input: platform, workload, policy, horizon."""

    platform: Platform
    rt_tasks: Sequence[RtGangTask] = ()
    virtual_gangs: Sequence[VirtualGangSpec] = ()
    be_tasks: Sequence[BestEffortTask] = ()
    interference: InterferenceModel = field(default_factory=InterferenceModel)
    policy: Policy = Policy.CO_SCHEDULE
    horizon: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rt_tasks", tuple(self.rt_tasks))
        object.__setattr__(self, "virtual_gangs", tuple(self.virtual_gangs))
        object.__setattr__(self, "be_tasks", tuple(self.be_tasks))
        object.__setattr__(self, "policy", Policy(self.policy))

    def rt_task(self, task_id: str) -> RtGangTask:
        for task in self.rt_tasks:
            if task.id == task_id:
                return task
        raise KeyError(task_id)


@dataclass(frozen=True)
class Violation:
    """One structural invariant violation, naming the offending entity."""

    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


class BindError(ValueError):
    """Raised when virtual-gang membership cannot be resolved."""


def _gang_priority_map(scenario: Scenario) -> dict[str, int]:
    """Effective gang priority per rt task, honoring virtual-gang specs."""
    member_of: dict[str, VirtualGangSpec] = {}
    for gang in scenario.virtual_gangs:
        for member in gang.member_ids:
            member_of[member] = gang
    result = {}
    for task in scenario.rt_tasks:
        gang = member_of.get(task.id)
        result[task.id] = gang.shared_priority if gang is not None else task.priority
    return result


def validate(scenario: Scenario) -> list[Violation]:
    """Check every structural invariant; returns all violations found.

    Violations are data, not failures: an empty list means the scenario is
    ready for binding and simulation.
    """
    out: list[Violation] = []
    platform = scenario.platform
    if platform.core_count < 1:
        out.append(Violation("platform", f"core_count must be >= 1, got {platform.core_count}"))
    if platform.regulation_period <= 0:
        out.append(Violation("platform", "regulation_period must be > 0"))
    if platform.context_switch_cost < 0:
        out.append(Violation("platform", "context_switch_cost must be >= 0"))

    seen_ids: set[str] = set()
    for task in scenario.rt_tasks:
        if task.id in seen_ids:
            out.append(Violation(task.id, "duplicate task id"))
        seen_ids.add(task.id)
        if task.thread_count < 1:
            out.append(Violation(task.id, "task must have at least one thread"))
        if task.period <= 0:
            out.append(Violation(task.id, "period must be > 0"))
        if len(task.core_assignment) != task.thread_count:
            out.append(Violation(task.id, "core_assignment length must match thread count"))
        if len(set(task.core_assignment)) != len(task.core_assignment):
            out.append(Violation(task.id, "core assignment must use distinct cores"))
        for core in task.core_assignment:
            if not 0 <= core < platform.core_count:
                out.append(Violation(task.id, f"core index {core} out of range [0, {platform.core_count})"))
        for compute in task.per_thread_compute:
            if compute <= 0:
                out.append(Violation(task.id, "per-thread compute must be > 0"))
            elif compute > task.period:
                out.append(Violation(task.id, f"compute {compute} exceeds period {task.period}"))
        if task.bandwidth_threshold < 0:
            out.append(Violation(task.id, "bandwidth_threshold must be >= 0"))
        if task.release_offset < 0:
            out.append(Violation(task.id, "release_offset must be >= 0"))

    rt_ids = {task.id for task in scenario.rt_tasks}
    claimed: dict[str, int] = {}
    for index, gang in enumerate(scenario.virtual_gangs):
        name = f"virtual-gang[{index}]"
        if not gang.member_ids:
            out.append(Violation(name, "virtual gang has no members"))
        for member in gang.member_ids:
            if member not in rt_ids:
                out.append(Violation(name, f"unknown member {member}"))
            elif member in claimed:
                out.append(Violation(member, "task claimed by two virtual gangs"))
            else:
                claimed[member] = index
        if gang.bandwidth_threshold < 0:
            out.append(Violation(name, "bandwidth_threshold must be >= 0"))

    if scenario.policy is Policy.RT_GANG and not any(v.entity.startswith("virtual-gang") for v in out):
        by_priority: dict[int, list[str]] = {}
        members = {m for g in scenario.virtual_gangs for m in g.member_ids}
        for gang in scenario.virtual_gangs:
            by_priority.setdefault(gang.shared_priority, []).append(
                "virtual-gang{" + ",".join(gang.member_ids) + "}"
            )
        for task in scenario.rt_tasks:
            if task.id not in members:
                by_priority.setdefault(task.priority, []).append(task.id)
        for priority, names in sorted(by_priority.items()):
            if len(names) > 1:
                out.append(
                    Violation(
                        ",".join(names),
                        f"gangs must have distinct priorities, {priority} is shared",
                    )
                )

    be_core_owner: dict[int, str] = {}
    for be in scenario.be_tasks:
        if be.id in seen_ids:
            out.append(Violation(be.id, "duplicate task id"))
        seen_ids.add(be.id)
        if not be.core_assignment:
            out.append(Violation(be.id, "best-effort task must be assigned at least one core"))
        if be.memory_demand_rate < 0:
            out.append(Violation(be.id, "memory_demand_rate must be >= 0"))
        for core in be.core_assignment:
            if not 0 <= core < platform.core_count:
                out.append(Violation(be.id, f"core index {core} out of range [0, {platform.core_count})"))
            elif core in be_core_owner:
                out.append(
                    Violation(be.id, f"core {core} already assigned to best-effort task {be_core_owner[core]}")
                )
            else:
                be_core_owner[core] = be.id

    for (victim, interferer), factor in scenario.interference.slowdown.items():
        if factor < 1:
            out.append(Violation(victim, f"slowdown({victim},{interferer}) must be >= 1, got {factor}"))
        if victim == interferer and factor != 1:
            out.append(Violation(victim, "self-interference factor must be 1"))

    if scenario.horizon <= 0:
        out.append(Violation("scenario", "horizon must be > 0"))
    return out


def bind_virtual_gangs(scenario: Scenario) -> Scenario:
    """Stamp each virtual gang's shared priority and threshold onto its members.

    Idempotent; gang identity is the priority value afterwards.  Raises
    BindError for unknown members or overlapping membership.
    """
    member_of: dict[str, VirtualGangSpec] = {}
    rt_ids = {task.id for task in scenario.rt_tasks}
    for gang in scenario.virtual_gangs:
        for member in gang.member_ids:
            if member not in rt_ids:
                raise BindError(f"virtual gang references unknown task {member}")
            if member in member_of:
                raise BindError(f"task {member} is a member of two virtual gangs")
            member_of[member] = gang
    if not member_of:
        return scenario
    bound = []
    for task in scenario.rt_tasks:
        gang = member_of.get(task.id)
        if gang is None:
            bound.append(task)
        else:
            bound.append(
                replace(task, priority=gang.shared_priority, bandwidth_threshold=gang.bandwidth_threshold)
            )
    return replace(scenario, rt_tasks=tuple(bound))


def virtual_gangs_bound(scenario: Scenario) -> bool:
    """True when every virtual-gang member already carries the gang's values."""
    tasks = {task.id: task for task in scenario.rt_tasks}
    for gang in scenario.virtual_gangs:
        for member in gang.member_ids:
            task = tasks.get(member)
            if task is None:
                return False
            if task.priority != gang.shared_priority:
                return False
            if task.bandwidth_threshold != gang.bandwidth_threshold:
                return False
    return True


def scenario_to_dict(scenario: Scenario) -> dict:
    """Scenario as a JSON-compatible dict (the on-disk file schema)."""
    return {
        "format_version": FORMAT_VERSION,
        "platform": {
            "core_count": scenario.platform.core_count,
            "regulation_period_us": scenario.platform.regulation_period,
            "context_switch_cost_us": encode_rational(scenario.platform.context_switch_cost),
        },
        "rt_tasks": [
            {
                "id": task.id,
                "priority": task.priority,
                "period_us": task.period,
                "per_thread_compute_us": list(task.per_thread_compute),
                "core_assignment": list(task.core_assignment),
                "bandwidth_threshold": task.bandwidth_threshold,
                "release_offset_us": task.release_offset,
            }
            for task in scenario.rt_tasks
        ],
        "virtual_gangs": [
            {
                "member_ids": list(gang.member_ids),
                "shared_priority": gang.shared_priority,
                "bandwidth_threshold": gang.bandwidth_threshold,
            }
            for gang in scenario.virtual_gangs
        ],
        "be_tasks": [
            {
                "id": be.id,
                "core_assignment": list(be.core_assignment),
                "memory_demand_rate": be.memory_demand_rate,
            }
            for be in scenario.be_tasks
        ],
        "interference": {
            "slowdown": [
                {"victim": victim, "interferer": interferer, "factor": encode_rational(factor)}
                for (victim, interferer), factor in sorted(scenario.interference.slowdown.items())
            ]
        },
        "policy": scenario.policy.value,
        "horizon_us": scenario.horizon,
        "seed": scenario.seed,
    }


def scenario_from_dict(data: dict) -> Scenario:
    """Parse the scenario file schema; raises ValueError on malformed input."""
    if not isinstance(data, dict):
        raise ValueError("scenario file must contain a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        plat = data["platform"]
        platform = Platform(
            core_count=int(plat["core_count"]),
            regulation_period=int(plat.get("regulation_period_us", 1000)),
            context_switch_cost=to_fraction(plat.get("context_switch_cost_us", 0)),
        )
        rt_tasks = [
            RtGangTask(
                id=str(item["id"]),
                priority=int(item["priority"]),
                period=int(item["period_us"]),
                per_thread_compute=[int(c) for c in item["per_thread_compute_us"]],
                core_assignment=[int(c) for c in item["core_assignment"]],
                bandwidth_threshold=int(item.get("bandwidth_threshold", 0)),
                release_offset=int(item.get("release_offset_us", 0)),
            )
            for item in data.get("rt_tasks", [])
        ]
        virtual_gangs = [
            VirtualGangSpec(
                member_ids=[str(m) for m in item["member_ids"]],
                shared_priority=int(item["shared_priority"]),
                bandwidth_threshold=int(item.get("bandwidth_threshold", 0)),
            )
            for item in data.get("virtual_gangs", [])
        ]
        be_tasks = [
            BestEffortTask(
                id=str(item["id"]),
                core_assignment=[int(c) for c in item["core_assignment"]],
                memory_demand_rate=int(item.get("memory_demand_rate", 0)),
            )
            for item in data.get("be_tasks", [])
        ]
        slowdown = {
            (str(item["victim"]), str(item["interferer"])): to_fraction(item["factor"])
            for item in data.get("interference", {}).get("slowdown", [])
        }
        return Scenario(
            platform=platform,
            rt_tasks=rt_tasks,
            virtual_gangs=virtual_gangs,
            be_tasks=be_tasks,
            interference=InterferenceModel(slowdown),
            policy=Policy(data["policy"]),
            horizon=int(data["horizon_us"]),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed scenario: {exc}") from exc


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def scenario_fingerprint(scenario: Scenario) -> str:
    """Stable content hash of the scenario, embedded in traces."""
    payload = canonical_json(scenario_to_dict(scenario)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
