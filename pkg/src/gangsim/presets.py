"""Bundled example scenarios and measured context-switch cost presets.

The `table1` pair is a small four-core illustrative taskset: two two-thread
gangs on disjoint core pairs plus one best-effort task spanning all cores.
The `dnn-*` pair models a DNN inference loop (two threads, high priority)
co-located with a four-thread memory-stressing gang and two best-effort
tasks, parameterized for a TX2-class and a Pi3-class board.  Slowdown
factors and bandwidth numbers are scenario inputs, not predictions.
"""

from __future__ import annotations

from fractions import Fraction

from .taskmodel import (
    BestEffortTask,
    InterferenceModel,
    Platform,
    Policy,
    RtGangTask,
    Scenario,
)

# Measured cost of one context switch (microseconds) by preempted-gang size;
# usable via `--context-switch-cost <name>`.
CONTEXT_SWITCH_COSTS = {
    "linux-1thread": Fraction("6.81"),
    "rt-gang-1thread": Fraction("7.19"),
    "rt-gang-2thread": Fraction("7.37"),
    "rt-gang-3thread": Fraction("7.55"),
    "rt-gang-4thread": Fraction("7.72"),
}


def table1() -> Scenario:
    """Two gangs (2ms/10ms and 4ms/10ms, two threads each) on four cores."""
    return Scenario(
        platform=Platform(core_count=4),
        rt_tasks=[
            RtGangTask(
                id="tau1",
                priority=2,
                period=10_000,
                per_thread_compute=(2_000, 2_000),
                core_assignment=(0, 1),
                bandwidth_threshold=100,
            ),
            RtGangTask(
                id="tau2",
                priority=1,
                period=10_000,
                per_thread_compute=(4_000, 4_000),
                core_assignment=(2, 3),
                bandwidth_threshold=100,
            ),
        ],
        be_tasks=[
            BestEffortTask(id="tau3_be", core_assignment=(0, 1, 2, 3), memory_demand_rate=200),
        ],
        policy=Policy.CO_SCHEDULE,
        horizon=10_000,
    )


def table1_interference() -> Scenario:
    """table1 plus a 10x slowdown of tau1 while tau2 co-runs (tau2 unaffected)."""
    base = table1()
    return Scenario(
        platform=base.platform,
        rt_tasks=base.rt_tasks,
        be_tasks=base.be_tasks,
        interference=InterferenceModel(
            {("tau1", "tau2"): Fraction(10), ("tau2", "tau1"): Fraction(1)}
        ),
        policy=Policy.CO_SCHEDULE_INTERFERENCE,
        horizon=base.horizon,
    )


def _dnn_scenario(dnn_compute: int, dnn_period: int, bww_compute: int) -> Scenario:
    return Scenario(
        platform=Platform(core_count=4),
        rt_tasks=[
            RtGangTask(
                id="dnn",
                priority=2,
                period=dnn_period,
                per_thread_compute=(dnn_compute, dnn_compute),
                core_assignment=(0, 1),
                bandwidth_threshold=100,
            ),
            RtGangTask(
                id="bww",
                priority=1,
                period=100_000,
                per_thread_compute=(bww_compute,) * 4,
                core_assignment=(0, 1, 2, 3),
                bandwidth_threshold=1_000,
            ),
        ],
        be_tasks=[
            BestEffortTask(id="cutcp", core_assignment=(0, 1), memory_demand_rate=0),
            BestEffortTask(id="lbm", core_assignment=(2, 3), memory_demand_rate=500),
        ],
        interference=InterferenceModel(
            {("dnn", "bww"): Fraction("10.33"), ("bww", "dnn"): Fraction("1.05")}
        ),
        policy=Policy.RT_GANG,
        horizon=1_000_000,
    )


def dnn_tx2() -> Scenario:
    """Two-core DNN loop (10.7ms/24ms) vs a 40ms/100ms memory gang, TX2-class."""
    return _dnn_scenario(dnn_compute=10_700, dnn_period=24_000, bww_compute=40_000)


def dnn_pi3() -> Scenario:
    """Two-core DNN loop (34ms/78ms) vs a 47ms/100ms memory gang, Pi3-class."""
    return _dnn_scenario(dnn_compute=34_000, dnn_period=78_000, bww_compute=47_000)


PRESETS = {
    "table1": table1,
    "table1-interference": table1_interference,
    "dnn-tx2": dnn_tx2,
    "dnn-pi3": dnn_pi3,
}


def load_preset(name: str) -> Scenario:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return factory()
