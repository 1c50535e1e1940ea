"""Acceptance suite: every release criterion, exact tolerances, one per test.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion.  Everything asserts exact integer/rational equality unless the
criterion itself states otherwise.
"""

import json
import random
import time
from dataclasses import replace
from fractions import Fraction

import pytest

from conftest import merge_intervals, overlap_measure, rt_intervals_by_priority
from gangsim import cli
from gangsim.analysis import (
    generate_taskset,
    hyperperiod,
    random_scenario,
    rta_per_task,
    trace_metrics,
)
from gangsim.engine import BE_RUN, RT_RUN, simulate
from gangsim.presets import CONTEXT_SWITCH_COSTS, dnn_pi3, dnn_tx2, table1, table1_interference
from gangsim.taskmodel import (
    BestEffortTask,
    InterferenceModel,
    Platform,
    Policy,
    RtGangTask,
    Scenario,
)


def ok(criterion: int, message: str) -> None:
    print(f"criterion {criterion}: PASS  {message}")


def finish_of(trace, task_id, job_index=0):
    for job in trace.jobs:
        if job.task_id == task_id and job.job_index == job_index:
            return job.finish
    raise KeyError((task_id, job_index))


@pytest.fixture(scope="module")
def gang_traces():
    """1000 seeded random gang-policy scenarios with best-effort load."""
    out = []
    for seed in range(1000):
        scenario = random_scenario(seed)
        out.append((scenario, simulate(scenario)))
    return out


def test_criterion_1_co_schedule_reproduction():
    started = time.monotonic()
    trace = simulate(table1())
    elapsed = time.monotonic() - started
    assert finish_of(trace, "tau1") == 2_000
    assert finish_of(trace, "tau2") == 4_000
    assert trace_metrics(trace).slack == 28_000
    assert elapsed < 1.0
    ok(1, f"co-schedule: tau1@2ms tau2@4ms slack 28ms in {elapsed * 1000:.1f}ms")


def test_criterion_2_gang_policy_reproduction():
    scenario = replace(table1(), policy=Policy.RT_GANG)
    trace = simulate(scenario)
    tau1 = [(s.core, s.start, s.end) for s in trace.segments if s.occupant == "tau1" and s.kind == RT_RUN]
    tau2 = [(s.core, s.start, s.end) for s in trace.segments if s.occupant == "tau2" and s.kind == RT_RUN]
    assert tau1 == [(0, 0, 2_000), (1, 0, 2_000)]
    assert tau2 == [(2, 2_000, 6_000), (3, 2_000, 6_000)]
    assert trace_metrics(trace).slack == 28_000
    rta = rta_per_task(scenario.rt_tasks)
    assert rta == {"tau1": 2_000, "tau2": 6_000}
    assert finish_of(trace, "tau1") == rta["tau1"]
    assert finish_of(trace, "tau2") == rta["tau2"]
    ok(2, "rt-gang: tau1 [0,2)ms, tau2 [2,6)ms, slack 28ms, RTA matches simulation")


def test_criterion_3_interference_reproduction():
    trace = simulate(table1_interference())
    assert finish_of(trace, "tau1") == 5_600
    assert trace_metrics(trace).slack == 20_800
    ok(3, "co-schedule+interference: tau1 finishes at exactly 5600us, slack 20800us")


def test_criterion_4_one_gang_at_a_time(gang_traces):
    violations = 0
    for scenario, trace in gang_traces:
        running = rt_intervals_by_priority(scenario, trace)
        priorities = sorted(running)
        for i, low in enumerate(priorities):
            for high in priorities[i + 1 :]:
                if overlap_measure(running[low], running[high]) != 0:
                    violations += 1
    assert len(gang_traces) >= 1000
    assert violations == 0
    ok(4, f"no concurrent rt_run from two priorities across {len(gang_traces)} scenarios")


def _perturbed(scenario: Scenario, rng: random.Random) -> Scenario:
    """Randomize everything the isolation claim says must not matter."""
    rt_ids = [t.id for t in scenario.rt_tasks]
    cores = list(range(scenario.platform.core_count))
    rng.shuffle(cores)
    be_tasks = []
    n_be = rng.randint(0, 2)
    if n_be:
        chunk = max(1, len(cores) // n_be)
        for i in range(n_be):
            assigned = sorted(cores[i * chunk : (i + 1) * chunk])
            if assigned:
                be_tasks.append(
                    BestEffortTask(
                        id=f"noise{i}",
                        core_assignment=assigned,
                        memory_demand_rate=rng.choice([0, 80, 700, 4000]),
                    )
                )
    all_ids = rt_ids + [b.id for b in be_tasks]
    slowdown = {}
    for _ in range(rng.randint(0, 6)):
        victim = rng.choice(rt_ids)
        interferer = rng.choice(all_ids)
        if victim != interferer:
            slowdown[(victim, interferer)] = Fraction(rng.randint(10, 120), 10)
    return replace(
        scenario, be_tasks=tuple(be_tasks), interference=InterferenceModel(slowdown)
    )


def test_criterion_5_isolation_under_perturbation():
    checked = 0
    for seed in range(200):
        base = random_scenario(seed)
        key = lambda trace: sorted((j.task_id, j.release, j.finish) for j in trace.jobs)
        reference = key(simulate(base))
        rng = random.Random(10_000 + seed)
        for _ in range(2):
            variant = _perturbed(base, rng)
            assert key(simulate(variant)) == reference, seed
        checked += 1
    assert checked >= 200
    ok(5, f"rt job (release, finish) multisets invariant across {checked} perturbed scenarios")


def test_criterion_6_regulator_budget_safety(gang_traces):
    demand_of = {}
    periods_checked = 0
    for scenario, trace in gang_traces:
        for be in scenario.be_tasks:
            for core in be.core_assignment:
                demand_of[(trace.fingerprint, core)] = be.memory_demand_rate
        reg_period = scenario.platform.regulation_period
        for record in trace.regulator_periods:
            periods_checked += 1
            if record.budget is not None:
                assert record.consumed <= record.budget, (scenario.seed, record)
            # cross-check the counter against the traced execution time
            demand = demand_of[(trace.fingerprint, record.core)]
            executed = [
                (s.start, s.end)
                for s in trace.segments
                if s.core == record.core and s.kind == BE_RUN and s.rate == 1
            ]
            window = [(Fraction(record.period_start), record.period_end)]
            overlap = overlap_measure(executed, window)
            assert overlap * Fraction(demand, reg_period) == record.consumed, record
    assert periods_checked > 0

    # zero threshold: no best-effort execution while any gang runs
    overlap_total = Fraction(0)
    for seed in range(60):
        scenario = random_scenario(20_000 + seed)
        scenario = replace(
            scenario,
            rt_tasks=tuple(replace(t, bandwidth_threshold=0) for t in scenario.rt_tasks),
        )
        trace = simulate(scenario)
        rt_busy = [(s.start, s.end) for s in trace.segments if s.kind == RT_RUN]
        be_exec = [(s.start, s.end) for s in trace.segments if s.kind == BE_RUN and s.rate == 1]
        overlap_total += overlap_measure(be_exec, rt_busy)
    assert overlap_total == 0
    ok(6, f"consumed <= programmed budget over {periods_checked} regulation periods; zero-threshold overlap exactly 0")


def test_criterion_7_rta_matches_synchronous_release_simulation():
    agreed = 0
    seed = 0
    while agreed < 1000:
        seed += 1
        n_gangs = 2 + seed % 4
        core_count = 2 + seed % 7
        util = Fraction(50 + (seed * 7) % 45, 100)
        tasks = generate_taskset(
            seed=seed,
            n_gangs=n_gangs,
            total_utilization=util,
            core_count=core_count,
            period_range=(10_000, 100_000),
        )
        rta = rta_per_task(tasks)
        if any(value is None for value in rta.values()):
            continue
        horizon = min(hyperperiod([t.period for t in tasks]), 400_000)
        scenario = Scenario(
            platform=Platform(core_count=core_count),
            rt_tasks=tasks,
            policy=Policy.RT_GANG,
            horizon=horizon,
        )
        trace = simulate(scenario)
        assert not any(job.deadline_met is False for job in trace.jobs), seed
        metrics = trace_metrics(trace)
        for task in tasks:
            assert metrics.tasks[task.id].wcrt == rta[task.id], (seed, task.id)
        agreed += 1
    ok(7, f"simulated WCRT equals the RTA fixed point on {agreed} schedulable tasksets (tried {seed})")


def test_criterion_8_byte_identical_exports(tmp_path):
    for preset in ("table1", "table1-interference", "dnn-tx2", "dnn-pi3"):
        digests = []
        for attempt in range(2):
            out = tmp_path / f"{preset}-{attempt}"
            code = cli.main(
                ["run", "--preset", preset, "--out", str(out), "--formats", "segments-csv,trace-json"]
            )
            assert code == cli.EXIT_OK
            digests.append(
                ((out / "segments.csv").read_bytes(), (out / "trace.json").read_bytes())
            )
        assert digests[0] == digests[1], preset
    ok(8, "segment CSV and trace JSON byte-identical across repeated runs of all presets")


def test_criterion_9_dnn_workload_trend(tmp_path):
    for preset_name, preset in (("dnn-tx2", dnn_tx2), ("dnn-pi3", dnn_pi3)):
        out = tmp_path / preset_name
        code = cli.main(
            [
                "compare", "--preset", preset_name,
                "--policies", "solo,co-schedule-interference,rt-gang",
                "--out", str(out),
            ]
        )
        assert code == cli.EXIT_OK
        data = json.loads((out / "comparison.json").read_text())
        policies = data["policies"]
        solo = policies["solo"]["tasks"]["dnn"]
        cosched = policies["co-schedule-interference"]["tasks"]["dnn"]
        gang = policies["rt-gang"]["tasks"]["dnn"]

        solo_wcrt = Fraction(str(solo["max_us"]))
        cosched_wcrt = Fraction(str(cosched["max_us"]))
        # strictly worse under co-scheduling; supplied factor 10.33 >= 2
        # so the qualitative >=2x observation must hold as well
        assert cosched_wcrt > solo_wcrt
        assert cosched_wcrt >= 2 * solo_wcrt
        # under the gang policy the dnn task (highest priority) sees only
        # its RTA-predicted delay, which is zero: identical to solo
        assert gang == solo

        scenario = preset()
        rta = rta_per_task(scenario.rt_tasks)
        dnn_compute = max(scenario.rt_task("dnn").per_thread_compute)
        assert rta["dnn"] == dnn_compute
        assert Fraction(str(gang["max_us"])) == rta["dnn"]
        assert Fraction(str(gang["min_us"])) == rta["dnn"]
        # lower-priority gang agrees with its analytic bound when finite
        if rta["bww"] is not None:
            bww = policies["rt-gang"]["tasks"]["bww"]
            assert Fraction(str(bww["max_us"])) == rta["bww"]
    ok(9, "co-schedule dnn WCRT > 2x solo; rt-gang dnn distribution == solo == RTA bound")


def test_criterion_10_context_switch_cost_accounting():
    cost = CONTEXT_SWITCH_COSTS["rt-gang-1thread"]
    assert cost == Fraction("7.19")

    def paid_platform(platform):
        return replace(platform, context_switch_cost=cost)

    # dispatch-free coupling: a lone gang under the gang policy, and the
    # two-gang example on disjoint cores under plain co-scheduling
    lone = Scenario(
        platform=Platform(core_count=2),
        rt_tasks=[
            RtGangTask(id="a", priority=1, period=10_000, per_thread_compute=(2_000, 1_500), core_assignment=(0, 1)),
        ],
        policy=Policy.RT_GANG,
        horizon=30_000,
    )
    disjoint = replace(table1(), be_tasks=())

    checked = 0
    for scenario in (lone, disjoint):
        free = simulate(scenario)
        paid = simulate(replace(scenario, platform=paid_platform(scenario.platform)))
        assert [
            (tj.task_id, tj.thread_index, tj.job_index, tj.dispatches) for tj in free.thread_jobs
        ] == [
            (tj.task_id, tj.thread_index, tj.job_index, tj.dispatches) for tj in paid.thread_jobs
        ]
        for before, after in zip(free.thread_jobs, paid.thread_jobs):
            assert after.finish - before.finish == after.dispatches * cost
            checked += 1
    assert checked > 0
    ok(10, f"finish times shift by exactly dispatches x 7.19us for {checked} thread-jobs (exact rationals, no rounding)")
