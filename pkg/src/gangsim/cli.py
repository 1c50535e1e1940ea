"""Command-line front end: scenario runs, policy comparison, exports.

Exit codes: 0 success, 1 I/O failure, 2 validation/usage failure.
All emitted files are pure functions of the scenario, so repeated runs
are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .analysis import AnalysisReport, analyze, ceil_div, trace_metrics
from .engine import (
    JobRecord,
    RegulatorPeriodRecord,
    ScenarioError,
    Segment,
    ThreadJobRecord,
    Trace,
    simulate,
)
from .presets import CONTEXT_SWITCH_COSTS, PRESETS, load_preset
from .taskmodel import (
    Policy,
    Scenario,
    bind_virtual_gangs,
    canonical_json,
    encode_rational,
    scenario_fingerprint,
    scenario_from_dict,
    scenario_to_dict,
    to_fraction,
    validate,
)

EXPORT_FORMATS = ("segments-csv", "trace-json", "report-text", "report-json")
OUTPUT_DIR_ENV = "GANGSIM_OUTPUT_DIR"
TRACE_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2


@dataclass
class RunConfig:
    """Everything one `run` invocation needs."""

    scenario_path: Optional[str] = None
    preset: Optional[str] = None
    policy: Optional[Policy] = None
    output_dir: Optional[str] = None
    formats: tuple[str, ...] = EXPORT_FORMATS
    context_switch_cost: Optional[Fraction] = None
    horizon: Optional[int] = None


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "gangsim-out"))


def _encode_opt(value) -> object:
    return None if value is None else encode_rational(Fraction(value))


def _number(value: Fraction) -> object:
    """Trace-event timestamps: exact int when integral, else float."""
    return int(value) if value.denominator == 1 else float(value)


def write_segments_csv(trace: Trace, path: Path) -> None:
    """Exact per-core execution segments; rationals as num/den, no floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["core", "occupant", "kind", "start_us", "end_us", "progress_rate_num", "progress_rate_den"]
        )
        for seg in trace.segments:
            writer.writerow(
                [
                    seg.core,
                    seg.occupant,
                    seg.kind,
                    encode_rational(seg.start),
                    encode_rational(seg.end),
                    seg.rate.numerator,
                    seg.rate.denominator,
                ]
            )


def trace_to_dict(trace: Trace) -> dict:
    """Trace as a browser trace-event JSON object (one X event per segment,
    process = platform, thread = core).  Exact values ride in args and
    otherData so the file re-imports losslessly."""
    events = []
    for seg in trace.segments:
        events.append(
            {
                "name": seg.occupant,
                "cat": seg.kind,
                "ph": "X",
                "pid": 0,
                "tid": seg.core,
                "ts": _number(seg.start),
                "dur": _number(seg.duration),
                "args": {
                    "start_us": encode_rational(seg.start),
                    "end_us": encode_rational(seg.end),
                    "rate": encode_rational(seg.rate),
                },
            }
        )
    return {
        "displayTimeUnit": "ms",
        "traceEvents": events,
        "otherData": {
            "format_version": TRACE_FORMAT_VERSION,
            "fingerprint": trace.fingerprint,
            "policy": trace.policy.value,
            "core_count": trace.core_count,
            "horizon_us": trace.horizon,
            "jobs": [
                {
                    "task_id": job.task_id,
                    "job_index": job.job_index,
                    "release_us": job.release,
                    "deadline_us": job.deadline,
                    "finish_us": _encode_opt(job.finish),
                    "response_us": _encode_opt(job.response),
                    "deadline_met": job.deadline_met,
                }
                for job in trace.jobs
            ],
            "thread_jobs": [
                {
                    "task_id": tj.task_id,
                    "thread_index": tj.thread_index,
                    "job_index": tj.job_index,
                    "core": tj.core,
                    "release_us": tj.release,
                    "deadline_us": tj.deadline,
                    "compute_us": tj.compute,
                    "finish_us": _encode_opt(tj.finish),
                    "progress_us": encode_rational(tj.progress),
                    "dispatches": tj.dispatches,
                }
                for tj in trace.thread_jobs
            ],
            "regulator_periods": [
                {
                    "core": rp.core,
                    "period_start_us": rp.period_start,
                    "period_end_us": encode_rational(rp.period_end),
                    "budget": _encode_opt(rp.budget),
                    "consumed": encode_rational(rp.consumed),
                    "leader_priority": rp.leader_priority,
                }
                for rp in trace.regulator_periods
            ],
        },
    }


def trace_from_dict(data: dict) -> Trace:
    """Inverse of trace_to_dict; reconstructs the exact trace."""
    other = data["otherData"]
    if other.get("format_version") != TRACE_FORMAT_VERSION:
        raise ValueError(f"unsupported trace format_version {other.get('format_version')!r}")

    def opt_frac(value):
        return None if value is None else to_fraction(value)

    segments = tuple(
        Segment(
            core=int(ev["tid"]),
            occupant=ev["name"],
            kind=ev["cat"],
            start=to_fraction(ev["args"]["start_us"]),
            end=to_fraction(ev["args"]["end_us"]),
            rate=to_fraction(ev["args"]["rate"]),
        )
        for ev in data["traceEvents"]
    )
    jobs = tuple(
        JobRecord(
            task_id=item["task_id"],
            job_index=item["job_index"],
            release=item["release_us"],
            deadline=item["deadline_us"],
            finish=opt_frac(item["finish_us"]),
            response=opt_frac(item["response_us"]),
            deadline_met=item["deadline_met"],
        )
        for item in other["jobs"]
    )
    thread_jobs = tuple(
        ThreadJobRecord(
            task_id=item["task_id"],
            thread_index=item["thread_index"],
            job_index=item["job_index"],
            core=item["core"],
            release=item["release_us"],
            deadline=item["deadline_us"],
            compute=item["compute_us"],
            finish=opt_frac(item["finish_us"]),
            progress=to_fraction(item["progress_us"]),
            dispatches=item["dispatches"],
        )
        for item in other["thread_jobs"]
    )
    regulator_periods = tuple(
        RegulatorPeriodRecord(
            core=item["core"],
            period_start=item["period_start_us"],
            period_end=to_fraction(item["period_end_us"]),
            budget=opt_frac(item["budget"]),
            consumed=to_fraction(item["consumed"]),
            leader_priority=item["leader_priority"],
        )
        for item in other["regulator_periods"]
    )
    return Trace(
        fingerprint=other["fingerprint"],
        policy=Policy(other["policy"]),
        core_count=other["core_count"],
        horizon=other["horizon_us"],
        segments=segments,
        jobs=jobs,
        thread_jobs=thread_jobs,
        regulator_periods=regulator_periods,
    )


def write_trace_json(trace: Trace, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(trace_to_dict(trace)))
        fh.write("\n")


def read_trace_json(path: Path) -> Trace:
    with open(path) as fh:
        return trace_from_dict(json.load(fh))


def _us_label(value: Optional[Fraction]) -> str:
    if value is None:
        return "-"
    return str(encode_rational(value))


def report_to_dict(report: AnalysisReport) -> dict:
    return {
        "format_version": 1,
        "policy": report.policy.value,
        "core_count": report.core_count,
        "horizon_us": report.horizon,
        "slack_us": encode_rational(report.slack),
        "utilization": {kind: encode_rational(value) for kind, value in sorted(report.utilization.items())},
        "tasks": [
            {
                "task_id": row.task_id,
                "priority": row.priority,
                "rta_wcrt_us": row.rta_wcrt,
                "simulated_wcrt_us": _encode_opt(row.simulated_wcrt),
                "deadline_met": row.deadline_met,
                "jobs": row.jobs,
                "finished": row.finished,
                "missed": row.missed,
            }
            for row in report.tasks
        ],
    }


def format_report_text(report: AnalysisReport) -> str:
    lines = [
        f"policy={report.policy.value} cores={report.core_count} horizon={report.horizon}us",
        f"slack: {_us_label(report.slack)}us ({float(report.slack) / 1000:.3f} ms)",
        "utilization: "
        + " ".join(f"{kind}={float(value):.4f}" for kind, value in sorted(report.utilization.items())),
        "",
        f"{'task':<12} {'prio':>5} {'rta_wcrt_us':>12} {'sim_wcrt_us':>14} {'jobs':>5} {'done':>5} {'miss':>5} {'deadline':>9}",
    ]
    for row in report.tasks:
        rta = "UNSCHED" if row.rta_wcrt is None else str(row.rta_wcrt)
        met = "-" if row.deadline_met is None else ("OK" if row.deadline_met else "MISS")
        lines.append(
            f"{row.task_id:<12} {row.priority:>5} {rta:>12} {_us_label(row.simulated_wcrt):>14} "
            f"{row.jobs:>5} {row.finished:>5} {row.missed:>5} {met:>9}"
        )
    return "\n".join(lines) + "\n"


def load_scenario(config: RunConfig) -> Scenario:
    """Resolve preset/file plus overrides into a concrete scenario.

    Raises ValueError on malformed content, OSError on unreadable files.
    """
    if (config.scenario_path is None) == (config.preset is None):
        raise ValueError("exactly one of --scenario or --preset is required")
    if config.preset is not None:
        scenario = load_preset(config.preset)
    else:
        with open(config.scenario_path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed scenario file: {exc}") from exc
        scenario = scenario_from_dict(data)
    if config.policy is not None:
        scenario = replace(scenario, policy=config.policy)
    if config.context_switch_cost is not None:
        scenario = replace(
            scenario,
            platform=replace(scenario.platform, context_switch_cost=config.context_switch_cost),
        )
    if config.horizon is not None:
        scenario = replace(scenario, horizon=config.horizon)
    return scenario


def _prepare(config: RunConfig) -> tuple[Scenario, Trace, AnalysisReport]:
    scenario = load_scenario(config)
    violations = validate(scenario)
    if violations:
        raise ScenarioError("\n".join(str(v) for v in violations))
    scenario = bind_virtual_gangs(scenario)
    trace = simulate(scenario)
    report = analyze(scenario.rt_tasks, trace)
    return scenario, trace, report


def run(config: RunConfig) -> int:
    """Simulate one scenario and write the requested artifacts."""
    try:
        scenario, trace, report = _prepare(config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, ValueError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID

    out_dir = Path(config.output_dir) if config.output_dir else default_output_dir()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "segments-csv" in config.formats:
            write_segments_csv(trace, out_dir / "segments.csv")
        if "trace-json" in config.formats:
            write_trace_json(trace, out_dir / "trace.json")
        if "report-text" in config.formats:
            (out_dir / "report.txt").write_text(format_report_text(report))
        if "report-json" in config.formats:
            (out_dir / "report.json").write_text(canonical_json(report_to_dict(report)) + "\n")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(format_report_text(report), end="")
    return EXIT_OK


def _percentile(sorted_values: Sequence[Fraction], pct: int) -> Fraction:
    index = max(0, ceil_div(pct * len(sorted_values), 100) - 1)
    return sorted_values[index]


def _distribution(responses: Sequence[Fraction]) -> dict:
    if not responses:
        return {"count": 0}
    values = sorted(responses)
    total = sum(values)
    return {
        "count": len(values),
        "min_us": encode_rational(values[0]),
        "avg_us": encode_rational(total / len(values)),
        "max_us": encode_rational(values[-1]),
        "p50_us": encode_rational(_percentile(values, 50)),
        "p90_us": encode_rational(_percentile(values, 90)),
        "p99_us": encode_rational(_percentile(values, 99)),
    }


def _solo_scenario(scenario: Scenario, task_id: str) -> Scenario:
    """The task alone on the platform: the in-isolation measurement setup."""
    return Scenario(
        platform=scenario.platform,
        rt_tasks=[scenario.rt_task(task_id)],
        policy=Policy.CO_SCHEDULE,
        horizon=scenario.horizon,
        seed=scenario.seed,
    )


def compare(config: RunConfig, policies: Sequence[str]) -> int:
    """Run the scenario under several policies and tabulate response times.

    ``solo`` is accepted as a pseudo-policy: each real-time task simulated
    alone on the platform.
    """
    if len(policies) < 2:
        print("error: compare needs at least two policies", file=sys.stderr)
        return EXIT_INVALID
    try:
        scenario = load_scenario(config)
        violations = validate(scenario)
        if violations:
            raise ScenarioError("\n".join(str(v) for v in violations))
        scenario = bind_virtual_gangs(scenario)

        results: dict[str, dict] = {}
        for token in policies:
            if token == "solo":
                tasks = {}
                for task in scenario.rt_tasks:
                    solo_trace = simulate(_solo_scenario(scenario, task.id))
                    tm = trace_metrics(solo_trace).tasks.get(task.id)
                    responses = tm.responses if tm else ()
                    entry = _distribution(responses)
                    entry["missed"] = tm.missed if tm else 0
                    tasks[task.id] = entry
                results[token] = {"slack_us": None, "tasks": tasks}
            else:
                policy = Policy(token)
                trace = simulate(replace(scenario, policy=policy))
                metrics = trace_metrics(trace)
                tasks = {}
                for task in scenario.rt_tasks:
                    tm = metrics.tasks.get(task.id)
                    entry = _distribution(tm.responses if tm else ())
                    entry["missed"] = tm.missed if tm else 0
                    tasks[task.id] = entry
                results[token] = {"slack_us": encode_rational(metrics.slack), "tasks": tasks}
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, ValueError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID

    payload = {
        "format_version": 1,
        "scenario_fingerprint": scenario_fingerprint(scenario),
        "policies": results,
    }

    text_lines = [f"comparison over {scenario.horizon}us horizon"]
    for token, entry in results.items():
        slack = entry["slack_us"]
        text_lines.append(f"\n[{token}] slack_us={slack if slack is not None else '-'}")
        text_lines.append(
            f"  {'task':<12} {'count':>6} {'min_us':>12} {'avg_us':>14} {'max_us':>12} {'p99_us':>12} {'miss':>5}"
        )
        for task_id, stats in entry["tasks"].items():
            if stats["count"] == 0:
                text_lines.append(f"  {task_id:<12} {'0':>6}")
                continue
            text_lines.append(
                f"  {task_id:<12} {stats['count']:>6} {str(stats['min_us']):>12} "
                f"{str(stats['avg_us']):>14} {str(stats['max_us']):>12} {str(stats['p99_us']):>12} "
                f"{stats['missed']:>5}"
            )
    text = "\n".join(text_lines) + "\n"

    out_dir = Path(config.output_dir) if config.output_dir else default_output_dir()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "comparison.json").write_text(canonical_json(payload) + "\n")
        (out_dir / "comparison.txt").write_text(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(text, end="")
    return EXIT_OK


def export_scenario(config: RunConfig, path: str) -> int:
    """Write the resolved scenario (preset or file plus overrides) as JSON."""
    try:
        scenario = load_scenario(config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        target = Path(path)
        if target.parent != Path(""):
            target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(canonical_json(scenario_to_dict(scenario)) + "\n")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _parse_context_switch_cost(text: str) -> Fraction:
    if text in CONTEXT_SWITCH_COSTS:
        return CONTEXT_SWITCH_COSTS[text]
    return to_fraction(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gangsim",
        description="Deterministic multicore gang-scheduling simulator and analyzer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="bundled scenario")
        p.add_argument("--policy", choices=[p.value for p in Policy], help="policy override")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_DIR_ENV} or gangsim-out)")
        p.add_argument(
            "--context-switch-cost",
            help="microseconds, or a named preset: " + ", ".join(sorted(CONTEXT_SWITCH_COSTS)),
        )
        p.add_argument("--horizon", type=int, help="horizon override, microseconds")

    p_run = sub.add_parser("run", help="simulate one scenario and export artifacts")
    add_source_args(p_run)
    p_run.add_argument(
        "--formats",
        default=",".join(EXPORT_FORMATS),
        help="comma-separated subset of: " + ", ".join(EXPORT_FORMATS),
    )

    p_cmp = sub.add_parser("compare", help="simulate under several policies and tabulate")
    add_source_args(p_cmp)
    p_cmp.add_argument(
        "--policies",
        required=True,
        help="comma-separated policies (co-schedule, co-schedule-interference, rt-gang, solo)",
    )

    p_exp = sub.add_parser("export-scenario", help="write the resolved scenario as JSON")
    add_source_args(p_exp)
    p_exp.add_argument("--file", required=True, help="destination path")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    formats = tuple(f.strip() for f in getattr(args, "formats", ",".join(EXPORT_FORMATS)).split(",") if f.strip())
    for fmt in formats:
        if fmt not in EXPORT_FORMATS:
            raise ValueError(f"unknown export format {fmt!r}")
    if not formats:
        raise ValueError("at least one export format is required")
    return RunConfig(
        scenario_path=args.scenario,
        preset=args.preset,
        policy=Policy(args.policy) if args.policy else None,
        output_dir=args.out,
        formats=formats,
        context_switch_cost=(
            _parse_context_switch_cost(args.context_switch_cost)
            if args.context_switch_cost
            else None
        ),
        horizon=args.horizon,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "run":
        return run(config)
    if args.command == "compare":
        policies = [p.strip() for p in args.policies.split(",") if p.strip()]
        return compare(config, policies)
    if args.command == "export-scenario":
        return export_scenario(config, args.file)
    parser.error(f"unknown command {args.command}")
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
