"""Deterministic multicore real-time gang-scheduling simulator.

Simulates periodic parallel real-time tasks under three policies: plain
per-core co-scheduling, co-scheduling with a pairwise interference model,
and a one-gang-at-a-time gang-scheduling policy with memory-bandwidth
throttling of best-effort cores.  Schedules are exact (integer/rational
microsecond arithmetic, no floats) and bit-reproducible, and can be
cross-checked against classical fixed-priority response-time analysis.
"""

from .taskmodel import (
    BestEffortTask,
    InterferenceModel,
    Platform,
    Policy,
    RtGangTask,
    Scenario,
    Violation,
    VirtualGangSpec,
    bind_virtual_gangs,
    validate,
)
from .engine import Segment, Trace, simulate
from .analysis import AnalysisReport, analyze, generate_taskset, rta_gang, trace_metrics

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "BestEffortTask",
    "InterferenceModel",
    "Platform",
    "Policy",
    "RtGangTask",
    "Scenario",
    "Segment",
    "Trace",
    "Violation",
    "VirtualGangSpec",
    "analyze",
    "bind_virtual_gangs",
    "generate_taskset",
    "rta_gang",
    "simulate",
    "trace_metrics",
    "validate",
]
