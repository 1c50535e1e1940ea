"""Shared helpers: exact interval arithmetic over rational timestamps."""

from __future__ import annotations

from fractions import Fraction


def merge_intervals(intervals):
    """Union of half-open [start, end) intervals as a sorted disjoint list."""
    out = []
    for start, end in sorted(intervals):
        if end <= start:
            continue
        if out and start <= out[-1][1]:
            out[-1][1] = max(out[-1][1], end)
        else:
            out.append([start, end])
    return [(a, b) for a, b in out]


def overlap_measure(left, right) -> Fraction:
    """Total length of the intersection of two interval unions."""
    left = merge_intervals(left)
    right = merge_intervals(right)
    total = Fraction(0)
    i = j = 0
    while i < len(left) and j < len(right):
        a0, a1 = left[i]
        b0, b1 = right[j]
        lo, hi = max(a0, b0), min(a1, b1)
        if lo < hi:
            total += hi - lo
        if a1 <= b1:
            i += 1
        else:
            j += 1
    return total


def rt_intervals_by_priority(scenario, trace):
    """Map gang priority -> merged rt_run intervals, from a bound scenario."""
    prio_of = {task.id: task.priority for task in scenario.rt_tasks}
    by_prio = {}
    for seg in trace.segments:
        if seg.kind == "rt_run":
            by_prio.setdefault(prio_of[seg.occupant], []).append((seg.start, seg.end))
    return {prio: merge_intervals(ivals) for prio, ivals in by_prio.items()}
