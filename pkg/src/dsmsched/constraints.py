"""Feasibility checks: duration, window, demand cap, voltage band, structure.

The maximum-demand cap applies to gross appliance power; PV does not offset
it because the cap protects the service connection, not the meter reading.
A small absolute tolerance absorbs float dust when summing rated powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .costing import ProblemContext
from .domain import (
    Appliance,
    ApplianceClass,
    Schedule,
    aggregate_power,
    effective_window,
)
from .errors import PowerFlowError
from .feeder import VoltageViolation

__all__ = [
    "KW_TOL",
    "FeasibilityReport",
    "check_duration",
    "check_window",
    "check_max_demand",
    "check_contiguity",
    "is_feasible",
]

# absolute slack on kW comparisons (sums of two-decimal ratings)
KW_TOL = 1e-9

CONTIG_GAP = "gap"
CONTIG_BASELINE = "baseline_off"


@dataclass
class FeasibilityReport:
    """Violation lists per constraint; feasible iff all lists are empty."""

    duration: list[tuple[int, int]] = field(default_factory=list)
    window: list[tuple[int, int]] = field(default_factory=list)
    max_demand: list[tuple[int, float]] = field(default_factory=list)
    voltage: list[VoltageViolation] = field(default_factory=list)
    contiguity: list[int] = field(default_factory=list)
    baseline_fixed: list[int] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not (
            self.duration
            or self.window
            or self.max_demand
            or self.voltage
            or self.contiguity
            or self.baseline_fixed
        )

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "duration": [
                {"appliance": a, "on_count": n} for a, n in self.duration
            ],
            "window": [
                {"appliance": a, "slot": s} for a, s in self.window
            ],
            "max_demand": [
                {"slot": s, "aggregate_kw": round(kw, 6)} for s, kw in self.max_demand
            ],
            "voltage": [
                {"slot": v.slot, "bus": v.bus,
                 "v_pu": None if np.isnan(v.v_pu) else round(v.v_pu, 6)}
                for v in self.voltage
            ],
            "contiguity": list(self.contiguity),
            "baseline_fixed": list(self.baseline_fixed),
        }


def check_duration(
    schedule: Schedule, appliances: Sequence[Appliance]
) -> list[tuple[int, int]]:
    """(appliance id, actual on-count) for rows not matching their duration."""
    counts = schedule.matrix.sum(axis=1)
    return [
        (a.id, int(n))
        for a, n in zip(appliances, counts)
        if int(n) != a.duration
    ]


def check_window(
    schedule: Schedule,
    appliances: Sequence[Appliance],
    use_effective_window: bool = True,
) -> list[tuple[int, int]]:
    """(appliance id, slot) pairs running outside the allowed window.

    With `use_effective_window` the declared window is widened to cover the
    appliance's original plan, matching what the optimizer may use.
    """
    violations = []
    for row, a in enumerate(appliances):
        lo, hi = effective_window(a) if use_effective_window else a.window
        for s in schedule.on_slots(row):
            if s < lo or s > hi:
                violations.append((a.id, s))
    return violations


def check_max_demand(
    schedule: Schedule, appliances: Sequence[Appliance], md_kw: float
) -> list[tuple[int, float]]:
    """(slot, aggregate kW) for slots whose gross demand exceeds the cap."""
    gross = aggregate_power(schedule, appliances)
    return [
        (t + 1, float(kw))
        for t, kw in enumerate(gross)
        if kw > md_kw + KW_TOL
    ]


def check_contiguity(
    schedule: Schedule, appliances: Sequence[Appliance]
) -> list[tuple[int, str]]:
    """Structure violations: gaps in uninterruptible runs, baseline rows off.

    Returns (appliance id, kind) with kind 'gap' or 'baseline_off'.
    """
    violations = []
    for row, a in enumerate(appliances):
        slots = schedule.on_slots(row)
        if a.appliance_class is ApplianceClass.BASELINE:
            if len(slots) != schedule.slot_count:
                violations.append((a.id, CONTIG_BASELINE))
        elif a.appliance_class is ApplianceClass.UNINTERRUPTIBLE and slots:
            if slots[-1] - slots[0] + 1 != len(slots):
                violations.append((a.id, CONTIG_GAP))
    return violations


def is_feasible(schedule: Schedule, context: ProblemContext) -> FeasibilityReport:
    """Run every check for the given problem.

    The voltage band is checked at each slot with neighbor loads and PV
    applied; a non-convergent power flow counts as a voltage failure for
    that slot (bus -1, magnitude NaN).
    """
    appliances = context.appliances
    report = FeasibilityReport()
    report.duration = check_duration(schedule, appliances)
    report.window = check_window(schedule, appliances, use_effective_window=True)
    report.max_demand = check_max_demand(schedule, appliances, context.md_kw)
    for aid, kind in check_contiguity(schedule, appliances):
        if kind == CONTIG_BASELINE:
            report.baseline_fixed.append(aid)
        else:
            report.contiguity.append(aid)

    if context.feeder is not None:
        gross = aggregate_power(schedule, appliances)
        for idx, kw in enumerate(gross):
            try:
                _, vmags = context.slot_flow(idx, float(kw))
            except PowerFlowError:
                report.voltage.append(
                    VoltageViolation(slot=idx + 1, bus=-1, v_pu=float("nan"))
                )
                continue
            assert vmags is not None
            for bus, mag in enumerate(vmags):
                if mag < context.voltage_min or mag > context.voltage_max:
                    report.voltage.append(
                        VoltageViolation(slot=idx + 1, bus=bus, v_pu=mag)
                    )
    return report
