"""Brute-force optimizer for instances small enough to enumerate.

Serves as ground truth for the clonal-selection optimizer: it walks every
schedule that satisfies duration, window, and contiguity by construction,
filters the demand cap and (when a feeder is present) the voltage band,
and returns the exact minimum of the same cost function, with the same
tie rule (smaller total shift, then lexicographically earliest on-slots).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .constraints import KW_TOL
from .costing import CostBreakdown, ProblemContext, total_cost
from .csa import TIE_TOL, SearchSpace, _Flex
from .domain import Schedule, schedule_from_on_slots
from .errors import EnumerationGuardError, PowerFlowError

__all__ = [
    "SmallInstance",
    "OracleResult",
    "enumerate_feasible",
    "exhaustive_optimize",
    "sweep_penalties",
]

MAX_FLEXIBLE = 4
MAX_SLOTS = 16


@dataclass(frozen=True)
class SmallInstance:
    """A problem small enough for exhaustive search.

    The guard limit bounds the number of candidate schedules (product of
    per-appliance placement counts) computed before any enumeration starts.
    """

    context: ProblemContext
    guard_limit: int = 10_000_000

    def __post_init__(self) -> None:
        space = SearchSpace(self.context)
        if len(space.flex) > MAX_FLEXIBLE:
            raise ValueError(
                f"instance has {len(space.flex)} flexible appliances, "
                f"limit is {MAX_FLEXIBLE}"
            )
        if self.context.grid.slot_count > MAX_SLOTS:
            raise ValueError(
                f"instance has {self.context.grid.slot_count} slots, limit is {MAX_SLOTS}"
            )

    def placement_counts(self) -> list[int]:
        counts = []
        for f in SearchSpace(self.context).flex:
            if f.uninterruptible:
                counts.append(f.start_hi - f.start_lo + 1)
            else:
                width = f.window_hi - f.window_lo + 1
                counts.append(math.comb(width, f.duration))
        return counts

    def candidate_count(self) -> int:
        return math.prod(self.placement_counts())

    def check_guard(self) -> None:
        count = self.candidate_count()
        if count > self.guard_limit:
            raise EnumerationGuardError(
                f"{count} candidate schedules exceed the guard limit {self.guard_limit}",
                count=count,
                limit=self.guard_limit,
            )


def _placements(f: _Flex) -> list[tuple[int, ...]]:
    """Every legal on-slot tuple for one flexible appliance, lexicographic."""
    if f.uninterruptible:
        return [
            tuple(range(start, start + f.duration))
            for start in range(f.start_lo, f.start_hi + 1)
        ]
    return list(
        itertools.combinations(range(f.window_lo, f.window_hi + 1), f.duration)
    )


@dataclass
class _Candidate:
    """Internal per-candidate evaluation during enumeration."""

    flats: tuple[int, ...]
    slots: tuple[tuple[int, ...], ...]
    energy_usd: float
    shift_slots: int
    weighted_shift: float


def _iter_candidates(instance: SmallInstance) -> Iterator[_Candidate]:
    """All MD- and voltage-feasible candidates, in lexicographic flat order."""
    instance.check_guard()
    ctx = instance.context
    space = SearchSpace(ctx)
    grid = ctx.grid
    price = ctx.price_array()
    pv = ctx.pv_array()
    md = ctx.md_kw

    per_appliance = []
    for f in space.flex:
        options = []
        for slots in _placements(f):
            contribution = np.zeros(grid.slot_count)
            for s in slots:
                contribution[s - 1] = f.rated_kw
            shift = sum(abs(n - o) for n, o in zip(slots, f.original_slots))
            options.append((slots, contribution, shift, shift * f.rated_kw))
        per_appliance.append(options)

    vmin, vmax = ctx.voltage_min, ctx.voltage_max

    def feasible_gross(gross: np.ndarray) -> tuple[bool, float]:
        """(feasible, billed energy cost)."""
        if (gross > md + KW_TOL).any():
            return (False, 0.0)
        loss = np.zeros(grid.slot_count)
        if ctx.feeder is not None:
            try:
                for idx in range(grid.slot_count):
                    billed, vmags = ctx.slot_flow(idx, float(gross[idx]))
                    loss[idx] = billed
                    for mag in vmags:  # type: ignore[union-attr]
                        if mag < vmin or mag > vmax:
                            return (False, 0.0)
            except PowerFlowError:
                return (False, 0.0)
        net = np.maximum(gross - pv, 0.0)
        energy = float(np.dot(net + loss, price) * grid.slot_hours)
        return (True, energy)

    if not per_appliance:
        gross = space.baseline_gross
        ok, energy = feasible_gross(gross)
        if ok:
            yield _Candidate(flats=(), slots=(), energy_usd=energy,
                             shift_slots=0, weighted_shift=0.0)
        return

    for combo in itertools.product(*per_appliance):
        gross = space.baseline_gross.copy()
        for _, contribution, _, _ in combo:
            gross += contribution
        ok, energy = feasible_gross(gross)
        if not ok:
            continue
        flats: list[int] = []
        slots = []
        shift = 0
        weighted = 0.0
        for option in combo:
            flats.extend(option[0])
            slots.append(option[0])
            shift += option[2]
            weighted += option[3]
        yield _Candidate(
            flats=tuple(flats),
            slots=tuple(slots),
            energy_usd=energy,
            shift_slots=shift,
            weighted_shift=weighted,
        )


def _schedule_from_candidate(
    instance: SmallInstance, cand: _Candidate
) -> Schedule:
    ctx = instance.context
    space = SearchSpace(ctx)
    by_row = dict(zip((f.row for f in space.flex), cand.slots))
    on_slots: list[Sequence[int]] = []
    for row in range(len(ctx.appliances)):
        if row in by_row:
            on_slots.append(by_row[row])
        else:
            on_slots.append(range(1, ctx.grid.slot_count + 1))
    return schedule_from_on_slots(on_slots, ctx.grid.slot_count)


def enumerate_feasible(instance: SmallInstance) -> Iterator[Schedule]:
    """Every feasible schedule exactly once, as full Schedule objects."""
    for cand in _iter_candidates(instance):
        yield _schedule_from_candidate(instance, cand)


@dataclass
class OracleResult:
    """Exact optimum of a small instance."""

    schedule: Schedule
    breakdown: CostBreakdown
    ties: list[tuple[int, ...]] = field(default_factory=list)
    feasible_count: int = 0

    @property
    def total_usd(self) -> float:
        return self.breakdown.total_usd


class _Best:
    """Running minimum under the (total, shift, lex-flat) tie rule."""

    __slots__ = ("total", "shift", "flats", "cand", "ties")

    def __init__(self) -> None:
        self.total = math.inf
        self.shift = 0
        self.flats: tuple[int, ...] = ()
        self.cand: _Candidate | None = None
        self.ties: list[tuple[int, ...]] = []

    def offer(self, total: float, cand: _Candidate) -> None:
        if total < self.total - TIE_TOL:
            self.total, self.shift, self.flats = total, cand.shift_slots, cand.flats
            self.cand = cand
            self.ties = [cand.flats]
            return
        if total <= self.total + TIE_TOL:
            self.ties.append(cand.flats)
            if (cand.shift_slots, cand.flats) < (self.shift, self.flats):
                self.total, self.shift, self.flats = total, cand.shift_slots, cand.flats
                self.cand = cand


def sweep_penalties(
    instance: SmallInstance, penalties: Sequence[float]
) -> dict[float, OracleResult]:
    """Exact optimum for several penalty prices in a single enumeration.

    The billed energy cost of a candidate does not depend on the penalty
    price, so one pass suffices.
    """
    ctx = instance.context
    hours = ctx.grid.slot_hours
    bests = {pi: _Best() for pi in penalties}
    count = 0
    for cand in _iter_candidates(instance):
        count += 1
        for pi, best in bests.items():
            best.offer(cand.energy_usd + hours * pi * cand.weighted_shift, cand)

    results: dict[float, OracleResult] = {}
    for pi, best in bests.items():
        if best.cand is None:
            raise ValueError("no feasible schedule exists for the instance")
        schedule = _schedule_from_candidate(instance, best.cand)
        breakdown = total_cost(schedule, ctx.with_penalty(pi))
        results[pi] = OracleResult(
            schedule=schedule,
            breakdown=breakdown,
            ties=best.ties,
            feasible_count=count,
        )
    return results


def exhaustive_optimize(instance: SmallInstance) -> OracleResult:
    """Global minimum of the instance at its own penalty price."""
    pi = instance.context.penalty_price
    return sweep_penalties(instance, [pi])[pi]
