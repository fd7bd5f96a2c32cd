"""Clonal selection optimizer for the appliance scheduling problem.

Antibodies encode only what can vary: a start slot for each uninterruptible
appliance and a slot set for each interruptible one, both confined to the
appliance's (effective) window.  Duration, window, and contiguity therefore
hold for every antibody ever decoded; the demand cap and the voltage band
are handled as additive affinity penalties, and the incumbent is only ever
updated with antibodies that satisfy them outright.

Evaluation is a pure function of the genotype, so parallel and serial
evaluation produce identical results.  Per-slot power flows are cached on
the problem context keyed by (slot, gross kW quantized to 1 W); identical
slot loads across antibodies reuse the same solve.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constraints import KW_TOL, FeasibilityReport, is_feasible
from .costing import CostBreakdown, ProblemContext, total_cost
from .domain import ApplianceClass, Schedule, effective_window, schedule_from_on_slots
from .errors import PowerFlowError

__all__ = [
    "Antibody",
    "CsaConfig",
    "OptimResult",
    "SearchSpace",
    "affinity",
    "clone_counts",
    "clone_and_hypermutate",
    "optimize",
]

# score penalty for a genotype whose power flow diverges; large enough to
# rank such antibodies below anything that solves
FLOW_FAILURE_PENALTY = 1e6

# totals closer than this are treated as equal when picking the incumbent
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Antibody:
    """Genotype: one gene per flexible appliance, in appliance order.

    Uninterruptible gene: int start slot.  Interruptible gene: ascending
    tuple of on-slots.
    """

    genes: tuple


@dataclass(frozen=True)
class CsaConfig:
    population_size: int = 60
    generations: int = 400
    clone_factor: float = 1.0
    hypermutation_scale: float = 0.8
    replacement_fraction: float = 0.15
    constraint_penalty_weight: float | None = None  # None: 10 x original energy cost
    rng_seed: int = 0
    stall_generations: int = 60
    parallel_evaluation: bool = False
    max_workers: int | None = None

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0 <= self.replacement_fraction < 1:
            raise ValueError("replacement_fraction must be in [0, 1)")
        if self.clone_factor < 0 or self.hypermutation_scale < 0:
            raise ValueError("clone_factor and hypermutation_scale must be >= 0")
        if self.constraint_penalty_weight is not None and self.constraint_penalty_weight < 0:
            raise ValueError("constraint_penalty_weight must be >= 0")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be >= 1")


@dataclass(frozen=True)
class _Flex:
    """Cached per-appliance search data for one flexible appliance."""

    row: int
    appliance_id: int
    uninterruptible: bool
    window_lo: int
    window_hi: int
    duration: int
    rated_kw: float
    original_slots: tuple[int, ...]

    @property
    def start_lo(self) -> int:
        return self.window_lo

    @property
    def start_hi(self) -> int:
        return self.window_hi - self.duration + 1


class SearchSpace:
    """Genotype layout and decoding for one problem context."""

    def __init__(self, context: ProblemContext):
        self.context = context
        grid = context.grid
        self.slot_count = grid.slot_count
        self.flex: list[_Flex] = []
        baseline_kw = 0.0
        for row, a in enumerate(context.appliances):
            if a.appliance_class is ApplianceClass.BASELINE:
                baseline_kw += a.rated_kw
                continue
            lo, hi = effective_window(a)
            self.flex.append(
                _Flex(
                    row=row,
                    appliance_id=a.id,
                    uninterruptible=a.appliance_class is ApplianceClass.UNINTERRUPTIBLE,
                    window_lo=lo,
                    window_hi=hi,
                    duration=a.duration,
                    rated_kw=a.rated_kw,
                    original_slots=a.original_on_slots,
                )
            )
        self.baseline_gross = np.full(self.slot_count, baseline_kw)
        # rating repeated once per required on-slot, aligned with the
        # flattened slot buffer used in gross()
        self.rate_weights = np.concatenate(
            [np.full(f.duration, f.rated_kw) for f in self.flex]
        ) if self.flex else np.zeros(0)

    def original_antibody(self) -> Antibody:
        genes = []
        for f in self.flex:
            if f.uninterruptible:
                genes.append(f.original_slots[0])
            else:
                genes.append(tuple(f.original_slots))
        return Antibody(genes=tuple(genes))

    def random_antibody(self, rng: np.random.Generator) -> Antibody:
        genes = []
        for f in self.flex:
            if f.uninterruptible:
                genes.append(int(rng.integers(f.start_lo, f.start_hi + 1)))
            else:
                width = f.window_hi - f.window_lo + 1
                picks = rng.choice(width, size=f.duration, replace=False)
                genes.append(tuple(sorted(int(p) + f.window_lo for p in picks)))
        return Antibody(genes=tuple(genes))

    def mutate_gene(self, index: int, gene, rng: np.random.Generator):
        """One mutated copy of a gene, always inside the appliance window."""
        f = self.flex[index]
        if f.uninterruptible:
            span = f.start_hi - f.start_lo
            if span == 0:
                return gene
            bound = max(1, span // 2)
            delta = int(rng.integers(-bound, bound + 1))
            return min(f.start_hi, max(f.start_lo, gene + delta))

        width = f.window_hi - f.window_lo + 1
        if width == f.duration:
            return gene
        k = 1 + int(rng.integers(0, f.duration))
        drop = rng.choice(f.duration, size=k, replace=False)
        dropped = set(int(d) for d in drop)
        kept = [s for j, s in enumerate(gene) if j not in dropped]
        kept_set = set(kept)
        candidates = [
            s for s in range(f.window_lo, f.window_hi + 1) if s not in kept_set
        ]
        picks = rng.choice(len(candidates), size=k, replace=False)
        return tuple(sorted(kept + [candidates[int(p)] for p in picks]))

    def flex_on_slots(self, antibody: Antibody) -> list[tuple[int, ...]]:
        out = []
        for f, gene in zip(self.flex, antibody.genes):
            if f.uninterruptible:
                out.append(tuple(range(gene, gene + f.duration)))
            else:
                out.append(gene)
        return out

    def decode(self, antibody: Antibody) -> Schedule:
        """Full schedule for all appliances, baseline rows always on."""
        flex_slots = dict(zip((f.row for f in self.flex), self.flex_on_slots(antibody)))
        on_slots: list[Sequence[int]] = []
        for row, a in enumerate(self.context.appliances):
            if row in flex_slots:
                on_slots.append(flex_slots[row])
            else:
                on_slots.append(range(1, self.slot_count + 1))
        return schedule_from_on_slots(on_slots, self.slot_count)

    def gross(self, antibody: Antibody) -> np.ndarray:
        """Gross household kW per slot for a genotype."""
        if not self.flex:
            return self.baseline_gross.copy()
        # local buffer: evaluations may run on several threads
        buf = np.empty(len(self.rate_weights), dtype=np.intp)
        pos = 0
        for f, gene in zip(self.flex, antibody.genes):
            d = f.duration
            if f.uninterruptible:
                buf[pos:pos + d] = np.arange(gene, gene + d)
            else:
                buf[pos:pos + d] = gene
            pos += d
        moved = np.bincount(buf, weights=self.rate_weights, minlength=self.slot_count + 1)
        return self.baseline_gross + moved[1:]


@dataclass(frozen=True)
class Evaluation:
    """Scored phenotype of one antibody."""

    energy_usd: float
    penalty_usd: float
    total_usd: float
    md_excess: float
    voltage_violation: float
    flow_failed: bool
    shift_slots: int
    weighted_shift: float
    flat_slots: tuple[int, ...]
    score: float

    @property
    def feasible(self) -> bool:
        return self.md_excess == 0.0 and self.voltage_violation == 0.0 and not self.flow_failed

    def incumbent_key(self) -> tuple:
        return (self.total_usd, self.shift_slots, self.flat_slots)


class _Evaluator:
    """Caches genotype evaluations; counts distinct evaluations."""

    def __init__(self, space: SearchSpace, penalty_weight: float):
        self.space = space
        self.ctx = space.context
        self.weight = penalty_weight
        self.cache: dict[tuple, Evaluation] = {}
        self.evaluations = 0
        self._price = self.ctx.price_array()
        self._pv = self.ctx.pv_array()

    def get(self, antibody: Antibody) -> Evaluation:
        rec = self.cache.get(antibody.genes)
        if rec is None:
            rec = self._evaluate(antibody)
            self.cache[antibody.genes] = rec
            self.evaluations += 1
        return rec

    def batch(self, antibodies: Sequence[Antibody], parallel: bool, workers: int | None) -> None:
        misses: list[Antibody] = []
        seen: set[tuple] = set()
        for ab in antibodies:
            if ab.genes not in self.cache and ab.genes not in seen:
                seen.add(ab.genes)
                misses.append(ab)
        if not misses:
            return
        if parallel and len(misses) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(self._evaluate, misses))
        else:
            records = [self._evaluate(ab) for ab in misses]
        for ab, rec in zip(misses, records):
            self.cache[ab.genes] = rec
        self.evaluations += len(misses)

    def _evaluate(self, antibody: Antibody) -> Evaluation:
        space = self.space
        ctx = self.ctx
        gross = space.gross(antibody)

        excess = gross - ctx.md_kw
        excess[excess <= KW_TOL] = 0.0
        md_excess = float(excess.sum())

        volt_violation = 0.0
        flow_failed = False
        loss = np.zeros(space.slot_count)
        if ctx.feeder is not None:
            vmin, vmax = ctx.voltage_min, ctx.voltage_max
            try:
                for idx in range(space.slot_count):
                    billed, vmags = ctx.slot_flow(idx, float(gross[idx]))
                    loss[idx] = billed
                    for mag in vmags:  # type: ignore[union-attr]
                        if mag < vmin:
                            volt_violation += vmin - mag
                        elif mag > vmax:
                            volt_violation += mag - vmax
            except PowerFlowError:
                flow_failed = True

        net = np.maximum(gross - self._pv, 0.0)
        energy = float(np.dot(net + loss, self._price) * ctx.grid.slot_hours)

        shift_slots = 0
        weighted = 0.0
        flat: list[int] = []
        for f, gene in zip(space.flex, antibody.genes):
            if f.uninterruptible:
                delta = abs(gene - f.original_slots[0]) * f.duration
                flat.extend(range(gene, gene + f.duration))
            else:
                delta = sum(abs(n - o) for n, o in zip(gene, f.original_slots))
                flat.extend(gene)
            shift_slots += delta
            weighted += delta * f.rated_kw
        penalty = ctx.grid.slot_hours * ctx.penalty_price * weighted
        total = energy + penalty

        score = -total - self.weight * (md_excess + volt_violation)
        if flow_failed:
            score -= FLOW_FAILURE_PENALTY

        return Evaluation(
            energy_usd=energy,
            penalty_usd=penalty,
            total_usd=total,
            md_excess=md_excess,
            voltage_violation=volt_violation,
            flow_failed=flow_failed,
            shift_slots=shift_slots,
            weighted_shift=weighted,
            flat_slots=tuple(flat),
            score=score,
        )


@dataclass
class OptimResult:
    """Outcome of one optimizer run.

    When no feasible antibody was ever seen, `success` is False and
    `schedule` holds the least-infeasible candidate for inspection.
    """

    success: bool
    schedule: Schedule
    breakdown: CostBreakdown | None
    feasibility: FeasibilityReport
    history: list[tuple[int, float, int]]
    evaluations: int
    seed: int
    message: str = ""


def affinity(
    antibody: Antibody,
    context: ProblemContext,
    penalty_price: float | None = None,
    constraint_penalty_weight: float = 0.0,
) -> float:
    """Score of one antibody: minus cost, minus weighted constraint excess."""
    if penalty_price is not None:
        context = context.with_penalty(penalty_price)
    space = SearchSpace(context)
    return _Evaluator(space, constraint_penalty_weight).get(antibody).score


def clone_counts(config: CsaConfig, population_size: int) -> list[int]:
    """Clones per rank (1-based): round(beta * N / rank), at least 1, at most N."""
    n = population_size
    beta = config.clone_factor
    return [
        min(n, max(1, int(beta * n / rank + 0.5))) for rank in range(1, n + 1)
    ]


def clone_and_hypermutate(
    ranked: Sequence[Antibody],
    config: CsaConfig,
    rng: np.random.Generator,
    space: SearchSpace,
) -> list[Antibody]:
    """Offspring of a ranked population (best first).

    Better ranks get more clones; worse ranks mutate harder.  Every
    offspring stays inside its appliance windows by construction.
    """
    counts = clone_counts(config, len(ranked))
    offspring: list[Antibody] = []
    n = len(ranked)
    for rank, parent in enumerate(ranked, start=1):
        gene_prob = min(1.0, config.hypermutation_scale * rank / n)
        for _ in range(counts[rank - 1]):
            genes = list(parent.genes)
            mutated = False
            for g in range(len(genes)):
                if rng.random() < gene_prob:
                    genes[g] = space.mutate_gene(g, genes[g], rng)
                    mutated = True
            if genes and gene_prob > 0 and not mutated:
                # an identical clone is a wasted evaluation; probe a neighbor
                g = int(rng.integers(0, len(genes)))
                genes[g] = space.mutate_gene(g, genes[g], rng)
            offspring.append(Antibody(genes=tuple(genes)))
    return offspring


def _better_incumbent(cand: Evaluation, best: Evaluation | None) -> bool:
    if best is None:
        return True
    diff = cand.total_usd - best.total_usd
    if diff < -TIE_TOL:
        return True
    if diff <= TIE_TOL:
        return (cand.shift_slots, cand.flat_slots) < (best.shift_slots, best.flat_slots)
    return False


def optimize(context: ProblemContext, config: CsaConfig = CsaConfig()) -> OptimResult:
    """Search for the cheapest feasible schedule.

    The original schedule is always injected into generation 0, so when it
    is feasible the result never costs more than it.  Identical (context,
    config) pairs give identical results, in serial or parallel mode.
    """
    space = SearchSpace(context)
    original = space.original_antibody()

    original_breakdown = total_cost(space.decode(original), context)
    weight = config.constraint_penalty_weight
    if weight is None:
        weight = max(1.0, 10.0 * original_breakdown.energy_usd)
    evaluator = _Evaluator(space, weight)

    rng = np.random.default_rng(config.rng_seed)
    n = config.population_size
    population = [original] + [space.random_antibody(rng) for _ in range(n - 1)]

    best: Evaluation | None = None
    best_antibody: Antibody | None = None
    top: Evaluation | None = None  # best score ever, feasible or not
    top_antibody: Antibody | None = None
    history: list[tuple[int, float, int]] = []
    stall = 0

    def rank_key(ab: Antibody):
        rec = evaluator.get(ab)
        return (-rec.score, rec.flat_slots)

    def scan(candidates: Sequence[Antibody]) -> bool:
        """Update incumbents; report whether the best total improved."""
        nonlocal best, best_antibody, top, top_antibody
        improved = False
        for ab in candidates:
            rec = evaluator.get(ab)
            if top is None or rec.score > top.score:
                top, top_antibody = rec, ab
            if rec.feasible and _better_incumbent(rec, best):
                if best is None or rec.total_usd < best.total_usd - 1e-12:
                    improved = True
                best, best_antibody = rec, ab
        return improved

    evaluator.batch(population, config.parallel_evaluation, config.max_workers)
    scan(population)
    history.append((0, best.total_usd if best else float("nan"), evaluator.evaluations))

    replace_count = int(round(config.replacement_fraction * n))
    for generation in range(1, config.generations + 1):
        evaluator.batch(population, config.parallel_evaluation, config.max_workers)
        population.sort(key=rank_key)
        offspring = clone_and_hypermutate(population, config, rng, space)
        evaluator.batch(offspring, config.parallel_evaluation, config.max_workers)
        pool = population + offspring
        pool.sort(key=rank_key)
        # survivors are distinct genotypes; clones of one incumbent would
        # otherwise crowd the population and stall the search
        population = []
        seen: set[tuple] = set()
        for ab in pool:
            if ab.genes not in seen:
                seen.add(ab.genes)
                population.append(ab)
                if len(population) == n:
                    break
        while len(population) < n:
            population.append(pool[0])
        improved = scan(pool)
        if replace_count:
            immigrants = [space.random_antibody(rng) for _ in range(replace_count)]
            population[n - replace_count:] = immigrants
        history.append(
            (generation, best.total_usd if best else float("nan"), evaluator.evaluations)
        )
        stall = 0 if improved else stall + 1
        if stall >= config.stall_generations:
            break

    if best_antibody is not None:
        schedule = space.decode(best_antibody)
        breakdown = total_cost(schedule, context)
        report = is_feasible(schedule, context)
        return OptimResult(
            success=report.feasible,
            schedule=schedule,
            breakdown=breakdown,
            feasibility=report,
            history=history,
            evaluations=evaluator.evaluations,
            seed=config.rng_seed,
            message="" if report.feasible else "incumbent failed final feasibility check",
        )

    assert top_antibody is not None
    schedule = space.decode(top_antibody)
    try:
        breakdown = total_cost(schedule, context)
    except PowerFlowError:
        breakdown = None
    report = is_feasible(schedule, context)
    return OptimResult(
        success=False,
        schedule=schedule,
        breakdown=breakdown,
        feasibility=report,
        history=history,
        evaluations=evaluator.evaluations,
        seed=config.rng_seed,
        message="no feasible antibody found; returning least-infeasible candidate",
    )
