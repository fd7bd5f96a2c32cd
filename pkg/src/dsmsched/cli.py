"""Command-line scenario runner.

`dsm-sched run` optimizes a configured day for one or more penalty prices
and writes machine-readable reports; `explain` evaluates a user-supplied
schedule without optimizing; `oracle` solves a small instance exactly.

All output files are deterministic for a fixed config and seed: floats are
fixed to 6 decimals and JSON keys are sorted.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .constraints import is_feasible
from .costing import PenaltyPrice, ProblemContext, total_cost
from .csa import CsaConfig, OptimResult, optimize
from .domain import (
    Appliance,
    ApplianceClass,
    ISSUE_ORIGINAL_WINDOW,
    Schedule,
    TimeGrid,
    aggregate_power,
    load_appliances_csv,
    load_schedule_csv,
    validate_appliance_set,
    write_schedule_csv,
)
from .errors import DsmError, InputError, PowerFlowError
from .feeder import FeederModel, load_feeder_json
from .oracle import SmallInstance, exhaustive_optimize
from .profiles import (
    NeighborLoads,
    PriceSeries,
    PvSeries,
    load_neighbor_loads,
    load_series,
)

__all__ = ["ScenarioConfig", "ScenarioReport", "run_scenario", "explain", "main"]

REPORT_SCHEMA_VERSION = 1


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _round(value: float | None, digits: int = 6) -> float | None:
    if value is None:
        return None
    return round(value, digits) + 0.0  # normalize -0.0


def _pi_label(usd_per_kwh: float) -> str:
    """Penalty price rendered in cents for file names: 0.05 -> '5'."""
    return f"{usd_per_kwh * 100:g}"


@dataclass
class ScenarioConfig:
    """One runnable experiment, as read from a JSON config file."""

    label: str
    grid: TimeGrid
    appliances: tuple[Appliance, ...]
    price: PriceSeries
    pv: PvSeries | None
    neighbors: NeighborLoads | None
    feeder: FeederModel | None
    md_kw: float
    penalties_usd_per_kwh: list[float]
    pv_enabled: bool
    power_factor: float
    voltage_min: float
    voltage_max: float
    seed: int
    out_dir: Path
    csa: CsaConfig

    def context(self, penalty_price: float = 0.0) -> ProblemContext:
        return ProblemContext(
            grid=self.grid,
            appliances=self.appliances,
            price=self.price,
            pv=self.pv if self.pv_enabled else None,
            neighbors=self.neighbors,
            feeder=self.feeder,
            md_kw=self.md_kw,
            penalty_price=penalty_price,
            voltage_min=self.voltage_min,
            voltage_max=self.voltage_max,
            power_factor=self.power_factor,
        )


@dataclass
class ScenarioReport:
    """run_scenario outcome: the report dict written to report.json."""

    report: dict
    results: dict[float, OptimResult]
    all_feasible: bool


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise InputError(f"{where}: missing required key '{key}'")
    return data[key]


def _load_grid(data: dict) -> TimeGrid:
    grid = data.get("grid", {})
    return TimeGrid(
        slot_count=int(grid.get("slot_count", 48)),
        slot_hours=float(grid.get("slot_hours", 0.5)),
    )


def _load_appliances(data: dict, base: Path, where: str, grid: TimeGrid) -> tuple[Appliance, ...]:
    if "appliances_csv" in data:
        path = _resolve(base, data["appliances_csv"])
        appliances = tuple(load_appliances_csv(path))
    elif "appliances" in data:
        rows = []
        for raw in data["appliances"]:
            slots = raw.get("original_slots", [])
            if isinstance(slots, str):
                slots = [int(s) for s in slots.split(";") if s.strip()]
            rows.append(
                Appliance(
                    id=int(raw["id"]),
                    appliance_class=ApplianceClass(raw["class"].strip().lower()),
                    window_start=int(raw["window_start"]),
                    window_end=int(raw["window_end"]),
                    duration=int(raw["duration"]),
                    rated_kw=float(raw["rated_kw"]),
                    original_on_slots=tuple(int(s) for s in slots),
                )
            )
        appliances = tuple(rows)
    else:
        raise InputError(f"{where}: need 'appliances_csv' or inline 'appliances'")

    report = validate_appliance_set(appliances, grid)
    hard = [i for i in report.issues if i.kind != ISSUE_ORIGINAL_WINDOW]
    if hard:
        lines = "; ".join(f"appliance {i.appliance_id}: {i.message}" for i in hard)
        raise InputError(f"{where}: invalid appliance set: {lines}")
    for i in report.issues:
        print(f"warning: {i.message}", file=sys.stderr)
    return appliances


def _load_series_field(
    data: dict, base: Path, where: str, grid: TimeGrid, csv_key: str, inline_key: str
) -> list[float] | None:
    if csv_key in data:
        return load_series(_resolve(base, data[csv_key]), grid)
    if inline_key in data:
        values = [float(v) for v in data[inline_key]]
        if len(values) != grid.slot_count:
            raise InputError(
                f"{where}: '{inline_key}' has {len(values)} values, "
                f"grid expects {grid.slot_count}"
            )
        return values
    return None


def load_scenario_config(path: str | Path, *, where_label: str = "config") -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open() as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    base = path.parent
    where = str(path)

    grid = _load_grid(data)
    appliances = _load_appliances(data, base, where, grid)

    price_values = _load_series_field(data, base, where, grid, "price_csv", "price")
    if price_values is None:
        raise InputError(f"{where}: need 'price_csv' or inline 'price'")
    price = PriceSeries(values=tuple(price_values))

    pv_enabled = bool(data.get("pv_enabled", False))
    pv = None
    pv_values = _load_series_field(data, base, where, grid, "pv_csv", "pv")
    if pv_values is not None:
        capacity = float(data.get("pv_capacity_kw", max(pv_values) or 1.0))
        pv = PvSeries(values=tuple(pv_values), capacity_kw=capacity)
    if pv_enabled and pv is None:
        raise InputError(f"{where}: pv_enabled is true but no 'pv_csv' or 'pv' given")

    power_factor = float(data.get("power_factor", 0.95))
    neighbors = None
    if "neighbors_csv" in data:
        neighbors = load_neighbor_loads(
            _resolve(base, data["neighbors_csv"]), grid, power_factor=power_factor
        )

    feeder = None
    if "feeder_json" in data:
        feeder = load_feeder_json(_resolve(base, data["feeder_json"]))

    band = data.get("voltage_band", [0.95, 1.05])
    if not (isinstance(band, (list, tuple)) and len(band) == 2 and band[0] < band[1]):
        raise InputError(f"{where}: voltage_band must be [low, high]")

    penalties = [
        PenaltyPrice(float(p)).usd_per_kwh
        for p in data.get("penalty_prices_usd_per_kwh", [0.0])
    ]
    if not penalties:
        raise InputError(f"{where}: penalty price list must be non-empty")

    csa_data = dict(data.get("csa", {}))
    known = {f.name for f in fields(CsaConfig)}
    unknown = set(csa_data) - known
    if unknown:
        raise InputError(f"{where}: unknown csa options {sorted(unknown)}")
    csa_data.setdefault("rng_seed", int(data.get("seed", 0)))
    try:
        csa = CsaConfig(**csa_data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: bad csa options: {exc}") from None

    out_dir = _resolve(base, data.get("out_dir", "out"))
    return ScenarioConfig(
        label=str(data.get("label", path.stem)),
        grid=grid,
        appliances=appliances,
        price=price,
        pv=pv,
        neighbors=neighbors,
        feeder=feeder,
        md_kw=float(_require(data, "md_kw", where)),
        penalties_usd_per_kwh=penalties,
        pv_enabled=pv_enabled,
        power_factor=power_factor,
        voltage_min=float(band[0]),
        voltage_max=float(band[1]),
        seed=int(data.get("seed", 0)),
        out_dir=out_dir,
        csa=csa,
    )


def _write_profile_csv(
    path: Path,
    grid: TimeGrid,
    original_kw: np.ndarray,
    dsm_kw: np.ndarray,
    pv_kw: np.ndarray,
    price: PriceSeries,
) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "original_kw", "dsm_kw", "pv_kw", "price"])
        for t in range(grid.slot_count):
            writer.writerow(
                [t + 1, _fmt(original_kw[t]), _fmt(dsm_kw[t]),
                 _fmt(pv_kw[t]), _fmt(price.values[t])]
            )


def _write_voltage_csv(path: Path, context: ProblemContext, gross: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "bus", "v_pu"])
        for idx in range(context.grid.slot_count):
            _, vmags = context.slot_flow(idx, float(gross[idx]))
            assert vmags is not None
            for bus, mag in enumerate(vmags):
                writer.writerow([idx + 1, bus, _fmt(mag)])


def _write_convergence_csv(path: Path, history: list[tuple[int, float, int]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_total_usd", "evaluations"])
        for generation, best_total, evaluations in history:
            total = "" if best_total != best_total else _fmt(best_total)  # NaN check
            writer.writerow([generation, total, evaluations])


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Optimize each penalty price, write all output files, build the report."""
    config.out_dir.mkdir(parents=True, exist_ok=True)
    base_ctx = config.context()
    original = base_ctx.original_schedule()
    original_breakdown = total_cost(original, base_ctx)
    original_gross = aggregate_power(original, config.appliances)
    pv_kw = base_ctx.pv_array()

    if base_ctx.feeder is not None:
        _write_voltage_csv(config.out_dir / "voltage_original.csv", base_ctx, original_gross)

    original_row = {
        "c_e_usd": _round(original_breakdown.energy_usd),
        "c_p_usd": _round(original_breakdown.penalty_usd),
        "total_usd": _round(original_breakdown.total_usd),
        "peak_kw": _round(float(original_gross.max())),
        "pv_utilization": _round(original_breakdown.pv_utilization),
    }

    runs = []
    results: dict[float, OptimResult] = {}
    all_feasible = True
    for pi in config.penalties_usd_per_kwh:
        ctx = base_ctx.with_penalty(pi)
        run_config = replace(config.csa, rng_seed=config.seed)
        result = optimize(ctx, run_config)
        results[pi] = result
        all_feasible = all_feasible and result.success

        label = _pi_label(pi)
        files = {
            "convergence": f"convergence_{label}.csv",
            "profile": f"profile_{label}.csv",
            "schedule": f"schedule_{label}.csv",
        }
        dsm_gross = aggregate_power(result.schedule, config.appliances)
        _write_profile_csv(
            config.out_dir / files["profile"], config.grid,
            original_gross, dsm_gross, pv_kw, config.price,
        )
        _write_convergence_csv(config.out_dir / files["convergence"], result.history)
        write_schedule_csv(config.out_dir / files["schedule"], result.schedule, config.appliances)
        if ctx.feeder is not None:
            files["voltage"] = f"voltage_{label}.csv"
            _write_voltage_csv(config.out_dir / files["voltage"], ctx, dsm_gross)

        breakdown = result.breakdown
        row = {
            "penalty_usd_per_kwh": _round(pi),
            "penalty_cents_per_kwh": _round(pi * 100),
            "feasible": result.success,
            "evaluations": result.evaluations,
            "generations": result.history[-1][0],
            "files": files,
        }
        if breakdown is not None:
            saving = None
            if original_breakdown.total_usd > 0:
                saving = (
                    (original_breakdown.total_usd - breakdown.total_usd)
                    / original_breakdown.total_usd * 100.0
                )
            row.update(
                {
                    "c_e_usd": _round(breakdown.energy_usd),
                    "c_p_usd": _round(breakdown.penalty_usd),
                    "total_usd": _round(breakdown.total_usd),
                    "peak_kw": _round(float(dsm_gross.max())),
                    "shift_slots_total": breakdown.total_shift_slots,
                    "weighted_shift_kw_slots": _round(breakdown.weighted_shift),
                    "pv_utilization": _round(breakdown.pv_utilization),
                    "saving_vs_original_pct": _round(saving),
                }
            )
        if not result.success:
            row["message"] = result.message
        runs.append(row)

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "scenario": config.label,
        "seed": config.seed,
        "pv_enabled": config.pv_enabled,
        "md_kw": _round(config.md_kw),
        "original": original_row,
        "runs": runs,
    }
    with (config.out_dir / "report.json").open("w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ScenarioReport(report=report, results=results, all_feasible=all_feasible)


def explain(schedule_path: str | Path, config: ScenarioConfig, penalty_price: float | None = None) -> dict:
    """Evaluate a schedule file against a scenario config without optimizing."""
    pi = config.penalties_usd_per_kwh[0] if penalty_price is None else penalty_price
    ctx = config.context(penalty_price=pi)
    schedule = load_schedule_csv(schedule_path, config.appliances, config.grid)
    report = is_feasible(schedule, ctx)
    out: dict = {"feasibility": report.to_dict(), "penalty_usd_per_kwh": _round(pi)}
    try:
        out["cost"] = total_cost(schedule, ctx).to_dict()
    except PowerFlowError as exc:
        out["cost"] = None
        out["cost_error"] = str(exc)
    return out


def _load_instance(path: str | Path) -> SmallInstance:
    path = Path(path)
    try:
        with path.open() as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    base = path.parent
    where = str(path)

    grid = _load_grid(data)
    appliances = _load_appliances(data, base, where, grid)
    price_values = _load_series_field(data, base, where, grid, "price_csv", "price")
    if price_values is None:
        raise InputError(f"{where}: need 'price_csv' or inline 'price'")
    pv = None
    pv_values = _load_series_field(data, base, where, grid, "pv_csv", "pv")
    if pv_values is not None and any(v > 0 for v in pv_values):
        capacity = float(data.get("pv_capacity_kw", max(pv_values)))
        pv = PvSeries(values=tuple(pv_values), capacity_kw=capacity)
    neighbors = None
    power_factor = float(data.get("power_factor", 0.95))
    if "neighbors_csv" in data:
        neighbors = load_neighbor_loads(
            _resolve(base, data["neighbors_csv"]), grid, power_factor=power_factor
        )
    feeder = None
    if "feeder_json" in data:
        feeder = load_feeder_json(_resolve(base, data["feeder_json"]))
    band = data.get("voltage_band", [0.95, 1.05])

    context = ProblemContext(
        grid=grid,
        appliances=appliances,
        price=PriceSeries(values=tuple(price_values)),
        pv=pv,
        neighbors=neighbors,
        feeder=feeder,
        md_kw=float(data.get("md_kw", float("inf"))),
        penalty_price=float(data.get("penalty_usd_per_kwh", 0.0)),
        voltage_min=float(band[0]),
        voltage_max=float(band[1]),
        power_factor=power_factor,
    )
    return SmallInstance(
        context=context, guard_limit=int(data.get("guard_limit", 10_000_000))
    )


# commands ---------------------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_scenario_config(args.config)
    if args.penalty_cents:
        try:
            cents = [float(c) for c in args.penalty_cents.split(",") if c.strip()]
        except ValueError:
            raise InputError(f"bad --penalty-cents value: {args.penalty_cents!r}") from None
        if not cents:
            raise InputError("--penalty-cents needs at least one value")
        config.penalties_usd_per_kwh = [PenaltyPrice.from_cents(c).usd_per_kwh for c in cents]
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.out_dir = Path(args.out)

    outcome = run_scenario(config)
    for row in outcome.report["runs"]:
        status = "ok" if row["feasible"] else "INFEASIBLE"
        total = row.get("total_usd")
        total_txt = "n/a" if total is None else f"${total:.2f}"
        print(
            f"pi={row['penalty_cents_per_kwh']:g}c total={total_txt} "
            f"evaluations={row['evaluations']} {status}"
        )
    print(f"report: {config.out_dir / 'report.json'}")
    if not outcome.all_feasible:
        print(json.dumps({"error": "one or more runs infeasible"}, sort_keys=True))
        return 1
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    config = load_scenario_config(args.config)
    pi = None
    if args.penalty_cents is not None:
        pi = PenaltyPrice.from_cents(float(args.penalty_cents)).usd_per_kwh
    out = explain(args.schedule, config, penalty_price=pi)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0 if out["feasibility"]["feasible"] else 1


def _cmd_oracle(args: argparse.Namespace) -> int:
    instance = _load_instance(args.instance)
    result = exhaustive_optimize(instance)
    payload = {
        "total_usd": _round(result.breakdown.total_usd),
        "c_e_usd": _round(result.breakdown.energy_usd),
        "c_p_usd": _round(result.breakdown.penalty_usd),
        "on_slots": {
            str(a.id): list(slots)
            for a, slots in zip(instance.context.appliances, result.schedule.to_on_slots())
        },
        "tie_count": len(result.ties),
        "feasible_count": result.feasible_count,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dsm-sched",
        description="Day-ahead appliance scheduling under demand and voltage limits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="optimize a configured scenario")
    p_run.add_argument("--config", required=True, help="scenario config JSON")
    p_run.add_argument(
        "--penalty-cents",
        help="comma-separated penalty prices in cents/kWh, overrides the config",
    )
    p_run.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    p_run.add_argument("--out", help="output directory, overrides the config")
    p_run.set_defaults(func=_cmd_run)

    p_explain = sub.add_parser("explain", help="evaluate a schedule file")
    p_explain.add_argument("--schedule", required=True, help="schedule CSV (id,on_slots)")
    p_explain.add_argument("--config", required=True, help="scenario config JSON")
    p_explain.add_argument("--penalty-cents", help="penalty price in cents/kWh")
    p_explain.set_defaults(func=_cmd_explain)

    p_oracle = sub.add_parser("oracle", help="exhaustively solve a small instance")
    p_oracle.add_argument("--instance", required=True, help="instance JSON")
    p_oracle.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DsmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
