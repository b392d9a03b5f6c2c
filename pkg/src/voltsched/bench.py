"""Experiment harness: gap metrics, fixed-to-variable cross-evaluation,
suite execution with CSV reporting, and SVG emission of energy profiles
and machine Gantt charts.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import instgen
from .construct import NoSolutionFound
from .core import (
    BUDGET_TOL,
    Instance,
    Schedule,
    check_feasibility,
    energy_profile,
    evaluate_tec,
    load_vector,
)
from .exact import SolveStatus, oracle_enumerate, solve_full
from .ils import IlsConfig, run_ils

CSV_COLUMNS = [
    "instance_id",
    "seed",
    "consumption",
    "solver",
    "status",
    "z_ub",
    "z_lb",
    "z_heur",
    "pct_gap",
    "pct_imp",
    "time_s",
    "inc_time_s",
]


@dataclass(frozen=True)
class GapMetrics:
    """Relative bound gap and heuristic improvement, in percent.

    ``pct_gap`` = 100 (z_ub - z_lb) / z_lb and ``pct_imp`` =
    100 (z_heur - z_ub) / z_ub; each is None when an input is missing or
    its denominator is zero. Negative pct_imp means the heuristic beat
    the reference upper bound.
    """

    z_ub: Optional[float]
    z_lb: Optional[float]
    z_heur: Optional[float]
    pct_gap: Optional[float]
    pct_imp: Optional[float]


def gap_metrics(
    z_ub: Optional[float] = None,
    z_lb: Optional[float] = None,
    z_heur: Optional[float] = None,
) -> GapMetrics:
    pct_gap = None
    if z_ub is not None and z_lb is not None and z_lb != 0.0:
        pct_gap = 100.0 * (z_ub - z_lb) / z_lb
    pct_imp = None
    if z_heur is not None and z_ub is not None and z_ub != 0.0:
        pct_imp = 100.0 * (z_heur - z_ub) / z_ub
    return GapMetrics(z_ub=z_ub, z_lb=z_lb, z_heur=z_heur, pct_gap=pct_gap, pct_imp=pct_imp)


@dataclass(frozen=True)
class InfeasReport:
    """Budget-violation statistics of one schedule on one instance.

    min/avg/max are over slots with strictly positive excess only (zero
    when there is none); ``pct_excess_energy`` relates total excess to
    total scheduled energy and ``pct_violated_slots`` counts offending
    slots.
    """

    excess: np.ndarray
    min_inf: float
    avg_inf: float
    max_inf: float
    total_inf: float
    pct_excess_energy: float
    pct_violated_slots: float

    def to_dict(self) -> dict:
        return {
            "min_inf": self.min_inf,
            "avg_inf": self.avg_inf,
            "max_inf": self.max_inf,
            "total_inf": self.total_inf,
            "pct_excess_energy": self.pct_excess_energy,
            "pct_violated_slots": self.pct_violated_slots,
        }


def infeasibility_report(instance: Instance, schedule: Schedule) -> InfeasReport:
    load = load_vector(instance, schedule)
    excess = np.maximum(load - instance.budget, 0.0)
    positive = excess[excess > BUDGET_TOL]
    total_load = float(load.sum())
    return InfeasReport(
        excess=excess,
        min_inf=float(positive.min()) if positive.size else 0.0,
        avg_inf=float(positive.mean()) if positive.size else 0.0,
        max_inf=float(positive.max()) if positive.size else 0.0,
        total_inf=float(excess.sum()),
        pct_excess_energy=float(excess.sum() / total_load) if total_load > 0.0 else 0.0,
        pct_violated_slots=float(positive.size / instance.num_slots),
    )


def cross_evaluate(
    fixed_instance: Instance, schedule: Schedule, variable_instance: Instance
) -> InfeasReport:
    """Replay a constant-consumption schedule under the variable twin.

    Both instances must come from the same base configuration (same
    durations, machines, prices, photovoltaic supply and budget).
    """
    a, b = fixed_instance, variable_instance
    paired = (
        a.num_jobs == b.num_jobs
        and a.grid == b.grid
        and a.machines == b.machines
        and all(
            ja.processing_time == jb.processing_time for ja, jb in zip(a.jobs, b.jobs)
        )
        and np.array_equal(a.buy_cost, b.buy_cost)
        and np.array_equal(a.sell_price, b.sell_price)
        and np.array_equal(a.pv_supply, b.pv_supply)
        and a.budget == b.budget
    )
    if not paired:
        raise ValueError("unpaired instances: the two instances share no base configuration")
    missing = [j.id for j in a.jobs if j.id not in schedule.assignments]
    if missing:
        raise ValueError(f"schedule incomplete: jobs {missing} unscheduled")
    return infeasibility_report(variable_instance, schedule)


# ---------------------------------------------------------------------------
# Suite runner


@dataclass(frozen=True)
class SuiteCase:
    """One (instance, solver) cell of a benchmark suite.

    The instance comes either from generator parameters or from a file.
    """

    instance_id: str
    consumption: str  # "fixed" | "variable"
    solver: Optional[str] = None  # "ils" | "exact" | "oracle"
    params: Optional[instgen.GenParams] = None
    instance_path: Optional[str] = None
    seed: int = 0
    time_limit_s: Optional[float] = None
    node_limit: Optional[int] = None

    def load_instance(self) -> Instance:
        if self.instance_path is not None:
            return instgen.read_instance(self.instance_path)
        if self.params is None:
            raise ValueError(f"case {self.instance_id}: neither params nor instance_path")
        fixed, variable = instgen.generate_pair(self.params)
        return fixed if self.consumption == "fixed" else variable


def suite_case_from_dict(data: dict, index: int) -> SuiteCase:
    params = None
    if "jobs" in data:
        params = instgen.GenParams(
            num_jobs=int(data["jobs"]),
            num_machines=int(data["machines"]),
            num_slots=int(data["slots"]),
            saturation=float(data["saturation"]),
            seed=int(data.get("seed", 0)),
        )
    return SuiteCase(
        instance_id=str(data.get("id", f"case{index}")),
        consumption=str(data.get("consumption", "variable")),
        solver=data.get("solver"),
        params=params,
        instance_path=data.get("instance"),
        seed=int(data.get("seed", 0)),
        time_limit_s=data.get("time_limit_s"),
        node_limit=data.get("node_limit"),
    )


def _solve_case(case: SuiteCase, solver: str) -> dict:
    row = {
        "instance_id": case.instance_id,
        "seed": case.seed,
        "consumption": case.consumption,
        "solver": solver,
        "status": "",
        "z_ub": None,
        "z_lb": None,
        "z_heur": None,
        "pct_gap": None,
        "pct_imp": None,
        "time_s": None,
        "inc_time_s": None,
    }
    try:
        instance = case.load_instance()
        if solver == "oracle":
            outcome = oracle_enumerate(instance)
            row.update(
                status=outcome.status.value,
                z_ub=outcome.upper_bound,
                z_lb=outcome.lower_bound,
                time_s=outcome.runtime_s,
            )
        elif solver == "exact":
            outcome = solve_full(
                instance, time_limit_s=case.time_limit_s, node_limit=case.node_limit
            )
            row.update(
                status=outcome.status.value,
                z_ub=outcome.upper_bound,
                z_lb=outcome.lower_bound,
                time_s=outcome.runtime_s,
            )
        elif solver == "ils":
            config = IlsConfig(
                seed=case.seed,
                time_limit_s=case.time_limit_s if case.time_limit_s else 600.0,
            )
            if case.node_limit:
                from dataclasses import replace

                config = replace(
                    config,
                    deterministic=True,
                    milp=replace(config.milp, node_limit=case.node_limit),
                    max_iterations=25,
                )
            try:
                report = run_ils(instance, config)
                row.update(
                    status="Feasible",
                    z_heur=report.best_tec,
                    time_s=report.runtime_s,
                    inc_time_s=report.incumbent_time_s,
                )
            except NoSolutionFound:
                row.update(status="NoSolutionFound")
        else:
            row.update(status=f"error: unknown solver '{solver}'")
    except Exception as exc:  # per-row failures must not abort the suite
        row.update(status=f"error: {exc}")
    return row


def run_suite(
    cases: Sequence[SuiteCase],
    solver_choices: Sequence[str] | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Run every (case, solver) pair and return one row dict per pair.

    Cases without a fixed solver are expanded over ``solver_choices``.
    After all rows complete, heuristic rows borrow the matching exact or
    oracle row's bounds to fill pct_gap / pct_imp.
    """
    tasks: list[tuple[SuiteCase, str]] = []
    for case in cases:
        if case.solver is not None:
            tasks.append((case, case.solver))
        else:
            for solver in solver_choices or ("ils",):
                tasks.append((case, solver))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_solve_case, *zip(*tasks)))
    else:
        rows = [_solve_case(case, solver) for case, solver in tasks]

    reference: dict[tuple, dict] = {}
    for row in rows:
        if row["solver"] in ("oracle", "exact") and row["z_ub"] is not None:
            key = (row["instance_id"], row["seed"], row["consumption"])
            ref = reference.get(key)
            if ref is None or row["solver"] == "oracle":
                reference[key] = row
    for row in rows:
        if row["solver"] in ("oracle", "exact"):
            metrics = gap_metrics(z_ub=row["z_ub"], z_lb=row["z_lb"])
            row["pct_gap"] = metrics.pct_gap
        elif row["z_heur"] is not None:
            ref = reference.get((row["instance_id"], row["seed"], row["consumption"]))
            if ref is not None:
                metrics = gap_metrics(
                    z_ub=ref["z_ub"], z_lb=ref["z_lb"], z_heur=row["z_heur"]
                )
                row["pct_gap"] = (
                    None
                    if ref["z_lb"] in (None, 0.0)
                    else 100.0 * (row["z_heur"] - ref["z_lb"]) / ref["z_lb"]
                )
                row["pct_imp"] = metrics.pct_imp
    return rows


def _mean(values: list) -> Optional[float]:
    numbers = [v for v in values if v is not None]
    return sum(numbers) / len(numbers) if numbers else None


def aggregate_rows(rows: Sequence[dict]) -> list[dict]:
    """Mean of every numeric column per (instance group, consumption, solver)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["instance_id"].rsplit("#", 1)[0], row["consumption"], row["solver"])
        groups.setdefault(key, []).append(row)
    out = []
    for (group_id, consumption, solver), members in sorted(groups.items()):
        agg = {
            "instance_id": f"group:{group_id}",
            "seed": "",
            "consumption": consumption,
            "solver": solver,
            "status": f"n={len(members)}",
        }
        for col in ("z_ub", "z_lb", "z_heur", "pct_gap", "pct_imp", "time_s", "inc_time_s"):
            agg[col] = _mean([m[col] for m in members])
        out.append(agg)
    return out


def write_csv(rows: Sequence[dict], path: str | Path, aggregate: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_cell(row.get(k)) for k in CSV_COLUMNS})
        if aggregate and rows:
            for row in aggregate_rows(rows):
                writer.writerow({k: _format_cell(row.get(k)) for k in CSV_COLUMNS})


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


# ---------------------------------------------------------------------------
# Plot emission (hand-rolled SVG 1.1, deterministic output)


def _svg_header(width: int, height: int) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _step_path(values: np.ndarray, x0: float, y0: float, dx: float, yscale: float) -> str:
    pts = []
    for t, v in enumerate(values):
        y = y0 - v * yscale
        pts.append(f"{x0 + t * dx:.2f},{y:.2f}")
        pts.append(f"{x0 + (t + 1) * dx:.2f},{y:.2f}")
    return " ".join(pts)


def emit_energy_profile(instance: Instance, schedule: Schedule, path: str | Path) -> None:
    """Write an SVG of load vs photovoltaic supply vs budget, plus a CSV
    twin (same stem, .csv suffix) with the raw per-slot vectors."""
    profile = energy_profile(instance, schedule)
    n = instance.num_slots
    path = Path(path)

    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["slot", "load_kwh", "pv_kwh", "budget_kwh"])
        for t in range(n):
            writer.writerow(
                [t, repr(float(profile.load[t])), repr(float(instance.pv_supply[t])), repr(instance.budget)]
            )

    width, height = 860, 420
    x0, y0 = 60, 370
    plot_w, plot_h = 760, 320
    top = max(float(profile.load.max(initial=0.0)), float(instance.pv_supply.max(initial=0.0)), instance.budget, 1e-9)
    yscale = plot_h / (1.15 * top)
    dx = plot_w / n

    lines = _svg_header(width, height)
    lines.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>')
    lines.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 - plot_h}" stroke="black"/>')
    budget_y = y0 - instance.budget * yscale
    lines.append(
        f'<line x1="{x0}" y1="{budget_y:.2f}" x2="{x0 + plot_w}" y2="{budget_y:.2f}" '
        'stroke="#aaaaaa" stroke-dasharray="10,5" stroke-width="2"/>'
    )
    lines.append(
        f'<polyline fill="none" stroke="#888888" stroke-dasharray="4,3" stroke-width="2" '
        f'points="{_step_path(instance.pv_supply, x0, y0, dx, yscale)}"/>'
    )
    lines.append(
        f'<polyline fill="none" stroke="black" stroke-width="2" '
        f'points="{_step_path(profile.load, x0, y0, dx, yscale)}"/>'
    )
    lines.append(f'<text x="{x0}" y="20" font-size="14">Consumption (black), '
                 f'photovoltaic (dashed gray), budget (dashed light gray), kWh per slot</text>')
    lines.append(f'<text x="{x0 + plot_w - 20}" y="{y0 + 30}" font-size="12">t</text>')
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_gantt(instance: Instance, schedule: Schedule, path: str | Path) -> None:
    """Write an SVG machine Gantt of the schedule."""
    n = instance.num_slots
    m = instance.num_machines
    row_h = 34
    width, height = 860, 60 + m * row_h
    x0, y0 = 60, 30
    dx = 760 / n

    lines = _svg_header(width, height)
    for i in range(m):
        y = y0 + i * row_h
        lines.append(
            f'<text x="8" y="{y + row_h * 0.65:.2f}" font-size="12">m{i}</text>'
        )
        lines.append(
            f'<line x1="{x0}" y1="{y + row_h}" x2="{x0 + 760}" y2="{y + row_h}" stroke="#dddddd"/>'
        )
    for job_id in sorted(schedule.assignments):
        machine_id, start = schedule.assignments[job_id]
        p = instance.jobs[job_id].processing_time
        x = x0 + start * dx
        y = y0 + machine_id * row_h + 4
        lines.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{p * dx:.2f}" height="{row_h - 8}" '
            f'fill="#b8c4d8" stroke="black"/>'
        )
        lines.append(
            f'<text x="{x + p * dx / 2:.2f}" y="{y + (row_h - 8) * 0.7:.2f}" '
            f'font-size="11" text-anchor="middle">{job_id}</text>'
        )
    for t in range(0, n + 1, max(1, n // 12)):
        x = x0 + t * dx
        lines.append(
            f'<text x="{x:.2f}" y="{y0 + m * row_h + 16}" font-size="10" text-anchor="middle">{t}</text>'
        )
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
