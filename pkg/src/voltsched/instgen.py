"""Instance generation and file I/O.

A base configuration fixes everything except the consumption shapes:
processing times drawn from a truncated normal sized by a saturation
target, machine levels drawn from three classes, an Italian-style
time-of-use tariff, a photovoltaic staircase and a per-slot budget equal
to the simultaneous draw of all machines. From one base two instances
are derived: constant consumption (all weights 1) and a randomized
variable profile with the same per-job total energy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    HOURS_PER_DAY,
    Instance,
    InstanceMeta,
    Job,
    Machine,
    Schedule,
    TimeGrid,
)

# Buy tariff tiers in EUR/kWh by hour-of-day interval [start, end).
TOU_TIERS: tuple[tuple[int, int, float], ...] = (
    (0, 7, 0.12),
    (7, 8, 0.15),
    (8, 19, 0.18),
    (19, 23, 0.15),
    (23, 24, 0.12),
)

SELL_FRACTION = 1.0 / 3.0  # sell price as a fraction of the buy cost

# Photovoltaic staircase: zero before PV_START, six equal hourly steps up
# to the peak rate held over [PV_PEAK_HOUR, PV_PEAK_HOUR+1), symmetric
# descent back to zero at PV_END. Values read off a reference day curve;
# all overridable through GenParams.pv_peak.
PV_START = 8
PV_PEAK_HOUR = 13
PV_END = 19
PV_STEPS = 6

DEFAULT_PV_PEAK = 250.0
DEFAULT_LEVELS: tuple[float, ...] = (30.0, 50.0, 70.0)


class InstanceFormatError(ValueError):
    """Malformed instance or solution file."""


class GenerationError(RuntimeError):
    """Generation parameters cannot be satisfied."""


@dataclass(frozen=True)
class GenParams:
    num_jobs: int
    num_machines: int
    num_slots: int
    saturation: float
    seed: int
    pv_peak: float = DEFAULT_PV_PEAK
    level_choices: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        if self.num_jobs < 1 or self.num_machines < 1 or self.num_slots < 1:
            raise ValueError("counts must be >= 1")
        if not 0.0 < self.saturation <= 1.0:
            raise ValueError(f"saturation must be in (0, 1], got {self.saturation}")
        if self.pv_peak < 0.0:
            raise ValueError("pv_peak must be >= 0")
        if not self.level_choices:
            raise ValueError("level_choices must be non-empty")


@dataclass(frozen=True)
class BaseConfig:
    """Everything both derived instances share: jobs carry only a duration."""

    processing_times: tuple[int, ...]
    machines: tuple[Machine, ...]
    grid: TimeGrid
    buy_cost: np.ndarray
    sell_price: np.ndarray
    pv_supply: np.ndarray
    budget: float
    seed: int
    saturation: float


def hourly_rate(hour: int, pv_peak: float) -> float:
    """Photovoltaic production rate in kWh per hour at a given hour of day."""
    if hour < PV_START or hour >= PV_END:
        return 0.0
    if hour <= PV_PEAK_HOUR:
        step = hour - PV_START + 1
    else:
        step = PV_END - hour
    return pv_peak * step / PV_STEPS


def tou_costs(num_slots: int) -> np.ndarray:
    """Per-slot buy cost; each slot gets the tariff of its starting hour."""
    grid = TimeGrid(num_slots)
    costs = np.empty(num_slots)
    for t in range(num_slots):
        hour = grid.hour_of_slot(t)
        for lo, hi, price in TOU_TIERS:
            if lo <= hour < hi:
                costs[t] = price
                break
    return costs


def pv_profile(num_slots: int, pv_peak: float = DEFAULT_PV_PEAK) -> np.ndarray:
    """Per-slot photovoltaic energy in kWh, from the hourly staircase."""
    if pv_peak < 0.0:
        raise ValueError("pv_peak must be >= 0")
    grid = TimeGrid(num_slots)
    return np.array(
        [hourly_rate(grid.hour_of_slot(t), pv_peak) * grid.slot_hours for t in range(num_slots)]
    )


def generate_base(params: GenParams) -> BaseConfig:
    """Draw a base configuration; deterministic given the seed."""
    rng = np.random.default_rng(params.seed)
    grid = TimeGrid(params.num_slots)
    # Mean duration that hits the saturation target.
    mu = params.num_slots * params.num_machines * params.saturation / params.num_jobs

    processing_times: tuple[int, ...] | None = None
    for _ in range(100):
        draws = rng.normal(mu, mu / 3.0, size=params.num_jobs)
        p = [min(params.num_slots, max(1, math.floor(x + 0.5))) for x in draws]
        if sum(p) <= params.num_machines * params.num_slots:
            processing_times = tuple(p)
            break
    if processing_times is None:
        raise GenerationError(
            f"unsatisfiable saturation {params.saturation}: total processing time "
            f"exceeds machine capacity in 100 attempts"
        )

    levels = rng.choice(np.asarray(params.level_choices, dtype=float), size=params.num_machines)
    machines = tuple(Machine(id=i, level=float(lv)) for i, lv in enumerate(levels))
    budget = float(sum(m.level for m in machines) * grid.slot_hours)

    buy = tou_costs(params.num_slots)
    return BaseConfig(
        processing_times=processing_times,
        machines=machines,
        grid=grid,
        buy_cost=buy,
        sell_price=buy * SELL_FRACTION,
        pv_supply=pv_profile(params.num_slots, params.pv_peak),
        budget=budget,
        seed=params.seed,
        saturation=params.saturation,
    )


def _instance_from_base(base: BaseConfig, jobs: tuple[Job, ...]) -> Instance:
    return Instance(
        jobs=jobs,
        machines=base.machines,
        grid=base.grid,
        buy_cost=base.buy_cost,
        sell_price=base.sell_price,
        pv_supply=base.pv_supply,
        budget=base.budget,
        meta=InstanceMeta(seed=base.seed, saturation=base.saturation),
    )


def derive_fixed(base: BaseConfig) -> Instance:
    """Constant-consumption twin: every weight is 1, total energy p per job."""
    jobs = tuple(
        Job(id=j, processing_time=p, base_consumption=np.ones(p))
        for j, p in enumerate(base.processing_times)
    )
    return _instance_from_base(base, jobs)


def variable_weights(p: int, rng: np.random.Generator) -> np.ndarray:
    """Random per-slot weights summing exactly to p.

    Each draw is uniform in [0.5, 1.5] times the average weight still
    needed over the remaining slots; the last slot closes the sum. The
    closing entry stays nonnegative because a draw takes at most 3/4 of
    the remaining mass while two or more slots remain.
    """
    weights = np.empty(p)
    remaining = float(p)
    for k in range(p - 1):
        mean_left = remaining / (p - k)
        w = rng.uniform(0.5 * mean_left, 1.5 * mean_left)
        weights[k] = w
        remaining -= w
    weights[p - 1] = remaining
    return weights


def derive_variable(base: BaseConfig, seed: int) -> Instance:
    """Randomized-consumption twin with the same per-job total energy."""
    rng = np.random.default_rng(seed)
    jobs = tuple(
        Job(id=j, processing_time=p, base_consumption=variable_weights(p, rng))
        for j, p in enumerate(base.processing_times)
    )
    return _instance_from_base(base, jobs)


def generate_pair(params: GenParams) -> tuple[Instance, Instance]:
    """(fixed, variable) instance pair from one base configuration."""
    base = generate_base(params)
    return derive_fixed(base), derive_variable(base, params.seed)


# ---------------------------------------------------------------------------
# File formats (JSON, UTF-8)


def instance_to_dict(instance: Instance) -> dict:
    return {
        "meta": {
            "num_slots": instance.num_slots,
            "slot_hours": instance.grid.slot_hours,
            "seed": instance.meta.seed,
            "saturation": instance.meta.saturation,
        },
        "machines": [
            {"id": m.id, "level_kwh_per_h": m.level} for m in instance.machines
        ],
        "jobs": [
            {"id": j.id, "p": j.processing_time, "v": j.base_consumption.tolist()}
            for j in instance.jobs
        ],
        "prices": {
            "buy": instance.buy_cost.tolist(),
            "sell": instance.sell_price.tolist(),
        },
        "pv": instance.pv_supply.tolist(),
        "budget_kwh_per_slot": instance.budget,
    }


def write_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=1), encoding="utf-8")


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise InstanceFormatError(f"{where}: missing field '{key}'")
    return data[key]


def instance_from_dict(data: dict, where: str = "instance") -> Instance:
    meta = _require(data, "meta", where)
    num_slots = _require(meta, "num_slots", f"{where}.meta")
    slot_hours = _require(meta, "slot_hours", f"{where}.meta")
    grid = TimeGrid(int(num_slots), float(slot_hours))

    machines = []
    for k, m in enumerate(_require(data, "machines", where)):
        machines.append(
            Machine(
                id=int(_require(m, "id", f"{where}.machines[{k}]")),
                level=float(_require(m, "level_kwh_per_h", f"{where}.machines[{k}]")),
            )
        )
    jobs = []
    for k, j in enumerate(_require(data, "jobs", where)):
        p = int(_require(j, "p", f"{where}.jobs[{k}]"))
        v = _require(j, "v", f"{where}.jobs[{k}]")
        if len(v) != p:
            raise InstanceFormatError(
                f"{where}.jobs[{k}]: consumption vector has {len(v)} entries, expected p={p}"
            )
        jobs.append(Job(id=int(_require(j, "id", f"{where}.jobs[{k}]")), processing_time=p,
                        base_consumption=np.asarray(v, dtype=float)))

    prices = _require(data, "prices", where)
    try:
        return Instance(
            jobs=tuple(jobs),
            machines=tuple(machines),
            grid=grid,
            buy_cost=np.asarray(_require(prices, "buy", f"{where}.prices"), dtype=float),
            sell_price=np.asarray(_require(prices, "sell", f"{where}.prices"), dtype=float),
            pv_supply=np.asarray(_require(data, "pv", where), dtype=float),
            budget=float(_require(data, "budget_kwh_per_slot", where)),
            meta=InstanceMeta(
                seed=None if meta.get("seed") is None else int(meta["seed"]),
                saturation=None if meta.get("saturation") is None else float(meta["saturation"]),
            ),
        )
    except ValueError as exc:
        raise InstanceFormatError(f"{where}: {exc}") from exc


def read_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data, where=str(path))


def write_solution(schedule: Schedule, tec: float | None, path: str | Path) -> None:
    data = {
        "assignments": [
            {"job": j, "machine": m, "start": s}
            for j, (m, s) in sorted(schedule.assignments.items())
        ],
        "tec_eur": tec,
    }
    Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")


def read_solution(path: str | Path) -> tuple[Schedule, float | None]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    assignments: dict[int, tuple[int, int]] = {}
    for k, a in enumerate(_require(data, "assignments", str(path))):
        job = int(_require(a, "job", f"{path}.assignments[{k}]"))
        if job in assignments:
            raise InstanceFormatError(f"{path}.assignments[{k}]: job {job} assigned twice")
        assignments[job] = (
            int(_require(a, "machine", f"{path}.assignments[{k}]")),
            int(_require(a, "start", f"{path}.assignments[{k}]")),
        )
    tec = data.get("tec_eur")
    return Schedule(assignments), None if tec is None else float(tec)
