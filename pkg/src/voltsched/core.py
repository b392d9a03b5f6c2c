"""Domain model for energy-aware parallel machine scheduling.

A working day is split into equal time slots. Jobs occupy consecutive
slots on one machine and draw a job- and slot-specific amount of energy;
photovoltaic supply is free, the grid sells at a per-slot buy cost and
buys back surplus at a lower per-slot sell price, and the aggregate
consumption of all machines must stay below a per-slot budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

HOURS_PER_DAY = 24.0

# Absolute kWh slack for per-slot budget comparisons. All quantities are
# finite sums/products of doubles, so a tiny fixed tolerance suffices.
BUDGET_TOL = 1e-9

# A TEC delta must clear this margin to count as an improvement.
IMPROVE_TOL = 1e-9


class PartialScheduleError(ValueError):
    """An operation that needs every job assigned got a partial schedule."""


@dataclass(frozen=True)
class TimeGrid:
    """One-day horizon of ``num_slots`` equal slots of ``slot_hours`` hours."""

    num_slots: int
    slot_hours: float = 0.0

    def __post_init__(self) -> None:
        if self.num_slots < 1:
            raise ValueError(f"num_slots must be >= 1, got {self.num_slots}")
        if self.slot_hours == 0.0:
            object.__setattr__(self, "slot_hours", HOURS_PER_DAY / self.num_slots)
        if self.slot_hours <= 0.0:
            raise ValueError("slot_hours must be positive")
        if abs(self.num_slots * self.slot_hours - HOURS_PER_DAY) > 1e-9:
            raise ValueError(
                f"{self.num_slots} slots of {self.slot_hours} h do not tile a 24 h day"
            )

    def hour_of_slot(self, t: int) -> int:
        """Integer hour of day containing the start of slot ``t``."""
        if not 0 <= t < self.num_slots:
            raise IndexError(f"slot {t} outside horizon 0..{self.num_slots - 1}")
        # Exact for any grid: slot t starts at t * 24 / num_slots hours.
        return (t * 24) // self.num_slots


@dataclass(frozen=True, eq=False)
class Job:
    """A job with a fixed duration and a machine-independent consumption shape.

    ``base_consumption[k]`` weights the energy drawn in the k-th slot of
    execution; the machine's level and the slot duration convert it to kWh.
    """

    id: int
    processing_time: int
    base_consumption: np.ndarray

    def __post_init__(self) -> None:
        if self.processing_time < 1:
            raise ValueError(f"job {self.id}: processing_time must be >= 1")
        v = np.array(self.base_consumption, dtype=float)
        if v.shape != (self.processing_time,):
            raise ValueError(
                f"job {self.id}: consumption vector has {v.size} entries, "
                f"expected {self.processing_time}"
            )
        if (v < 0.0).any():
            raise ValueError(f"job {self.id}: consumption weights must be >= 0")
        v.flags.writeable = False
        object.__setattr__(self, "base_consumption", v)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Job):
            return NotImplemented
        return (
            self.id == other.id
            and self.processing_time == other.processing_time
            and np.array_equal(self.base_consumption, other.base_consumption)
        )


@dataclass(frozen=True)
class Machine:
    """A machine drawing ``level`` kWh per hour while it runs a job."""

    id: int
    level: float

    def __post_init__(self) -> None:
        if self.level <= 0.0:
            raise ValueError(f"machine {self.id}: level must be positive")


@dataclass(frozen=True)
class InstanceMeta:
    """Optional provenance of a generated instance (kept for file round trips)."""

    seed: Optional[int] = None
    saturation: Optional[float] = None


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable problem data.

    Per-slot vectors: ``buy_cost`` and ``sell_price`` in EUR/kWh,
    ``pv_supply`` in kWh per slot. ``budget`` is the kWh cap on total
    consumption in any single slot. Job and machine ids are positional.
    """

    jobs: tuple[Job, ...]
    machines: tuple[Machine, ...]
    grid: TimeGrid
    buy_cost: np.ndarray
    sell_price: np.ndarray
    pv_supply: np.ndarray
    budget: float
    meta: InstanceMeta = field(default_factory=InstanceMeta)

    def __post_init__(self) -> None:
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "machines", tuple(self.machines))
        for k, job in enumerate(self.jobs):
            if job.id != k:
                raise ValueError(f"job ids must be positional; jobs[{k}].id == {job.id}")
        for k, mach in enumerate(self.machines):
            if mach.id != k:
                raise ValueError(
                    f"machine ids must be positional; machines[{k}].id == {mach.id}"
                )
        n = self.grid.num_slots
        for name in ("buy_cost", "sell_price", "pv_supply"):
            vec = np.array(getattr(self, name), dtype=float)
            if vec.shape != (n,):
                raise ValueError(f"{name} must have {n} entries, got {vec.size}")
            if (vec < 0.0).any():
                raise ValueError(f"{name} entries must be >= 0")
            vec.flags.writeable = False
            object.__setattr__(self, name, vec)
        if (self.sell_price >= self.buy_cost).any():
            t = int(np.argmax(self.sell_price >= self.buy_cost))
            raise ValueError(
                f"no-arbitrage violated: sell_price[{t}] >= buy_cost[{t}]"
            )
        if self.budget < 0.0:
            raise ValueError("budget must be >= 0")

    @property
    def num_slots(self) -> int:
        return self.grid.num_slots

    @property
    def num_jobs(self) -> int:
        return len(self.jobs)

    @property
    def num_machines(self) -> int:
        return len(self.machines)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.jobs == other.jobs
            and self.machines == other.machines
            and self.grid == other.grid
            and np.array_equal(self.buy_cost, other.buy_cost)
            and np.array_equal(self.sell_price, other.sell_price)
            and np.array_equal(self.pv_supply, other.pv_supply)
            and self.budget == other.budget
            and self.meta == other.meta
        )


@dataclass
class Schedule:
    """Assignment of jobs to (machine, start slot) pairs.

    May be partial: search code removes and re-inserts jobs. Library
    functions never mutate a schedule they receive.
    """

    assignments: dict[int, tuple[int, int]] = field(default_factory=dict)

    @classmethod
    def empty(cls) -> "Schedule":
        return cls({})

    def copy(self) -> "Schedule":
        return Schedule(dict(self.assignments))

    def __len__(self) -> int:
        return len(self.assignments)

    def __contains__(self, job_id: int) -> bool:
        return job_id in self.assignments


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    """Per-slot energy accounting of a schedule.

    ``load`` is the total kWh consumed, ``bought``/``sold`` the grid flows
    after netting against photovoltaic supply; at most one of the two is
    positive in any slot.
    """

    load: np.ndarray
    bought: np.ndarray
    sold: np.ndarray


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    violations: tuple[tuple[int, float], ...]  # (slot, kWh above budget)
    unscheduled: tuple[int, ...]
    overlaps: tuple[tuple[int, int], ...]  # (machine, slot) with > 1 job


def consumption_of(instance: Instance, job_id: int, machine_id: int, offset: int) -> float:
    """kWh drawn by a job in its ``offset``-th execution slot on a machine."""
    job = instance.jobs[job_id]
    machine = instance.machines[machine_id]
    if not 0 <= offset < job.processing_time:
        raise IndexError(
            f"offset {offset} outside job {job_id} execution (p={job.processing_time})"
        )
    return machine.level * instance.grid.slot_hours * float(job.base_consumption[offset])


def consumption_vector(instance: Instance, job_id: int, machine_id: int) -> np.ndarray:
    """Per-slot kWh vector of a job on a machine (length ``processing_time``)."""
    job = instance.jobs[job_id]
    machine = instance.machines[machine_id]
    return machine.level * instance.grid.slot_hours * job.base_consumption


def feasible_start_window(instance: Instance, job_id: int) -> range:
    """Inclusive range of start slots keeping the job inside the horizon."""
    p = instance.jobs[job_id].processing_time
    n = instance.num_slots
    if p > n:
        raise ValueError(f"job {job_id} exceeds horizon: p={p} > {n} slots")
    return range(0, n - p + 1)


def _check_horizon(instance: Instance, schedule: Schedule) -> None:
    n = instance.num_slots
    for job_id, (machine_id, start) in schedule.assignments.items():
        job = instance.jobs[job_id]
        instance.machines[machine_id]  # raises IndexError on bad machine
        if start < 0 or start + job.processing_time > n:
            raise ValueError(
                f"job {job_id} at start {start} leaves the horizon "
                f"(p={job.processing_time}, |T|={n})"
            )


def load_vector(instance: Instance, schedule: Schedule) -> np.ndarray:
    """Total kWh consumed per slot. Jobs accumulate in ascending id order."""
    _check_horizon(instance, schedule)
    load = np.zeros(instance.num_slots)
    for job_id in sorted(schedule.assignments):
        machine_id, start = schedule.assignments[job_id]
        u = consumption_vector(instance, job_id, machine_id)
        load[start : start + u.size] += u
    return load


def energy_profile(instance: Instance, schedule: Schedule) -> EnergyProfile:
    """Load plus the cost-optimal buy/sell split against photovoltaic supply.

    The split is unique because selling pays strictly less than buying
    costs in every slot: surplus is sold, deficit is bought, never both.
    """
    load = load_vector(instance, schedule)
    bought = np.maximum(load - instance.pv_supply, 0.0)
    sold = np.maximum(instance.pv_supply - load, 0.0)
    return EnergyProfile(load=load, bought=bought, sold=sold)


def window_cost(instance: Instance, load: np.ndarray, lo: int = 0, hi: int | None = None) -> float:
    """Grid cost of ``load`` restricted to slots [lo, hi)."""
    if hi is None:
        hi = instance.num_slots
    seg = load[lo:hi]
    e = instance.pv_supply[lo:hi]
    deficit = np.maximum(seg - e, 0.0)
    surplus = np.maximum(e - seg, 0.0)
    return float(np.sum(instance.buy_cost[lo:hi] * deficit - instance.sell_price[lo:hi] * surplus))


def total_cost(instance: Instance, load: np.ndarray) -> float:
    """Grid cost of a load vector over the whole horizon."""
    return window_cost(instance, load, 0, instance.num_slots)


def evaluate_tec(instance: Instance, schedule: Schedule) -> float:
    """Total energy cost in EUR of a complete schedule (may be negative).

    Budget feasibility is not required; violating schedules are priced by
    the same formula, which is what cross-evaluation studies rely on.
    """
    missing = [j.id for j in instance.jobs if j.id not in schedule.assignments]
    if missing:
        raise PartialScheduleError(f"partial schedule: jobs {missing} unscheduled")
    profile = energy_profile(instance, schedule)
    return float(
        np.sum(instance.buy_cost * profile.bought - instance.sell_price * profile.sold)
    )


def check_feasibility(
    instance: Instance, schedule: Schedule, require_complete: bool = True
) -> FeasibilityVerdict:
    """Budget, machine-overlap and completeness check.

    With ``require_complete=False`` the verdict ignores unscheduled jobs
    (partial schedules are a legitimate intermediate state of the search),
    but still reports them.
    """
    _check_horizon(instance, schedule)
    n = instance.num_slots
    occupancy = np.zeros((instance.num_machines, n), dtype=np.int32)
    for job_id in sorted(schedule.assignments):
        machine_id, start = schedule.assignments[job_id]
        p = instance.jobs[job_id].processing_time
        occupancy[machine_id, start : start + p] += 1

    load = load_vector(instance, schedule)
    violations = tuple(
        (t, float(load[t] - instance.budget))
        for t in range(n)
        if load[t] > instance.budget + BUDGET_TOL
    )
    overlaps = tuple(
        (int(i), int(t)) for i, t in zip(*np.nonzero(occupancy >= 2))
    )
    unscheduled = tuple(
        j.id for j in instance.jobs if j.id not in schedule.assignments
    )
    feasible = not violations and not overlaps and (
        not unscheduled or not require_complete
    )
    return FeasibilityVerdict(
        feasible=feasible,
        violations=violations,
        unscheduled=unscheduled,
        overlaps=overlaps,
    )
