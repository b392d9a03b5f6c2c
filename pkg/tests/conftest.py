"""Shared fixture builders.

The hand-built instances use a machine level equal to 1/slot_hours so
that one consumption-weight unit equals exactly one kWh; that keeps the
tiny examples readable (load vectors equal the weight sums).
"""

from __future__ import annotations

import random

import numpy as np
import pytest

from voltsched.core import Instance, Job, Machine, Schedule, TimeGrid


def unit_instance(
    jobs_v,
    num_machines=1,
    buy=None,
    sell=None,
    pv=None,
    budget=1000.0,
    num_slots=5,
):
    """Instance on a unit-energy grid: one weight unit == one kWh."""
    grid = TimeGrid(num_slots)
    level = 1.0 / grid.slot_hours
    jobs = tuple(
        Job(id=j, processing_time=len(v), base_consumption=np.asarray(v, dtype=float))
        for j, v in enumerate(jobs_v)
    )
    machines = tuple(Machine(id=i, level=level) for i in range(num_machines))
    buy = np.ones(num_slots) if buy is None else np.asarray(buy, dtype=float)
    sell = np.zeros(num_slots) if sell is None else np.asarray(sell, dtype=float)
    pv = np.zeros(num_slots) if pv is None else np.asarray(pv, dtype=float)
    return Instance(
        jobs=jobs,
        machines=machines,
        grid=grid,
        buy_cost=buy,
        sell_price=sell,
        pv_supply=pv,
        budget=budget,
    )


# Two four-slot jobs whose consumption peaks make every placement blow a
# budget of 4, although their averaged twins fit side by side.
@pytest.fixture
def spiky_pair_variable():
    return unit_instance([[2, 4, 1, 1], [1, 2, 4, 1]], num_machines=2, budget=4.0)


@pytest.fixture
def spiky_pair_fixed():
    return unit_instance([[2, 2, 2, 2], [2, 2, 2, 2]], num_machines=2, budget=4.0)


# Two three-slot jobs with complementary ramps: the variable pair can be
# staggered under a budget of 4, the averaged twins cannot.
@pytest.fixture
def ramp_pair_variable():
    return unit_instance([[4, 4, 1], [1, 4, 4]], num_machines=2, budget=4.0)


@pytest.fixture
def ramp_pair_fixed():
    return unit_instance([[3, 3, 3], [3, 3, 3]], num_machines=2, budget=4.0)


# One three-slot job over a tariff with a cheap valley in the middle slot.
VALLEY_BUY = [0.10, 0.10, 0.01, 0.10, 0.10]


@pytest.fixture
def valley_job_variable():
    return unit_instance([[1, 4, 1]], buy=VALLEY_BUY)


@pytest.fixture
def valley_job_fixed():
    return unit_instance([[2, 2, 2]], buy=VALLEY_BUY)


def random_tiny_instance(seed, max_jobs=4, max_machines=2, max_slots=8, generous_budget=False):
    """Small random instance; budget is drawn tight enough that a mix of
    feasible and infeasible instances appears across seeds."""
    rng = random.Random(seed)
    num_slots = rng.randint(3, max_slots)
    num_machines = rng.randint(1, max_machines)
    num_jobs = rng.randint(1, max_jobs)
    grid = TimeGrid(num_slots)
    jobs = []
    for j in range(num_jobs):
        p = rng.randint(1, min(3, num_slots))
        v = [rng.uniform(0.2, 3.0) for _ in range(p)]
        jobs.append(Job(id=j, processing_time=p, base_consumption=np.array(v)))
    machines = tuple(
        Machine(id=i, level=rng.choice([0.5, 1.0, 2.0]) / grid.slot_hours)
        for i in range(num_machines)
    )
    buy = np.array([rng.uniform(0.05, 0.2) for _ in range(num_slots)])
    sell = buy * rng.uniform(0.1, 0.9)
    pv = np.array([rng.uniform(0.0, 2.0) for _ in range(num_slots)])
    peak_draw = max(
        m.level * grid.slot_hours * max(j.base_consumption.max() for j in jobs)
        for m in machines
    )
    if generous_budget:
        budget = 1e6
    else:
        budget = peak_draw * rng.uniform(0.8, 2.2)
    return Instance(
        jobs=tuple(jobs),
        machines=machines,
        grid=grid,
        buy_cost=buy,
        sell_price=sell,
        pv_supply=pv,
        budget=budget,
    )


def random_complete_schedule(instance, rng):
    """Uniform random horizon-valid complete schedule (overlaps allowed)."""
    assignments = {}
    for job in instance.jobs:
        machine = rng.randrange(instance.num_machines)
        start = rng.randint(0, instance.num_slots - job.processing_time)
        assignments[job.id] = (machine, start)
    return Schedule(assignments)
