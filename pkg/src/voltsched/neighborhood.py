"""Swap and relocate moves with best-improvement selection, composed as a
variable neighborhood descent.

Every candidate move is priced incrementally on the load vector over the
slots it touches and is accepted only if the resulting schedule stays
feasible (horizon, machine occupancy and per-slot budget).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BUDGET_TOL,
    IMPROVE_TOL,
    Instance,
    Schedule,
    consumption_vector,
    load_vector,
    window_cost,
)


@dataclass(frozen=True)
class Move:
    """New placements for the jobs a move touches, plus its exact TEC delta."""

    placements: tuple[tuple[int, int, int], ...]  # (job, machine, start)
    delta: float


def apply_move(schedule: Schedule, move: Move) -> Schedule:
    out = schedule.copy()
    for job_id, machine_id, start in move.placements:
        out.assignments[job_id] = (machine_id, start)
    return out


def _owner_grid(instance: Instance, schedule: Schedule) -> np.ndarray:
    owner = np.full((instance.num_machines, instance.num_slots), -1, dtype=np.int64)
    for job_id, (machine_id, start) in schedule.assignments.items():
        p = instance.jobs[job_id].processing_time
        owner[machine_id, start : start + p] = job_id
    return owner


def _window_free(owner: np.ndarray, machine_id: int, start: int, length: int,
                 allowed: tuple[int, ...]) -> bool:
    seg = owner[machine_id, start : start + length]
    mask = seg >= 0
    for job_id in allowed:
        mask &= seg != job_id
    return not mask.any()


def best_swap_move(instance: Instance, schedule: Schedule) -> Move | None:
    """Best feasible exchange of two jobs' (machine, start) pairs, if improving.

    The moved jobs keep each other's start slots, so when their durations
    differ the new windows are revalidated against the horizon, the
    machines' other jobs and the budget. Ties go to the lexicographically
    smallest job pair.
    """
    n_slots = instance.num_slots
    load = load_vector(instance, schedule)
    owner = _owner_grid(instance, schedule)
    ids = sorted(schedule.assignments)

    best: Move | None = None
    best_delta = -IMPROVE_TOL
    for a in range(len(ids)):
        j1 = ids[a]
        i1, t1 = schedule.assignments[j1]
        p1 = instance.jobs[j1].processing_time
        for b in range(a + 1, len(ids)):
            j2 = ids[b]
            i2, t2 = schedule.assignments[j2]
            p2 = instance.jobs[j2].processing_time
            if (i1, t1) == (i2, t2):
                continue
            if t1 + p2 > n_slots or t2 + p1 > n_slots:
                continue
            if not _window_free(owner, i1, t1, p2, (j1, j2)):
                continue
            if not _window_free(owner, i2, t2, p1, (j1, j2)):
                continue
            if i1 == i2 and t1 < t2 + p1 and t2 < t1 + p2:
                continue  # the two new windows would overlap each other

            u1_old = consumption_vector(instance, j1, i1)
            u2_old = consumption_vector(instance, j2, i2)
            u2_new = consumption_vector(instance, j2, i1)
            u1_new = consumption_vector(instance, j1, i2)
            lo = min(t1, t2)
            hi = max(t1 + max(p1, p2), t2 + max(p1, p2))
            hi = min(hi, n_slots)
            seg = load[lo:hi].copy()
            seg[t1 - lo : t1 - lo + p1] -= u1_old
            seg[t2 - lo : t2 - lo + p2] -= u2_old
            seg[t1 - lo : t1 - lo + p2] += u2_new
            seg[t2 - lo : t2 - lo + p1] += u1_new
            if (seg > instance.budget + BUDGET_TOL).any():
                continue
            before = window_cost(instance, load, lo, hi)
            saved = load[lo:hi].copy()
            load[lo:hi] = seg
            delta = window_cost(instance, load, lo, hi) - before
            load[lo:hi] = saved
            if delta < best_delta:
                best_delta = delta
                best = Move(placements=((j2, i1, t1), (j1, i2, t2)), delta=delta)
    return best


def best_relocate_move(instance: Instance, schedule: Schedule) -> Move | None:
    """Best feasible move of one job to another (machine, start), if improving."""
    n_slots = instance.num_slots
    load = load_vector(instance, schedule)
    owner = _owner_grid(instance, schedule)

    best: Move | None = None
    best_delta = -IMPROVE_TOL
    for j in sorted(schedule.assignments):
        i_old, t_old = schedule.assignments[j]
        p = instance.jobs[j].processing_time
        u_old = consumption_vector(instance, j, i_old)
        for machine in instance.machines:
            u_new = consumption_vector(instance, j, machine.id)
            for s in range(n_slots - p + 1):
                if (machine.id, s) == (i_old, t_old):
                    continue
                if not _window_free(owner, machine.id, s, p, (j,)):
                    continue
                lo = min(t_old, s)
                hi = min(max(t_old, s) + p, n_slots)
                seg = load[lo:hi].copy()
                seg[t_old - lo : t_old - lo + p] -= u_old
                seg[s - lo : s - lo + p] += u_new
                if (seg > instance.budget + BUDGET_TOL).any():
                    continue
                before = window_cost(instance, load, lo, hi)
                saved = load[lo:hi].copy()
                load[lo:hi] = seg
                delta = window_cost(instance, load, lo, hi) - before
                load[lo:hi] = saved
                if delta < best_delta:
                    best_delta = delta
                    best = Move(placements=((j, machine.id, s),), delta=delta)
    return best


def swap_best(instance: Instance, schedule: Schedule) -> Schedule | None:
    move = best_swap_move(instance, schedule)
    return None if move is None else apply_move(schedule, move)


def relocate_best(instance: Instance, schedule: Schedule) -> Schedule | None:
    move = best_relocate_move(instance, schedule)
    return None if move is None else apply_move(schedule, move)


def vnd(instance: Instance, schedule: Schedule) -> Schedule:
    """Descend through swap then relocate until neither improves.

    Any improvement restarts from the first neighborhood, so the result
    is locally optimal for both.
    """
    current = schedule.copy()
    while True:
        move = best_swap_move(instance, current)
        if move is not None:
            current = apply_move(current, move)
            continue
        move = best_relocate_move(instance, current)
        if move is not None:
            current = apply_move(current, move)
            continue
        return current
