"""First-fit insertion heuristic and the staged search for a feasible start.

Feasibility alone is hard here (packing against a per-slot energy
budget), so three stages of increasing effort are tried: first-fit
insertion under several job orderings, then a budget-relaxed insertion
repaired by the exact large-neighborhood step, and finally a full exact
solve stopped at the first feasible solution.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    BUDGET_TOL,
    Instance,
    Schedule,
    check_feasibility,
    consumption_vector,
    load_vector,
)
from .exact import MilpSearchConfig, SolveStatus, milp_search, solve_full


class NoFeasibleInsertion(Exception):
    """First-fit insertion found no placement for a job."""

    def __init__(self, job_id: int):
        super().__init__(f"no feasible placement for job {job_id}")
        self.job_id = job_id


class NoSolutionFound(Exception):
    """Every constructive stage failed to produce a feasible schedule."""


@dataclass(frozen=True)
class Ordering:
    """Job ordering used by the insertion heuristic.

    Kinds: ``index`` (ascending id), ``p_desc`` / ``p_asc`` (by duration)
    and ``random`` (seeded shuffle).
    """

    kind: str
    seed: Optional[int] = None

    KINDS = ("index", "p_desc", "p_asc", "random")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown ordering '{self.kind}'")
        if self.kind == "random" and self.seed is None:
            raise ValueError("random ordering needs a seed")

    def arrange(self, instance: Instance, job_ids: Sequence[int]) -> list[int]:
        ids = sorted(job_ids)
        if self.kind == "index":
            return ids
        if self.kind == "p_desc":
            return sorted(ids, key=lambda j: (-instance.jobs[j].processing_time, j))
        if self.kind == "p_asc":
            return sorted(ids, key=lambda j: (instance.jobs[j].processing_time, j))
        rng = random.Random(self.seed)
        rng.shuffle(ids)
        return ids


@dataclass(frozen=True)
class ConstructiveConfig:
    seed: int = 0
    random_iterations: int = 1000
    repair_time_s: float = 30.0
    full_solve_time_s: float = 60.0
    repair_node_limit: Optional[int] = None
    full_solve_node_limit: Optional[int] = None
    deterministic: bool = False
    milp: MilpSearchConfig = field(default_factory=MilpSearchConfig)

    def __post_init__(self) -> None:
        if self.deterministic and (
            self.repair_node_limit is None or self.full_solve_node_limit is None
        ):
            # Deterministic runs replace wall-clock limits with node budgets.
            limit = self.milp.node_limit or 200_000
            if self.repair_node_limit is None:
                object.__setattr__(self, "repair_node_limit", limit)
            if self.full_solve_node_limit is None:
                object.__setattr__(self, "full_solve_node_limit", limit)


def insert_all(
    instance: Instance,
    partial: Schedule,
    pending_jobs: Sequence[int],
    criterion: Ordering | Sequence[int],
    relax_budget: bool = False,
) -> Schedule:
    """First-fit insertion of ``pending_jobs`` into a copy of ``partial``.

    Jobs are taken in criterion order (or in the given explicit order);
    for each, machines are scanned by ascending id and starts by
    ascending slot, and the first placement that fits the horizon, finds
    the machine free and (unless ``relax_budget``) keeps every covered
    slot within the budget is taken. Raises NoFeasibleInsertion naming
    the first job with no placement; existing assignments are never
    touched.
    """
    if isinstance(criterion, Ordering):
        order = criterion.arrange(instance, pending_jobs)
    else:
        order = list(criterion)
    already = set(partial.assignments) & set(order)
    if already:
        raise ValueError(f"jobs {sorted(already)} are already scheduled")

    n_slots = instance.num_slots
    budget = instance.budget
    busy = np.zeros((instance.num_machines, n_slots), dtype=bool)
    for job_id, (machine_id, start) in partial.assignments.items():
        p = instance.jobs[job_id].processing_time
        busy[machine_id, start : start + p] = True
    load = load_vector(instance, partial)

    result = partial.copy()
    for job_id in order:
        p = instance.jobs[job_id].processing_time
        placed = False
        for machine in instance.machines:
            if placed:
                break
            u = consumption_vector(instance, job_id, machine.id)
            for s in range(n_slots - p + 1):
                if busy[machine.id, s : s + p].any():
                    continue
                if not relax_budget and (
                    (load[s : s + p] + u) > budget + BUDGET_TOL
                ).any():
                    continue
                busy[machine.id, s : s + p] = True
                load[s : s + p] += u
                result.assignments[job_id] = (machine.id, s)
                placed = True
                break
        if not placed:
            raise NoFeasibleInsertion(job_id)
    return result


def _log(stage_log: Optional[list[str]], entry: str) -> None:
    if stage_log is not None:
        stage_log.append(entry)


def constructive_step(
    instance: Instance,
    config: ConstructiveConfig,
    stage_log: Optional[list[str]] = None,
) -> Schedule:
    """Produce a feasible complete schedule or raise NoSolutionFound.

    Stage 1 tries first-fit insertion ordered by index, by decreasing and
    increasing duration, then by seeded random orders. Stage 2 re-runs
    the last random order ignoring the budget and hands the result to the
    exact improvement step in first-feasible mode. Stage 3 solves the
    whole problem exactly, stopping at the first feasible solution.
    """
    all_jobs = [j.id for j in instance.jobs]
    criteria: list[Ordering] = [Ordering("index"), Ordering("p_desc"), Ordering("p_asc")]
    criteria += [
        Ordering("random", seed=config.seed * 1_000_003 + it)
        for it in range(config.random_iterations)
    ]

    last_random_order: list[int] | None = None
    for criterion in criteria:
        if criterion.kind == "random":
            last_random_order = criterion.arrange(instance, all_jobs)
            order: Ordering | Sequence[int] = last_random_order
        else:
            order = criterion
        try:
            schedule = insert_all(instance, Schedule.empty(), all_jobs, order)
        except NoFeasibleInsertion:
            continue
        _log(stage_log, f"success:stage1:{criterion.kind}")
        return schedule
    _log(stage_log, "stage1:failed")

    if last_random_order is None:
        last_random_order = Ordering("random", seed=config.seed).arrange(instance, all_jobs)
    try:
        relaxed = insert_all(
            instance, Schedule.empty(), all_jobs, last_random_order, relax_budget=True
        )
    except NoFeasibleInsertion:
        relaxed = None
        _log(stage_log, "stage2:relaxed-insertion-failed")
    if relaxed is not None:
        repair_cfg = replace(
            config.milp,
            node_limit=config.repair_node_limit or config.milp.node_limit,
            deterministic=config.deterministic,
            total_time_limit_s=None if config.deterministic else config.repair_time_s,
        )
        repaired = milp_search(
            instance,
            relaxed,
            repair_cfg,
            first_feasible_mode=True,
            rng=random.Random(config.seed ^ 0x5EED),
        )
        if check_feasibility(instance, repaired).feasible:
            _log(stage_log, "success:stage2:repair")
            return repaired
        _log(stage_log, "stage2:failed")

    outcome = solve_full(
        instance,
        time_limit_s=None if config.deterministic else config.full_solve_time_s,
        stop_at_first_feasible=True,
        node_limit=config.full_solve_node_limit,
    )
    if outcome.incumbent is not None:
        _log(stage_log, "success:stage3:full-solve")
        return outcome.incumbent
    _log(stage_log, f"stage3:failed:{outcome.status.value}")
    raise NoSolutionFound(
        "no solution found"
        if outcome.status is SolveStatus.INFEASIBLE
        else "no solution found within budget"
    )
