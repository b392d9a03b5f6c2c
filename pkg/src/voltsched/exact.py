"""Exact machinery: time-indexed model, MPS export, branch-and-bound,
an exhaustive oracle, and the large-neighborhood exact improvement step.

The time-indexed formulation has a binary start variable per feasible
(job, machine, slot) triple, linked to continuous per-slot consumption
and grid-flow variables. The built-in depth-first branch-and-bound
replaces an external MILP solver; the model object remains available for
MPS export so external solvers stay pluggable.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import (
    BUDGET_TOL,
    IMPROVE_TOL,
    Instance,
    Schedule,
    check_feasibility,
    consumption_vector,
    evaluate_tec,
    load_vector,
    total_cost,
    window_cost,
)

ORACLE_NODE_CAP = 10**8


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    FEASIBLE_INCUMBENT = "FeasibleIncumbent"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT_NO_SOLUTION = "TimeLimitNoSolution"


@dataclass
class SolveOutcome:
    """Result of an exact solve.

    ``upper_bound`` is the cost of the incumbent, ``lower_bound`` a valid
    bound on any feasible completion. OPTIMAL with no incumbent means the
    search proved nothing beats the caller-provided reference bound.
    """

    status: SolveStatus
    incumbent: Optional[Schedule]
    upper_bound: Optional[float]
    lower_bound: Optional[float]
    runtime_s: float
    nodes: int

    def __post_init__(self) -> None:
        if self.upper_bound is not None and self.lower_bound is not None:
            if self.lower_bound > self.upper_bound + 1e-6:
                raise ValueError(
                    f"lower bound {self.lower_bound} exceeds upper bound {self.upper_bound}"
                )


@dataclass(frozen=True)
class Row:
    """One linear constraint: sum(coeffs[col] * x[col]) sense rhs."""

    name: str
    sense: str  # 'E' or 'L'
    rhs: float
    coeffs: dict[int, float]


@dataclass
class ModelDescription:
    """Time-indexed MILP in explicit matrix form.

    Column order: all binary start variables, then consumption variables
    W per (job, slot), then bought U and sold V per slot. ``fixed_ones``
    pins a start variable per job to 1 (all other starts of that job are
    implied 0).
    """

    num_slots: int
    col_names: list[str]
    x_index: dict[tuple[int, int, int], int]  # (job, machine, start) -> column
    w_index: dict[tuple[int, int], int]  # (job, slot) -> column
    u_index: dict[int, int]  # slot -> column
    v_index: dict[int, int]
    objective: dict[int, float]
    rows: list[Row]
    fixed_ones: dict[int, tuple[int, int]]  # job -> (machine, start)

    @property
    def num_cols(self) -> int:
        return len(self.col_names)

    @property
    def integer_cols(self) -> range:
        return range(len(self.x_index))


def build_tif(instance: Instance, fixings: dict[int, tuple[int, int]] | None = None) -> ModelDescription:
    """Build the time-indexed model, optionally pinning job starts.

    Rows, in order: one scheduling row per job, one capacity row per
    (machine, slot), one linking row per (job, slot), one flow-balance
    and one budget row per slot.
    """
    fixings = dict(fixings or {})
    n_slots = instance.num_slots

    col_names: list[str] = []
    x_index: dict[tuple[int, int, int], int] = {}
    for job in instance.jobs:
        for machine in instance.machines:
            for t in range(n_slots - job.processing_time + 1):
                x_index[(job.id, machine.id, t)] = len(col_names)
                col_names.append(f"X_{job.id}_{machine.id}_{t}")
    w_index: dict[tuple[int, int], int] = {}
    for job in instance.jobs:
        for t in range(n_slots):
            w_index[(job.id, t)] = len(col_names)
            col_names.append(f"W_{job.id}_{t}")
    u_index: dict[int, int] = {}
    v_index: dict[int, int] = {}
    for t in range(n_slots):
        u_index[t] = len(col_names)
        col_names.append(f"U_{t}")
    for t in range(n_slots):
        v_index[t] = len(col_names)
        col_names.append(f"V_{t}")

    objective = {}
    for t in range(n_slots):
        objective[u_index[t]] = float(instance.buy_cost[t])
        objective[v_index[t]] = -float(instance.sell_price[t])

    rows: list[Row] = []
    for job in instance.jobs:
        coeffs = {
            x_index[(job.id, m.id, t)]: 1.0
            for m in instance.machines
            for t in range(n_slots - job.processing_time + 1)
        }
        rows.append(Row(f"JOB_{job.id}", "E", 1.0, coeffs))

    for machine in instance.machines:
        for t in range(n_slots):
            coeffs = {}
            for job in instance.jobs:
                lo = max(0, t - job.processing_time + 1)
                hi = min(t, n_slots - job.processing_time)
                for tau in range(lo, hi + 1):
                    coeffs[x_index[(job.id, machine.id, tau)]] = 1.0
            rows.append(Row(f"CAP_{machine.id}_{t}", "L", 1.0, coeffs))

    for job in instance.jobs:
        for t in range(n_slots):
            coeffs = {w_index[(job.id, t)]: 1.0}
            lo = max(0, t - job.processing_time + 1)
            hi = min(t, n_slots - job.processing_time)
            for machine in instance.machines:
                for tau in range(lo, hi + 1):
                    u = machine.level * instance.grid.slot_hours * float(
                        job.base_consumption[t - tau]
                    )
                    coeffs[x_index[(job.id, machine.id, tau)]] = -u
            rows.append(Row(f"LINK_{job.id}_{t}", "E", 0.0, coeffs))

    for t in range(n_slots):
        coeffs = {w_index[(job.id, t)]: 1.0 for job in instance.jobs}
        coeffs[u_index[t]] = -1.0
        coeffs[v_index[t]] = 1.0
        rows.append(Row(f"BAL_{t}", "E", float(instance.pv_supply[t]), coeffs))

    for t in range(n_slots):
        rows.append(
            Row(
                f"BUD_{t}",
                "L",
                float(instance.budget - instance.pv_supply[t]),
                {u_index[t]: 1.0, v_index[t]: -1.0},
            )
        )

    # Validate fixings against variable domains and machine capacity.
    occupied: dict[tuple[int, int], int] = {}
    for job_id, (machine_id, start) in fixings.items():
        if (job_id, machine_id, start) not in x_index:
            raise ValueError(
                f"fixing job {job_id} to machine {machine_id}, start {start}: no such variable"
            )
        for t in range(start, start + instance.jobs[job_id].processing_time):
            other = occupied.get((machine_id, t))
            if other is not None:
                raise ValueError(
                    f"inconsistent fixings: jobs {other} and {job_id} overlap "
                    f"on machine {machine_id} at slot {t}"
                )
            occupied[(machine_id, t)] = job_id

    return ModelDescription(
        num_slots=n_slots,
        col_names=col_names,
        x_index=x_index,
        w_index=w_index,
        u_index=u_index,
        v_index=v_index,
        objective=objective,
        rows=rows,
        fixed_ones=fixings,
    )


def solve_fixed_model(model: ModelDescription) -> float:
    """Objective optimum of a model whose jobs are all pinned.

    Reconstructs per-slot consumption from the linking rows' coefficients
    and resolves the remaining buy/sell freedom, which is a per-slot ray
    whose cost strictly increases along the ray direction. Raises if the
    pinned loads break a budget row.
    """
    jobs = sorted({j for (j, _t) in model.w_index})
    missing = [j for j in jobs if j not in model.fixed_ones]
    if missing:
        raise ValueError(f"model not fully fixed: jobs {missing} free")

    n = model.num_slots
    rows_by_name = {row.name: row for row in model.rows}
    load = np.zeros(n)
    for j in jobs:
        machine_id, start = model.fixed_ones[j]
        xcol = model.x_index[(j, machine_id, start)]
        w = np.zeros(n)
        for t in range(n):
            w[t] = -rows_by_name[f"LINK_{j}_{t}"].coeffs.get(xcol, 0.0)
        load += w

    pv = np.array([rows_by_name[f"BAL_{t}"].rhs for t in range(n)])
    bought = np.maximum(load - pv, 0.0)
    sold = np.maximum(pv - load, 0.0)
    for t in range(n):
        slack = rows_by_name[f"BUD_{t}"].rhs - (bought[t] - sold[t])
        if slack < -BUDGET_TOL:
            raise ValueError(f"fixed model infeasible: budget row BUD_{t} violated")
    cu = np.array([model.objective[model.u_index[t]] for t in range(n)])
    cv = np.array([model.objective[model.v_index[t]] for t in range(n)])
    return float(np.sum(cu * bought + cv * sold))


def export_mps(model: ModelDescription, path: str | Path) -> None:
    """Write the model as an MPS file (minimization; starts are binary).

    Pinned starts become FX bounds at 1, with the job's remaining start
    variables fixed at 0.
    """
    lines = ["NAME          VOLTSCHED", "ROWS", " N  COST"]
    for row in model.rows:
        lines.append(f" {row.sense}  {row.name}")

    col_rows: list[list[tuple[str, float]]] = [[] for _ in range(model.num_cols)]
    for col, coeff in model.objective.items():
        col_rows[col].append(("COST", coeff))
    for row in model.rows:
        for col, coeff in row.coeffs.items():
            col_rows[col].append((row.name, coeff))

    lines.append("COLUMNS")

    def emit(col: int) -> None:
        name = model.col_names[col]
        entries = col_rows[col]
        for k in range(0, len(entries), 2):
            chunk = entries[k : k + 2]
            parts = "".join(f"  {rn:<10}{cf:< .12g}" for rn, cf in chunk)
            lines.append(f"    {name:<12}{parts}")

    lines.append("    MARKER                 'MARKER'                 'INTORG'")
    for col in model.integer_cols:
        emit(col)
    lines.append("    MARKER                 'MARKER'                 'INTEND'")
    for col in range(len(model.x_index), model.num_cols):
        emit(col)

    lines.append("RHS")
    for row in model.rows:
        if row.rhs != 0.0:
            lines.append(f"    RHS         {row.name:<10}{row.rhs:< .12g}")

    lines.append("BOUNDS")
    fixed_cols = {}
    for job_id, (machine_id, start) in model.fixed_ones.items():
        fixed_cols[model.x_index[(job_id, machine_id, start)]] = 1.0
        for (j, i, t), col in model.x_index.items():
            if j == job_id and (i, t) != (machine_id, start):
                fixed_cols[col] = 0.0
    for col in model.integer_cols:
        if col in fixed_cols:
            lines.append(f" FX BND       {model.col_names[col]:<10}{fixed_cols[col]:< .12g}")
        else:
            lines.append(f" UP BND       {model.col_names[col]:<10} 1")
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_solver_solution(path: str | Path) -> Schedule:
    """Parse an external solver's assignment lines ('X_j_i_t value')."""
    assignments: dict[int, tuple[int, int]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split()
        if len(parts) < 2 or not parts[0].startswith("X_"):
            continue
        try:
            value = float(parts[1])
            _, j, i, t = parts[0].split("_")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: cannot parse '{line}'") from exc
        if value >= 0.5:
            assignments[int(j)] = (int(i), int(t))
    return Schedule(assignments)


# ---------------------------------------------------------------------------
# Branch and bound


def _machine_busy(instance: Instance, schedule: Schedule) -> np.ndarray:
    busy = np.zeros((instance.num_machines, instance.num_slots), dtype=bool)
    for job_id, (machine_id, start) in schedule.assignments.items():
        p = instance.jobs[job_id].processing_time
        if busy[machine_id, start : start + p].any():
            raise ValueError(f"schedule overlaps on machine {machine_id}")
        busy[machine_id, start : start + p] = True
    return busy


def branch_and_bound(
    instance: Instance,
    free_jobs: Sequence[int],
    frozen: Schedule,
    time_limit_s: float | None = None,
    stop_at_first_feasible: bool = False,
    node_limit: int | None = None,
    upper_bound: float | None = None,
    node_hook: Callable[[dict[int, tuple[int, int]], float], None] | None = None,
) -> SolveOutcome:
    """Depth-first search over placements of ``free_jobs`` on any machine.

    ``frozen`` assignments stay put and must respect the budget on their
    own (added jobs only ever increase the load, so a violated frozen
    part can never be completed). Nodes are pruned against the incumbent
    using the sell-price relaxation: every kWh placed at slot t costs at
    least the sell price at t, so a job adds at least its cheapest
    placement valued at sell prices. ``node_limit`` caps explored nodes
    for reproducible runs; ``upper_bound`` seeds pruning so only strictly
    better incumbents are reported.
    """
    t_start = time.perf_counter()
    n_slots = instance.num_slots
    budget = instance.budget

    free = sorted(set(free_jobs), key=lambda j: (-instance.jobs[j].processing_time, j))
    overlap_free_frozen = set(frozen.assignments) & set(free)
    if overlap_free_frozen:
        raise ValueError(f"jobs {sorted(overlap_free_frozen)} both frozen and free")

    busy = _machine_busy(instance, frozen)
    load = load_vector(instance, frozen)
    seeded = upper_bound is not None

    def outcome(status, incumbent, z_ub, z_lb, nodes):
        return SolveOutcome(status, incumbent, z_ub, z_lb, time.perf_counter() - t_start, nodes)

    if (load > budget + BUDGET_TOL).any():
        return outcome(SolveStatus.INFEASIBLE, None, None, None, 0)

    # All horizon-valid placements plus the cheapest-possible cost of each
    # job under sell-price rates (admissible completion bound).
    placements: dict[int, list[tuple[int, int, np.ndarray]]] = {}
    min_rate_cost: dict[int, float] = {}
    for j in free:
        p = instance.jobs[j].processing_time
        if p > n_slots:
            return outcome(SolveStatus.INFEASIBLE, None, None, None, 0)
        options = []
        best_rate = math.inf
        for machine in instance.machines:
            u = consumption_vector(instance, j, machine.id)
            for s in range(n_slots - p + 1):
                options.append((machine.id, s, u))
                rate = float(np.dot(u, instance.sell_price[s : s + p]))
                best_rate = min(best_rate, rate)
        placements[j] = options
        min_rate_cost[j] = best_rate

    suffix_rate = [0.0] * (len(free) + 1)
    for k in range(len(free) - 1, -1, -1):
        suffix_rate[k] = suffix_rate[k + 1] + min_rate_cost[free[k]]

    frozen_cost = total_cost(instance, load)
    root_bound = frozen_cost + suffix_rate[0]

    best_schedule: Schedule | None = None
    best_cost = math.inf
    prune_at = upper_bound if seeded else math.inf
    nodes = 0
    aborted = False
    chosen: dict[int, tuple[int, int]] = {}

    def cutoff() -> bool:
        if node_limit is not None and nodes >= node_limit:
            return True
        if time_limit_s is not None and time.perf_counter() - t_start >= time_limit_s:
            return True
        return False

    def descend(depth: int, cost_so_far: float) -> bool:
        """Returns True when the search should stop unwinding."""
        nonlocal best_schedule, best_cost, prune_at, nodes, aborted
        if depth == len(free):
            z = total_cost(instance, load)
            if z < min(best_cost, prune_at):
                best_cost = z
                best_schedule = Schedule({**frozen.assignments, **chosen})
                prune_at = z
                if stop_at_first_feasible:
                    return True
            return False

        j = free[depth]
        p = instance.jobs[j].processing_time
        candidates = []
        for machine_id, s, u in placements[j]:
            if busy[machine_id, s : s + p].any():
                continue
            seg = load[s : s + p]
            if ((seg + u) > budget + BUDGET_TOL).any():
                continue
            before = window_cost(instance, load, s, s + p)
            load[s : s + p] += u
            delta = window_cost(instance, load, s, s + p) - before
            load[s : s + p] -= u
            candidates.append((delta, machine_id, s, u))
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))

        for delta, machine_id, s, u in candidates:
            if cutoff():
                aborted = True
                return True
            nodes += 1
            bound = cost_so_far + delta + suffix_rate[depth + 1]
            if node_hook is not None:
                node_hook({**chosen, j: (machine_id, s)}, bound)
            if bound >= prune_at - IMPROVE_TOL:
                continue
            busy[machine_id, s : s + p] = True
            load[s : s + p] += u
            chosen[j] = (machine_id, s)
            stop = descend(depth + 1, cost_so_far + delta)
            del chosen[j]
            load[s : s + p] -= u
            busy[machine_id, s : s + p] = False
            if stop:
                return True
        return False

    stopped_early = descend(0, frozen_cost)

    if aborted:
        if best_schedule is not None:
            return outcome(
                SolveStatus.FEASIBLE_INCUMBENT, best_schedule, best_cost, root_bound, nodes
            )
        return outcome(SolveStatus.TIME_LIMIT_NO_SOLUTION, None, None, root_bound, nodes)
    if best_schedule is not None:
        if stopped_early:  # first-feasible stop: optimality not claimed
            return outcome(
                SolveStatus.FEASIBLE_INCUMBENT, best_schedule, best_cost, root_bound, nodes
            )
        return outcome(SolveStatus.OPTIMAL, best_schedule, best_cost, best_cost, nodes)
    if seeded:
        # Exhausted without beating the reference: optimum >= upper_bound.
        return outcome(SolveStatus.OPTIMAL, None, None, upper_bound, nodes)
    return outcome(SolveStatus.INFEASIBLE, None, None, None, nodes)


def solve_full(
    instance: Instance,
    time_limit_s: float | None = None,
    stop_at_first_feasible: bool = False,
    node_limit: int | None = None,
) -> SolveOutcome:
    """Branch-and-bound over the complete problem (every job free)."""
    return branch_and_bound(
        instance,
        free_jobs=[j.id for j in instance.jobs],
        frozen=Schedule.empty(),
        time_limit_s=time_limit_s,
        stop_at_first_feasible=stop_at_first_feasible,
        node_limit=node_limit,
    )


def oracle_enumerate(instance: Instance) -> SolveOutcome:
    """Exhaustive enumeration of all complete assignments.

    Independent of the branch-and-bound: no cost pruning, no ordering
    heuristics; candidate placements are only filtered by machine overlap
    and the budget, and full TEC is evaluated at every feasible leaf.
    """
    t_start = time.perf_counter()
    n = instance.num_jobs
    m = instance.num_machines
    n_slots = instance.num_slots
    if n * (m * n_slots) ** n > ORACLE_NODE_CAP:
        raise ValueError("instance too large for oracle")

    busy = [[False] * n_slots for _ in range(m)]
    load = [0.0] * n_slots
    assignment: dict[int, tuple[int, int]] = {}
    best: dict = {"schedule": None, "tec": math.inf, "leaves": 0}

    def place(job_pos: int) -> None:
        if job_pos == n:
            best["leaves"] += 1
            schedule = Schedule(dict(assignment))
            tec = evaluate_tec(instance, schedule)
            if tec < best["tec"]:
                best["tec"] = tec
                best["schedule"] = schedule
            return
        job = instance.jobs[job_pos]
        p = job.processing_time
        if p > n_slots:
            return
        for machine in instance.machines:
            u = [
                machine.level * instance.grid.slot_hours * float(w)
                for w in job.base_consumption
            ]
            for s in range(n_slots - p + 1):
                ok = True
                for k in range(p):
                    if busy[machine.id][s + k] or (
                        load[s + k] + u[k] > instance.budget + BUDGET_TOL
                    ):
                        ok = False
                        break
                if not ok:
                    continue
                for k in range(p):
                    busy[machine.id][s + k] = True
                    load[s + k] += u[k]
                assignment[job.id] = (machine.id, s)
                place(job_pos + 1)
                del assignment[job.id]
                for k in range(p):
                    busy[machine.id][s + k] = False
                    load[s + k] -= u[k]

    place(0)
    runtime = time.perf_counter() - t_start
    if best["schedule"] is None:
        return SolveOutcome(SolveStatus.INFEASIBLE, None, None, None, runtime, best["leaves"])
    return SolveOutcome(
        SolveStatus.OPTIMAL,
        best["schedule"],
        best["tec"],
        best["tec"],
        runtime,
        best["leaves"],
    )


# ---------------------------------------------------------------------------
# Large-neighborhood exact improvement


@dataclass
class MilpSearchConfig:
    """Tunables of the machine-freeing exact improvement loop."""

    machine_fraction_ladder: tuple[float, ...] = (0.2, 0.4, 0.6)
    fail_streak_to_escalate: int = 5
    max_iterations: int = 15
    time_limit_start_s: float = 2.0
    time_limit_growth: float = 2.0
    time_limit_cap_s: float = 30.0
    total_time_limit_s: float | None = None
    node_limit: int | None = None
    deterministic: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.machine_fraction_ladder:
            raise ValueError("machine_fraction_ladder must be non-empty")
        if any(not 0.0 < f <= 1.0 for f in self.machine_fraction_ladder):
            raise ValueError("machine fractions must be in (0, 1]")
        if self.deterministic and self.node_limit is None:
            raise ValueError("deterministic mode needs a node_limit")


def _violating_machines(instance: Instance, schedule: Schedule) -> set[int]:
    load = load_vector(instance, schedule)
    bad_slots = {t for t in range(instance.num_slots) if load[t] > instance.budget + BUDGET_TOL}
    hosts = set()
    for job_id, (machine_id, start) in schedule.assignments.items():
        p = instance.jobs[job_id].processing_time
        if any(start <= t < start + p for t in bad_slots):
            hosts.add(machine_id)
    return hosts


def milp_search(
    instance: Instance,
    schedule: Schedule,
    cfg: MilpSearchConfig,
    first_feasible_mode: bool = False,
    rng: random.Random | None = None,
) -> Schedule:
    """Free the jobs of a random machine subset and re-optimize them exactly.

    Repeats with fresh subsets until an improvement is found or the
    iteration cap is hit; the subset grows after a streak of failures and
    the per-solve time limit grows every iteration. Freed jobs may move
    to any machine. In first-feasible mode the input may violate the
    budget; machines hosting violations are always freed, and the first
    feasible completion is returned as soon as one exists.
    """
    rng = rng if rng is not None else random.Random(cfg.seed)
    t_start = time.perf_counter()
    m = instance.num_machines
    current = schedule.copy()

    if first_feasible_mode and check_feasibility(instance, current).feasible:
        return current
    current_cost = None if first_feasible_mode else evaluate_tec(instance, current)

    rung = 0
    fails_at_rung = 0
    gamma = cfg.time_limit_start_s
    for _ in range(cfg.max_iterations):
        if (
            not cfg.deterministic
            and cfg.total_time_limit_s is not None
            and time.perf_counter() - t_start >= cfg.total_time_limit_s
        ):
            break
        k = min(m, math.ceil(cfg.machine_fraction_ladder[rung] * m))
        if first_feasible_mode:
            chosen = _violating_machines(instance, current)
            others = [i for i in range(m) if i not in chosen]
            rng.shuffle(others)
            while len(chosen) < k and others:
                chosen.add(others.pop())
        else:
            chosen = set(rng.sample(range(m), k))

        free = [j for j, (i, _s) in current.assignments.items() if i in chosen]
        frozen = Schedule(
            {j: a for j, a in current.assignments.items() if a[0] not in chosen}
        )
        result = branch_and_bound(
            instance,
            free,
            frozen,
            time_limit_s=None if cfg.deterministic else gamma,
            stop_at_first_feasible=first_feasible_mode,
            node_limit=cfg.node_limit,
            upper_bound=None if first_feasible_mode else current_cost,
        )
        if result.incumbent is not None:
            if first_feasible_mode:
                return result.incumbent
            if result.upper_bound < current_cost - IMPROVE_TOL:
                return result.incumbent

        fails_at_rung += 1
        if fails_at_rung >= cfg.fail_streak_to_escalate and rung < len(cfg.machine_fraction_ladder) - 1:
            rung += 1
            fails_at_rung = 0
        gamma = min(gamma * cfg.time_limit_growth, cfg.time_limit_cap_s)
    return current
