"""Iterated local search: constructive start, destroy-and-repair
perturbation, descent plus exact large-neighborhood improvement, and an
adaptive perturbation strength.

Each round perturbs the incumbent by emptying a random machine subset
and re-inserting the jobs, improves the result by descent and, only when
descent fails to beat the incumbent, by the exact improvement step. The
fraction of machines emptied is drawn from one of several increasing
intervals: improvements reset to the smallest interval, failures move to
the next one.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from .construct import ConstructiveConfig, NoSolutionFound, constructive_step, insert_all, NoFeasibleInsertion
from .core import IMPROVE_TOL, Instance, Schedule, evaluate_tec
from .exact import MilpSearchConfig, milp_search
from .neighborhood import vnd

PERTURB_REDRAW_ATTEMPTS = 20


@dataclass(frozen=True)
class IlsConfig:
    time_limit_s: float = 600.0
    max_noimprove_iters: int = 50
    max_iterations: Optional[int] = None
    perturbation_intervals: tuple[tuple[float, float], ...] = (
        (0.1, 0.3),
        (0.3, 0.6),
        (0.6, 0.9),
    )
    seed: int = 0
    deterministic: bool = False
    milp: MilpSearchConfig = field(default_factory=MilpSearchConfig)
    constructive: Optional[ConstructiveConfig] = None

    def __post_init__(self) -> None:
        if not self.perturbation_intervals:
            raise ValueError("need at least one perturbation interval")
        prev_hi = 0.0
        for lo, hi in self.perturbation_intervals:
            if not 0.0 <= lo < hi <= 1.0:
                raise ValueError(f"bad perturbation interval ({lo}, {hi})")
            if lo < prev_hi:
                raise ValueError("perturbation intervals must be ordered and non-overlapping")
            prev_hi = hi
        if self.deterministic and self.milp.node_limit is None:
            raise ValueError("deterministic mode needs milp.node_limit")

    def resolved_milp(self) -> MilpSearchConfig:
        if self.deterministic and not self.milp.deterministic:
            return replace(self.milp, deterministic=True)
        return self.milp

    def resolved_constructive(self) -> ConstructiveConfig:
        if self.constructive is not None:
            return self.constructive
        return ConstructiveConfig(
            seed=self.seed, deterministic=self.deterministic, milp=self.resolved_milp()
        )


class DestroyFractionSchedule:
    """Adaptive draw of the machine fraction to empty during perturbation.

    Holds an interval index: improvements reset it to the first interval,
    failures advance it and it saturates at the last one.
    """

    def __init__(self, intervals: tuple[tuple[float, float], ...]):
        self.intervals = intervals
        self.level = 0

    def draw(self, rng: random.Random) -> float:
        lo, hi = self.intervals[self.level]
        return rng.uniform(lo, hi)

    def update(self, improved: bool, rng: random.Random) -> float:
        if improved:
            self.level = 0
        else:
            self.level = min(self.level + 1, len(self.intervals) - 1)
        return self.draw(rng)


@dataclass(frozen=True)
class IterationRecord:
    index: int
    destroy_fraction: float
    tec_after_improvement: float
    accepted: bool
    vnd_improved: bool
    used_milp: bool


@dataclass
class RunReport:
    best: Schedule
    best_tec: float
    incumbent_time_s: float
    runtime_s: float
    iterations: list[IterationRecord]
    constructive_stage: int
    termination: str

    def to_dict(self) -> dict:
        return {
            "best_tec": self.best_tec,
            "incumbent_time_s": self.incumbent_time_s,
            "runtime_s": self.runtime_s,
            "constructive_stage": self.constructive_stage,
            "termination": self.termination,
            "iterations": [
                {
                    "index": r.index,
                    "destroy_fraction": r.destroy_fraction,
                    "tec_after_improvement": r.tec_after_improvement,
                    "accepted": r.accepted,
                    "vnd_improved": r.vnd_improved,
                    "used_milp": r.used_milp,
                }
                for r in self.iterations
            ],
        }


def perturb(
    instance: Instance,
    schedule: Schedule,
    destroy_fraction: float,
    rng: random.Random,
) -> Schedule:
    """Empty a random machine subset and re-insert its jobs in random order.

    Repair keeps the budget strict, so the result is always feasible; if
    no redraw admits a repair the input comes back unchanged.
    """
    m = instance.num_machines
    k = min(m, math.ceil(destroy_fraction * m))
    for _ in range(PERTURB_REDRAW_ATTEMPTS):
        chosen = set(rng.sample(range(m), k))
        removed = sorted(
            j for j, (i, _s) in schedule.assignments.items() if i in chosen
        )
        kept = Schedule(
            {j: a for j, a in schedule.assignments.items() if a[0] not in chosen}
        )
        order = list(removed)
        rng.shuffle(order)
        try:
            return insert_all(instance, kept, removed, order)
        except NoFeasibleInsertion:
            continue
    return schedule.copy()


def run_ils(instance: Instance, config: IlsConfig) -> RunReport:
    """Full search loop; raises NoSolutionFound when no start exists.

    In deterministic mode all exact sub-solves run on node budgets and
    termination uses only the iteration caps, so a run is a pure function
    of (instance, config).
    """
    t0 = time.perf_counter()
    rng = random.Random(config.seed)
    milp_cfg = config.resolved_milp()

    stage_log: list[str] = []
    s_best = constructive_step(instance, config.resolved_constructive(), stage_log=stage_log)
    f_best = evaluate_tec(instance, s_best)
    constructive_stage = next(
        (
            int(entry.split(":", 2)[1].removeprefix("stage"))
            for entry in reversed(stage_log)
            if entry.startswith("success:")
        ),
        1,
    )
    incumbent_time = time.perf_counter() - t0

    fractions = DestroyFractionSchedule(config.perturbation_intervals)
    destroy_fraction = fractions.draw(rng)
    iterations: list[IterationRecord] = []
    noimprove = 0
    index = 0
    termination = "no-improvement cap"

    while True:
        if noimprove >= config.max_noimprove_iters:
            termination = "no-improvement cap"
            break
        if config.max_iterations is not None and index >= config.max_iterations:
            termination = "iteration cap"
            break
        if not config.deterministic and time.perf_counter() - t0 >= config.time_limit_s:
            termination = "time limit"
            break
        index += 1

        used_fraction = destroy_fraction
        candidate = perturb(instance, s_best, used_fraction, rng)
        candidate = vnd(instance, candidate)
        f_candidate = evaluate_tec(instance, candidate)
        vnd_improved = f_candidate < f_best - IMPROVE_TOL

        used_milp = False
        if not vnd_improved:
            used_milp = True
            candidate = milp_search(instance, candidate, milp_cfg, rng=rng)
            f_candidate = evaluate_tec(instance, candidate)

        accepted = f_candidate < f_best - IMPROVE_TOL
        if accepted:
            s_best = candidate
            f_best = f_candidate
            incumbent_time = time.perf_counter() - t0
            noimprove = 0
        else:
            noimprove += 1
        destroy_fraction = fractions.update(accepted, rng)
        iterations.append(
            IterationRecord(
                index=index,
                destroy_fraction=used_fraction,
                tec_after_improvement=f_candidate,
                accepted=accepted,
                vnd_improved=vnd_improved,
                used_milp=used_milp,
            )
        )

    return RunReport(
        best=s_best,
        best_tec=f_best,
        incumbent_time_s=incumbent_time,
        runtime_s=time.perf_counter() - t0,
        iterations=iterations,
        constructive_stage=constructive_stage,
        termination=termination,
    )
