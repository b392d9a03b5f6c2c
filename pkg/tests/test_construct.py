import numpy as np
import pytest

from voltsched import exact, instgen
from voltsched.construct import (
    ConstructiveConfig,
    NoFeasibleInsertion,
    NoSolutionFound,
    Ordering,
    constructive_step,
    insert_all,
)
from voltsched.core import Schedule, check_feasibility, evaluate_tec, load_vector

from conftest import unit_instance


class TestOrdering:
    def test_kinds(self):
        inst = unit_instance([[1.0, 1.0], [1.0], [1.0, 1.0, 1.0]])
        ids = [0, 1, 2]
        assert Ordering("index").arrange(inst, ids) == [0, 1, 2]
        assert Ordering("p_desc").arrange(inst, ids) == [2, 0, 1]
        assert Ordering("p_asc").arrange(inst, ids) == [1, 0, 2]
        shuffled = Ordering("random", seed=4).arrange(inst, ids)
        assert sorted(shuffled) == ids
        assert Ordering("random", seed=4).arrange(inst, ids) == shuffled

    def test_random_needs_seed(self):
        with pytest.raises(ValueError):
            Ordering("random")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Ordering("alphabetical")


class TestInsertAll:
    def test_ramp_pair_first_fit(self, ramp_pair_variable):
        result = insert_all(
            ramp_pair_variable, Schedule.empty(), [0, 1], Ordering("index")
        )
        # job 0 lands first-fit at (m0, 0); starts 0 and 1 then blow the
        # budget for job 1, whose first fit is (m1, 2)
        assert result.assignments == {0: (0, 0), 1: (1, 2)}
        assert np.allclose(load_vector(ramp_pair_variable, result), [4, 4, 2, 4, 4])
        assert check_feasibility(ramp_pair_variable, result).feasible

    def test_empty_pending_returns_partial(self, ramp_pair_variable):
        partial = Schedule({0: (0, 0)})
        result = insert_all(ramp_pair_variable, partial, [], Ordering("index"))
        assert result.assignments == partial.assignments
        assert result is not partial

    def test_spiky_pair_no_feasible_insertion(self, spiky_pair_variable):
        for kind in ("index", "p_desc", "p_asc"):
            with pytest.raises(NoFeasibleInsertion):
                insert_all(spiky_pair_variable, Schedule.empty(), [0, 1], Ordering(kind))
        with pytest.raises(NoFeasibleInsertion) as info:
            insert_all(
                spiky_pair_variable, Schedule.empty(), [0, 1], Ordering("random", seed=1)
            )
        assert info.value.job_id in (0, 1)

    def test_relaxed_budget_places_anything_fitting(self, spiky_pair_variable):
        result = insert_all(
            spiky_pair_variable, Schedule.empty(), [0, 1], Ordering("index"),
            relax_budget=True,
        )
        assert len(result) == 2
        verdict = check_feasibility(spiky_pair_variable, result)
        assert not verdict.violations == ()  # budget ignored during insertion

    def test_never_touches_partial(self, ramp_pair_variable):
        partial = Schedule({1: (1, 2)})
        snapshot = dict(partial.assignments)
        result = insert_all(ramp_pair_variable, partial, [0], Ordering("index"))
        assert partial.assignments == snapshot
        assert result.assignments[1] == (1, 2)
        assert result.assignments[0] == (0, 0)

    def test_rejects_already_scheduled(self, ramp_pair_variable):
        with pytest.raises(ValueError, match="already scheduled"):
            insert_all(ramp_pair_variable, Schedule({0: (0, 0)}), [0], Ordering("index"))

    def test_strict_output_always_feasible(self):
        for seed in range(40):
            params = instgen.GenParams(5, 2, 24, 0.7, seed=seed)
            _, variable = instgen.generate_pair(params)
            try:
                result = insert_all(
                    variable, Schedule.empty(),
                    [j.id for j in variable.jobs], Ordering("random", seed=seed),
                )
            except NoFeasibleInsertion:
                continue
            assert check_feasibility(variable, result).feasible

    def test_explicit_sequence_order(self, ramp_pair_variable):
        result = insert_all(ramp_pair_variable, Schedule.empty(), [0, 1], [1, 0])
        # job 1 first: first fit at (m0, 0); then job 0 must dodge the budget
        assert result.assignments[1] == (0, 0)
        assert check_feasibility(ramp_pair_variable, result).feasible


class TestConstructiveStep:
    def test_fixed_instances_succeed_in_stage1(self):
        for seed in range(30):
            params = instgen.GenParams(6, 3, 24, 0.8, seed=seed)
            fixed = instgen.derive_fixed(instgen.generate_base(params))
            log: list[str] = []
            schedule = constructive_step(fixed, ConstructiveConfig(seed=seed), stage_log=log)
            assert check_feasibility(fixed, schedule).feasible
            assert log[-1].startswith("success:stage1")

    def test_spiky_pair_no_solution(self, spiky_pair_variable):
        log: list[str] = []
        cfg = ConstructiveConfig(seed=0, random_iterations=20)
        with pytest.raises(NoSolutionFound):
            constructive_step(spiky_pair_variable, cfg, stage_log=log)
        assert "stage1:failed" in log
        assert log.index("stage1:failed") < len(log) - 1  # later stages ran

    def test_stage_order_respected(self, spiky_pair_variable):
        log: list[str] = []
        cfg = ConstructiveConfig(seed=0, random_iterations=5)
        with pytest.raises(NoSolutionFound):
            constructive_step(spiky_pair_variable, cfg, stage_log=log)
        stage1 = [k for k, e in enumerate(log) if e.startswith("stage1")]
        stage2 = [k for k, e in enumerate(log) if e.startswith("stage2")]
        stage3 = [k for k, e in enumerate(log) if e.startswith("stage3")]
        assert stage1 and stage2 and stage3
        assert max(stage1) < min(stage2) < min(stage3)

    def test_ramp_pair_flat_prices_hits_optimum(self, ramp_pair_variable):
        schedule = constructive_step(ramp_pair_variable, ConstructiveConfig(seed=1))
        oracle = exact.oracle_enumerate(ramp_pair_variable)
        # flat buy price, no photovoltaic: every feasible schedule costs the
        # same, so the constructive result must match the optimum
        assert evaluate_tec(ramp_pair_variable, schedule) == pytest.approx(
            oracle.upper_bound, abs=1e-9
        )

    def test_stage2_repairs_when_strict_insertion_cannot(
        self, monkeypatch, ramp_pair_variable
    ):
        # strict insertion is forced to fail, so the relaxed insertion plus
        # exact repair must deliver the feasible schedule
        import voltsched.construct as construct_mod

        real_insert = construct_mod.insert_all

        def strict_blocked(instance, partial, pending, criterion, relax_budget=False):
            if not relax_budget:
                raise NoFeasibleInsertion(next(iter(pending), -1))
            return real_insert(instance, partial, pending, criterion, relax_budget)

        monkeypatch.setattr(construct_mod, "insert_all", strict_blocked)
        log: list[str] = []
        schedule = constructive_step(
            ramp_pair_variable,
            ConstructiveConfig(seed=0, random_iterations=3),
            stage_log=log,
        )
        assert check_feasibility(ramp_pair_variable, schedule).feasible
        assert log[-1] == "success:stage2:repair"

    def test_stage3_full_solve_as_last_resort(self, monkeypatch, ramp_pair_variable):
        import voltsched.construct as construct_mod

        def strict_blocked(instance, partial, pending, criterion, relax_budget=False):
            raise NoFeasibleInsertion(next(iter(pending), -1))

        monkeypatch.setattr(construct_mod, "insert_all", strict_blocked)
        log: list[str] = []
        schedule = constructive_step(
            ramp_pair_variable,
            ConstructiveConfig(seed=0, random_iterations=3),
            stage_log=log,
        )
        assert check_feasibility(ramp_pair_variable, schedule).feasible
        assert log[-1] == "success:stage3:full-solve"
