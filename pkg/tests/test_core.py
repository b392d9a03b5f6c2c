import random

import numpy as np
import pytest

from voltsched.core import (
    Instance,
    Job,
    Machine,
    PartialScheduleError,
    Schedule,
    TimeGrid,
    check_feasibility,
    consumption_of,
    energy_profile,
    evaluate_tec,
    feasible_start_window,
    load_vector,
)
from voltsched import exact

from conftest import random_complete_schedule, random_tiny_instance, unit_instance


class TestTimeGrid:
    def test_slot_hours_derived(self):
        grid = TimeGrid(96)
        assert grid.slot_hours == pytest.approx(0.25, abs=1e-12)
        assert grid.num_slots * grid.slot_hours == pytest.approx(24.0, abs=1e-9)

    def test_rejects_bad_tiling(self):
        with pytest.raises(ValueError):
            TimeGrid(10, slot_hours=1.0)
        with pytest.raises(ValueError):
            TimeGrid(0)

    def test_hour_of_slot(self):
        grid = TimeGrid(48)
        assert grid.hour_of_slot(0) == 0
        assert grid.hour_of_slot(14) == 7
        assert grid.hour_of_slot(47) == 23


class TestDomainValidation:
    def test_job_vector_length(self):
        with pytest.raises(ValueError):
            Job(id=0, processing_time=3, base_consumption=np.array([1.0, 2.0]))

    def test_job_negative_weight(self):
        with pytest.raises(ValueError):
            Job(id=0, processing_time=2, base_consumption=np.array([1.0, -0.1]))

    def test_no_arbitrage_enforced(self):
        with pytest.raises(ValueError, match="no-arbitrage"):
            unit_instance([[1.0]], buy=[0.1] * 5, sell=[0.1] * 5)

    def test_positional_ids(self):
        grid = TimeGrid(4)
        with pytest.raises(ValueError, match="positional"):
            Instance(
                jobs=(Job(id=1, processing_time=1, base_consumption=np.ones(1)),),
                machines=(Machine(0, 1.0),),
                grid=grid,
                buy_cost=np.ones(4),
                sell_price=np.zeros(4),
                pv_supply=np.zeros(4),
                budget=1.0,
            )


class TestConsumptionOf:
    def test_unit_grid_reads_weight(self, valley_job_variable):
        assert consumption_of(valley_job_variable, 0, 0, 1) == pytest.approx(4.0, abs=1e-9)

    def test_constant_profile(self):
        inst = unit_instance([[1.0, 1.0, 1.0]])
        for k in range(3):
            assert consumption_of(inst, 0, 0, k) == pytest.approx(1.0, abs=1e-9)

    def test_direct_product(self):
        grid = TimeGrid(96)  # 0.25 h slots
        inst = Instance(
            jobs=(Job(0, 1, np.array([2.0])),),
            machines=(Machine(0, 50.0),),
            grid=grid,
            buy_cost=np.full(96, 0.1),
            sell_price=np.zeros(96),
            pv_supply=np.zeros(96),
            budget=100.0,
        )
        assert consumption_of(inst, 0, 0, 0) == pytest.approx(25.0, abs=1e-12)

    def test_out_of_range(self, valley_job_variable):
        with pytest.raises(IndexError):
            consumption_of(valley_job_variable, 0, 0, 3)
        with pytest.raises(IndexError):
            consumption_of(valley_job_variable, 5, 0, 0)
        with pytest.raises(IndexError):
            consumption_of(valley_job_variable, 0, 9, 0)


class TestEnergyProfile:
    def test_spiky_pair_load(self, spiky_pair_variable):
        schedule = Schedule({0: (0, 0), 1: (1, 1)})
        profile = energy_profile(spiky_pair_variable, schedule)
        assert np.allclose(profile.load, [2, 5, 3, 5, 1], atol=1e-9)

    def test_ramp_pair_load(self, ramp_pair_variable):
        schedule = Schedule({0: (0, 0), 1: (1, 2)})
        profile = energy_profile(ramp_pair_variable, schedule)
        assert np.allclose(profile.load, [4, 4, 2, 4, 4], atol=1e-9)

    def test_empty_schedule_sells_pv(self):
        inst = unit_instance([[1.0]], pv=[1, 2, 0, 0, 1], sell=[0.5] * 5)
        profile = energy_profile(inst, Schedule.empty())
        assert np.array_equal(profile.load, np.zeros(5))
        assert np.array_equal(profile.sold, inst.pv_supply)
        assert np.array_equal(profile.bought, np.zeros(5))

    def test_flow_balance_property(self):
        rng = random.Random(77)
        checked = 0
        for seed in range(250):
            inst = random_tiny_instance(seed)
            for _ in range(4):
                schedule = random_complete_schedule(inst, rng)
                profile = energy_profile(inst, schedule)
                assert np.allclose(
                    profile.load - inst.pv_supply,
                    profile.bought - profile.sold,
                    atol=1e-9,
                )
                assert (profile.bought >= 0).all() and (profile.sold >= 0).all()
                assert np.all(profile.bought * profile.sold == 0.0)
                checked += 1
        assert checked >= 1000

    def test_monotone_load_when_extending(self):
        rng = random.Random(5)
        for seed in range(50):
            inst = random_tiny_instance(seed)
            schedule = random_complete_schedule(inst, rng)
            job_id = rng.choice(sorted(schedule.assignments))
            partial = schedule.copy()
            del partial.assignments[job_id]
            before = load_vector(inst, partial)
            after = load_vector(inst, schedule)
            assert (after >= before - 1e-12).all()

    def test_total_energy_independent_of_starts(self):
        rng = random.Random(6)
        for seed in range(50):
            inst = random_tiny_instance(seed)
            s1 = random_complete_schedule(inst, rng)
            total = sum(
                np.sum(
                    inst.machines[m].level
                    * inst.grid.slot_hours
                    * inst.jobs[j].base_consumption
                )
                for j, (m, s) in s1.assignments.items()
            )
            assert load_vector(inst, s1).sum() == pytest.approx(total, rel=1e-12)

    def test_horizon_violation_raises(self, valley_job_variable):
        with pytest.raises(ValueError, match="horizon"):
            energy_profile(valley_job_variable, Schedule({0: (0, 3)}))


class TestEvaluateTec:
    def test_valley_optimal_start(self, valley_job_variable):
        assert evaluate_tec(valley_job_variable, Schedule({0: (0, 1)})) == pytest.approx(
            0.24, abs=1e-9
        )

    def test_valley_early_start(self, valley_job_variable):
        assert evaluate_tec(valley_job_variable, Schedule({0: (0, 0)})) == pytest.approx(
            0.51, abs=1e-9
        )

    def test_constant_profile_indifferent(self, valley_job_fixed):
        for s in range(3):
            assert evaluate_tec(valley_job_fixed, Schedule({0: (0, s)})) == pytest.approx(
                0.42, abs=1e-9
            )

    def test_partial_rejected(self, spiky_pair_variable):
        with pytest.raises(PartialScheduleError, match="partial schedule"):
            evaluate_tec(spiky_pair_variable, Schedule({0: (0, 0)}))

    def test_matches_profile_flows_exactly(self):
        rng = random.Random(9)
        for seed in range(80):
            inst = random_tiny_instance(seed)
            schedule = random_complete_schedule(inst, rng)
            profile = energy_profile(inst, schedule)
            direct = float(
                np.sum(inst.buy_cost * profile.bought - inst.sell_price * profile.sold)
            )
            assert evaluate_tec(inst, schedule) == direct

    def test_matches_exact_solver_on_feasible(self):
        rng = random.Random(10)
        hits = 0
        for seed in range(200):
            inst = random_tiny_instance(seed)
            schedule = random_complete_schedule(inst, rng)
            if not check_feasibility(inst, schedule).feasible:
                continue
            model = exact.build_tif(inst, dict(schedule.assignments))
            assert exact.solve_fixed_model(model) == evaluate_tec(inst, schedule)
            hits += 1
        assert hits >= 20


class TestCheckFeasibility:
    def test_spiky_all_placements_infeasible(self, spiky_pair_variable):
        for s0 in (0, 1):
            for s1 in (0, 1):
                verdict = check_feasibility(
                    spiky_pair_variable, Schedule({0: (0, s0), 1: (1, s1)})
                )
                assert not verdict.feasible
                assert verdict.violations

    def test_fixed_overlap_violates_budget(self, ramp_pair_fixed):
        verdict = check_feasibility(ramp_pair_fixed, Schedule({0: (0, 0), 1: (1, 1)}))
        assert not verdict.feasible
        assert [t for t, _ in verdict.violations] == [1, 2]

    def test_single_job_alone_feasible(self):
        # any one machine's draw stays below a budget sized for all machines
        inst = unit_instance([[1.0, 1.0]], num_machines=3, budget=3.0)
        verdict = check_feasibility(inst, Schedule({0: (1, 2)}))
        assert verdict.feasible

    def test_overlap_reported(self):
        inst = unit_instance([[1.0], [1.0]], num_machines=1, budget=100.0)
        verdict = check_feasibility(inst, Schedule({0: (0, 2), 1: (0, 2)}))
        assert not verdict.feasible
        assert verdict.overlaps == ((0, 2),)

    def test_unscheduled_and_require_complete(self, spiky_pair_variable):
        partial = Schedule({0: (0, 0)})
        strict = check_feasibility(spiky_pair_variable, partial)
        relaxed = check_feasibility(spiky_pair_variable, partial, require_complete=False)
        assert strict.unscheduled == (1,) and relaxed.unscheduled == (1,)
        assert not strict.feasible
        assert relaxed.feasible

    def test_verdict_consistency(self):
        rng = random.Random(11)
        for seed in range(60):
            inst = random_tiny_instance(seed)
            schedule = random_complete_schedule(inst, rng)
            verdict = check_feasibility(inst, schedule)
            assert verdict.feasible == (
                not verdict.violations and not verdict.overlaps and not verdict.unscheduled
            )


class TestStartWindow:
    def test_two_starts(self, spiky_pair_variable):
        assert list(feasible_start_window(spiky_pair_variable, 0)) == [0, 1]

    def test_exact_fit(self):
        inst = unit_instance([[1.0] * 5])
        assert list(feasible_start_window(inst, 0)) == [0]

    def test_too_long(self):
        with pytest.raises(ValueError, match="exceeds horizon"):
            feasible_start_window(unit_instance([[1.0] * 6], num_slots=5), 0)
