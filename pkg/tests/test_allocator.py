import numpy as np
import pytest

from bessim.allocator import (
    AllocationVector,
    PsoParams,
    allocation_matrix_csv,
    allocation_trace_csv,
    balanced_allocation,
    fitness,
    grid_search_allocation,
    pso_allocate,
    repair,
)
from bessim.errors import DomainError, NoCapacityError
from bessim.plant import build_plant, uniform_plant_config


class TestAllocationVector:
    def test_sum_must_be_one(self):
        with pytest.raises(DomainError):
            AllocationVector(k=np.array([0.5, 0.4]))

    def test_entries_must_be_in_unit_interval(self):
        with pytest.raises(DomainError):
            AllocationVector(k=np.array([1.2, -0.2]))

    def test_len(self):
        assert len(AllocationVector(k=np.array([0.5, 0.5]))) == 2


class TestBalancedAllocation:
    def test_uniform_split(self):
        k = balanced_allocation(np.zeros(100, dtype=bool)).k
        assert np.allclose(k, 0.01)

    def test_blocked_cluster_gets_zero(self):
        k = balanced_allocation(np.array([False, True, False, False])).k
        assert k[1] == 0.0
        assert np.allclose(k[[0, 2, 3]], 1 / 3)

    def test_all_blocked_raises(self):
        with pytest.raises(NoCapacityError):
            balanced_allocation(np.ones(3, dtype=bool))


class TestRepair:
    def test_clamp_and_renormalize(self):
        k = repair(np.array([0.5, 0.7, -0.2]), np.zeros(3, dtype=bool))
        assert k == pytest.approx([0.41667, 0.58333, 0.0], abs=1e-4)
        assert k.sum() == pytest.approx(1.0)

    def test_feasible_input_is_fixed_point(self):
        k0 = np.array([0.25, 0.25, 0.5])
        assert repair(k0, np.zeros(3, dtype=bool)) == pytest.approx(k0)

    def test_all_zero_falls_back_to_balanced(self):
        k = repair(np.zeros(4), np.array([False, False, True, False]))
        assert k == pytest.approx([1 / 3, 1 / 3, 0.0, 1 / 3])

    def test_max_share_cap_redistributes(self):
        k = repair(np.array([0.9, 0.05, 0.05]), np.zeros(3, dtype=bool),
                   max_share=np.array([0.5, 1.0, 1.0]))
        assert k[0] == pytest.approx(0.5)
        assert k.sum() == pytest.approx(1.0)
        assert np.all(k <= np.array([0.5, 1.0, 1.0]) + 1e-12)

    def test_insufficient_cap_raises(self):
        with pytest.raises(NoCapacityError):
            repair(np.array([0.5, 0.5]), np.zeros(2, dtype=bool),
                   max_share=np.array([0.3, 0.3]))


class TestFitness:
    def test_balanced_charge_fitness_positive(self):
        plant = build_plant(uniform_plant_config(2))
        f = fitness(np.array([0.5, 0.5]), 80_000.0, plant)
        assert f > 0

    def test_infeasible_allocation_scores_minus_inf(self):
        plant = build_plant(uniform_plant_config(2))
        assert fitness(np.array([1.0, 0.0]), 120_000.0, plant) == -np.inf

    def test_does_not_mutate_plant_state(self):
        plant = build_plant(uniform_plant_config(2))
        soc0 = plant.soc.copy()
        fitness(np.array([0.5, 0.5]), 80_000.0, plant)
        assert np.array_equal(plant.soc, soc0)


class TestPsoAllocate:
    PARAMS = PsoParams(particles=12, max_iterations=15, rng_seed=7)

    def test_single_cluster_shortcut(self):
        plant = build_plant(uniform_plant_config(1))
        k, trace = pso_allocate(30_000.0, plant, self.PARAMS)
        assert k.k == pytest.approx([1.0])
        assert trace.size == 1

    def test_identical_clusters_prefer_even_split(self):
        plant = build_plant(uniform_plant_config(2))
        k, _ = pso_allocate(60_000.0, plant, self.PARAMS)
        assert k.k == pytest.approx([0.5, 0.5], abs=1e-3)
        f_even = fitness(np.array([0.5, 0.5]), 60_000.0, plant)
        f_skew = fitness(np.array([0.8, 0.2]), 60_000.0, plant)
        assert f_even > f_skew

    def test_fitness_at_least_balanced(self):
        plant = build_plant(uniform_plant_config(4))
        plant.soc = np.array([0.3, 0.5, 0.6, 0.8])
        plant.ipol = np.array([2.0, -1.0, 0.0, 0.5])
        k, trace = pso_allocate(-120_000.0, plant, self.PARAMS)
        blocked = plant.blocked_mask(-120_000.0)
        f_bal = fitness(balanced_allocation(blocked).k, -120_000.0, plant)
        assert trace[-1] >= f_bal - 1e-12
        assert k.k.sum() == pytest.approx(1.0, abs=1e-9)

    def test_trace_non_decreasing(self):
        plant = build_plant(uniform_plant_config(3))
        plant.soc = np.array([0.4, 0.5, 0.7])
        _, trace = pso_allocate(90_000.0, plant, self.PARAMS)
        assert np.all(np.diff(trace) >= -1e-12)

    def test_unequal_soc_discharge_leans_on_fuller_cluster(self):
        plant = build_plant(uniform_plant_config(2))
        plant.soc = np.array([0.3, 0.8])
        k, _ = pso_allocate(-60_000.0, plant,
                            PsoParams(particles=20, max_iterations=40,
                                      rng_seed=3))
        assert k.k[1] >= k.k[0]

    def test_params_validation(self):
        with pytest.raises(DomainError):
            PsoParams(inertia=1.5)
        with pytest.raises(DomainError):
            PsoParams(particles=1)


class TestGridSearch:
    def test_matches_pso_for_two_clusters(self):
        plant = build_plant(uniform_plant_config(2))
        plant.soc = np.array([0.4, 0.6])
        k_grid, f_grid = grid_search_allocation(70_000.0, plant,
                                                resolution=1e-2)
        k_pso, trace = pso_allocate(70_000.0, plant,
                                    PsoParams(particles=20,
                                              max_iterations=30, rng_seed=0))
        assert trace[-1] >= f_grid - abs(f_grid) * 1e-2 - 1e-9
        assert k_grid.sum() == pytest.approx(1.0)

    def test_large_m_rejected(self):
        plant = build_plant(uniform_plant_config(4))
        with pytest.raises(DomainError):
            grid_search_allocation(1e5, plant)


class TestCsvHelpers:
    def test_trace_csv_shape(self):
        text = allocation_trace_csv([(0, 1.5, np.array([0.5, 0.5]))])
        lines = text.strip().split("\n")
        assert lines[0] == "iteration,best_fitness_wh,best_k"
        assert lines[1].startswith("0,1.5,")

    def test_matrix_csv_shape(self):
        text = allocation_matrix_csv(np.array([0.0, 60.0]),
                                     np.array([[1.0, 0.0], [0.5, 0.5]]))
        lines = text.strip().split("\n")
        assert lines[0] == "time_s,k_0,k_1"
        assert len(lines) == 3
