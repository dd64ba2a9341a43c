"""Tests for the two-stage optimizer: solvers, gradients, and water-filling."""

import itertools
import math

import numpy as np
import pytest

from bdris.channel import (
    AdmittanceChannels,
    FrequencyGrid,
    PathlossModel,
    build_channel_set,
)
from bdris.circuit import LinearSusceptanceModel, flat_model
from bdris.network import (
    FOREST,
    GROUP,
    ConstraintViolation,
    QuantizedSet,
    RisTopology,
)
from bdris.optimize import (
    AllZeroChannelError,
    ContinuousSolverConfig,
    EnumerationCeilingError,
    GreedyConfig,
    SumGainProblem,
    average_rate,
    box_map,
    box_map_inverse,
    jensen_upper_bound,
    solve_continuous,
    solve_discrete_greedy,
    solve_frequency_independent,
    sum_gain,
    two_stage_pipeline,
    water_filling,
    _bfgs_ascent,
)

OMEGA_C = 2 * math.pi * 2.4e9
MODEL = LinearSusceptanceModel(
    f1_slope=1.9421e-10,
    f1_intercept=-1.9201,
    f2_slope=6.5302e-12,
    f2_intercept=-0.0983,
    omega_c=OMEGA_C,
    susceptance_min=-0.023410724479338244,
    susceptance_max=0.06006099557898448,
)
B_LO = MODEL.susceptance_min
B_HI = MODEL.susceptance_max
PATHLOSS = PathlossModel(
    reference_gain_db=-30,
    distance_rt=33,
    distance_ri=5,
    distance_it=30,
    exponent_rt=3.8,
    exponent_ri=2.2,
    exponent_it=2.5,
)
Y0 = 0.02


def make_problem(seed, elements, group_size, architecture=GROUP, n=8, model=MODEL):
    cs = build_channel_set(seed, elements, (4, 4, 4), PATHLOSS, n, Y0)
    topo = RisTopology(architecture, elements, group_size)
    grid = FrequencyGrid(2.4e9, 100e6, n)
    return SumGainProblem(adm=cs.adm, topology=topo, model=model, omegas=grid.omegas)


def interior_points(rng, count, dim):
    width = B_HI - B_LO
    return rng.uniform(B_LO + 0.05 * width, B_HI - 0.05 * width, size=(count, dim))


class TestBoxMap:
    def test_image_stays_strictly_inside(self):
        x = np.linspace(-1e6, 1e6, 4001)
        b = box_map(x, B_LO, B_HI)
        assert np.all(b > B_LO)
        assert np.all(b < B_HI)

    def test_monotonic(self):
        x = np.linspace(-50, 50, 4001) * (B_HI - B_LO)
        b = box_map(x, B_LO, B_HI)
        assert np.all(np.diff(b) > 0)

    def test_zero_maps_to_midpoint(self):
        assert box_map(np.array(0.0), B_LO, B_HI) == pytest.approx(
            (B_LO + B_HI) / 2, rel=1e-15
        )

    def test_round_trip_from_x(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-10, 10, 200) * (B_HI - B_LO)
        back = box_map_inverse(box_map(x, B_LO, B_HI), B_LO, B_HI)
        assert np.allclose(back, x, rtol=1e-9, atol=0)

    def test_round_trip_from_b(self):
        half = (B_HI - B_LO) / 2
        mid = (B_HI + B_LO) / 2
        b = mid + 0.999 * half * np.linspace(-1, 1, 101)
        again = box_map(box_map_inverse(b, B_LO, B_HI), B_LO, B_HI)
        assert np.allclose(again, b, rtol=1e-9, atol=1e-15 * half)

    def test_boundary_has_no_preimage(self):
        with pytest.raises(ValueError):
            box_map_inverse(np.array([B_HI]), B_LO, B_HI)


class TestSumGain:
    def test_disconnected_surface_leaves_direct_path(self):
        rng = np.random.default_rng(9)
        n, m = 6, 4
        y_rt = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        adm = AdmittanceChannels(
            y_rt=y_rt,
            y_ri=np.zeros((n, m), dtype=complex),
            y_it=rng.standard_normal((n, m)) + 0j,
            y0=Y0,
        )
        topo = RisTopology(GROUP, m, 2)
        grid = FrequencyGrid(2.4e9, 100e6, n)
        problem = SumGainProblem(adm=adm, topology=topo, model=MODEL, omegas=grid.omegas)
        values = np.full(topo.variable_count, (B_LO + B_HI) / 2)
        assert sum_gain(problem, values) == pytest.approx(
            float(np.sum(np.abs(y_rt) ** 2)), rel=1e-14
        )

    def test_out_of_box_rejected(self):
        problem = make_problem(0, 4, 2)
        values = np.full(problem.topology.variable_count, 2 * B_HI)
        with pytest.raises(ConstraintViolation):
            sum_gain(problem, values)

    def test_channels_match_objective(self):
        problem = make_problem(1, 4, 2)
        rng = np.random.default_rng(1)
        values = interior_points(rng, 1, problem.topology.variable_count)[0]
        h = problem.channels(values)
        assert float(np.sum(np.abs(2 * Y0 * h) ** 2)) == pytest.approx(
            problem.objective(values), rel=1e-12
        )


class TestGradient:
    def step(self):
        return 1e-6 * (B_HI - B_LO)

    def fd_gradient(self, problem, values):
        grad = np.empty_like(values)
        for i in range(values.size):
            bumped = values.copy()
            bumped[i] = values[i] + self.step()
            hi = problem.objective(bumped)
            bumped[i] = values[i] - self.step()
            lo = problem.objective(bumped)
            grad[i] = (hi - lo) / (2 * self.step())
        return grad

    @pytest.mark.parametrize(
        "architecture,elements,group_size",
        [(GROUP, 4, 2), (GROUP, 6, 3), (FOREST, 6, 3), (GROUP, 4, 1)],
    )
    def test_analytic_matches_central_differences(
        self, architecture, elements, group_size
    ):
        problem = make_problem(7, elements, group_size, architecture)
        rng = np.random.default_rng(11)
        for values in interior_points(rng, 5, problem.topology.variable_count):
            f, grad = problem.objective_and_gradient(values)
            assert f == pytest.approx(problem.objective(values), rel=1e-12)
            fd = self.fd_gradient(problem, values)
            assert np.linalg.norm(grad - fd) <= 1e-4 * np.linalg.norm(fd)


class TestBfgsCore:
    def quadratic(self, center):
        def fun_and_grad(x):
            d = x - center
            return -float(d @ d), -2 * d

        return fun_and_grad

    def test_starts_at_stationary_point(self):
        center = np.array([0.3, -1.2, 4.0])
        x, f, gnorm, iters = _bfgs_ascent(self.quadratic(center), center, 500, 1e-8)
        assert iters == 0
        assert np.array_equal(x, center)

    def test_converges_on_quadratic(self):
        center = np.array([1.0, -2.0, 0.5, 3.0])
        x0 = np.zeros(4)
        x, f, gnorm, iters = _bfgs_ascent(self.quadratic(center), x0, 500, 1e-12)
        assert np.allclose(x, center, atol=1e-5)
        assert f == pytest.approx(0.0, abs=1e-9)
        assert 1 <= iters < 50


class TestContinuousSolver:
    def test_beats_dense_grid_scan_on_one_variable(self):
        problem = make_problem(21, 1, 1)
        grid = np.linspace(B_LO, B_HI, 4001)[1:-1]
        best_grid = max(problem.objective(np.array([b])) for b in grid)
        values, objective, iterations = solve_continuous(
            problem, ContinuousSolverConfig(restarts=8), seed=0
        )
        assert B_LO < values[0] < B_HI
        assert objective >= best_grid * (1 - 1e-4)
        assert objective == pytest.approx(problem.objective(values), rel=1e-12)

    def test_improves_on_midpoint_start(self):
        problem = make_problem(5, 4, 2)
        mid = np.full(problem.topology.variable_count, (B_LO + B_HI) / 2)
        values, objective, _ = solve_continuous(
            problem, ContinuousSolverConfig(), seed=0
        )
        assert objective >= problem.objective(mid)

    def test_restarts_never_hurt(self):
        problem = make_problem(6, 4, 2)
        _, single, _ = solve_continuous(problem, ContinuousSolverConfig(), seed=4)
        _, multi, _ = solve_continuous(
            problem, ContinuousSolverConfig(restarts=4), seed=4
        )
        assert multi >= single * (1 - 1e-12)

    def test_finite_difference_path_agrees(self):
        problem = make_problem(8, 2, 2, n=4)
        _, analytic, _ = solve_continuous(problem, ContinuousSolverConfig(), seed=0)
        _, fd, _ = solve_continuous(
            problem, ContinuousSolverConfig(), seed=0, analytic_gradient=False
        )
        assert fd == pytest.approx(analytic, rel=1e-4)

    def test_deterministic(self):
        problem = make_problem(13, 4, 2)
        a = solve_continuous(problem, ContinuousSolverConfig(restarts=3), seed=2)
        b = solve_continuous(problem, ContinuousSolverConfig(restarts=3), seed=2)
        assert np.array_equal(a[0], b[0])
        assert a[1] == b[1]


class TestGreedy:
    def exhaustive(self, problem, levels, block_size):
        best = -np.inf
        n_vars = problem.topology.variable_count
        for combo in itertools.product(levels, repeat=n_vars):
            best = max(best, problem.objective(np.array(combo)))
        return best

    def test_never_beats_exhaustive_and_is_blockwise_optimal(self):
        quant = QuantizedSet(1, B_LO, B_HI)
        cfg = GreedyConfig(block_size=1, quantization=quant)
        for seed in range(6):
            problem = make_problem(100 + seed, 2, 2, n=4)
            values, objective, sweeps = solve_discrete_greedy(problem, cfg, seed)
            assert objective == pytest.approx(problem.objective(values), rel=1e-12)
            best = self.exhaustive(problem, quant.levels, 1)
            assert objective <= best * (1 + 1e-12)
            assert sweeps <= cfg.max_sweeps
            for i in range(values.size):
                for level in quant.levels:
                    trial = values.copy()
                    trial[i] = level
                    assert problem.objective(trial) <= objective * (1 + 1e-12)

    def test_blocks_spanning_groups(self):
        quant = QuantizedSet(1, B_LO, B_HI)
        cfg = GreedyConfig(block_size=2, quantization=quant)
        problem = make_problem(42, 4, 1, n=4)
        values, objective, _ = solve_discrete_greedy(problem, cfg, seed=3)
        assert objective == pytest.approx(problem.objective(values), rel=1e-12)
        best = self.exhaustive(problem, quant.levels, 2)
        assert objective <= best * (1 + 1e-12)
        assert objective >= 0.8 * best

    def test_tie_keeps_incumbent(self):
        n, m = 4, 2
        rng = np.random.default_rng(2)
        adm = AdmittanceChannels(
            y_rt=rng.standard_normal(n) + 1j * rng.standard_normal(n),
            y_ri=np.zeros((n, m), dtype=complex),
            y_it=np.ones((n, m), dtype=complex),
            y0=Y0,
        )
        topo = RisTopology(GROUP, m, 1)
        grid = FrequencyGrid(2.4e9, 100e6, n)
        problem = SumGainProblem(adm=adm, topology=topo, model=MODEL, omegas=grid.omegas)
        quant = QuantizedSet(1, B_LO, B_HI)
        cfg = GreedyConfig(block_size=1, quantization=quant)
        values, _, sweeps = solve_discrete_greedy(problem, cfg, seed=12)
        start = quant.levels[
            np.random.default_rng(12).integers(2, size=topo.variable_count)
        ]
        assert np.array_equal(values, start)
        assert sweeps == 1

    def test_enumeration_ceiling(self):
        problem = make_problem(0, 4, 4)
        quant = QuantizedSet(2, B_LO, B_HI)
        cfg = GreedyConfig(block_size=10, quantization=quant, enumeration_ceiling=512)
        with pytest.raises(EnumerationCeilingError):
            solve_discrete_greedy(problem, cfg, seed=0)

    def test_block_size_must_divide(self):
        problem = make_problem(0, 2, 2)
        quant = QuantizedSet(1, B_LO, B_HI)
        with pytest.raises(ValueError):
            solve_discrete_greedy(
                problem, GreedyConfig(block_size=2, quantization=quant), seed=0
            )

    def test_deterministic(self):
        problem = make_problem(77, 4, 2, n=4)
        quant = QuantizedSet(2, B_LO, B_HI)
        cfg = GreedyConfig(block_size=3, quantization=quant)
        a = solve_discrete_greedy(problem, cfg, seed=5)
        b = solve_discrete_greedy(problem, cfg, seed=5)
        assert np.array_equal(a[0], b[0])
        assert a[1] == b[1]


class TestWaterFilling:
    def test_two_carrier_hand_solution(self):
        h = np.array([1.0, 0.5])
        alloc = water_filling(h, power=1.0, sigma2=1.0)
        assert alloc.p == pytest.approx([1.0, 0.0], abs=1e-9)
        assert alloc.water_level == pytest.approx(2.0, rel=1e-9)
        assert average_rate(h, alloc) == pytest.approx(0.5, rel=1e-9)

    def test_budget_and_kkt_on_random_channels(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
            h *= 10.0 ** rng.uniform(-3, 0, 64)
            power = 10.0 ** rng.uniform(-2, 2)
            sigma2 = 10.0 ** rng.uniform(-6, -2)
            alloc = water_filling(h, power, sigma2)
            assert np.all(alloc.p >= 0)
            assert np.sum(alloc.p) == pytest.approx(power, rel=1e-9)
            inv = sigma2 / np.abs(h) ** 2
            mu = alloc.water_level
            active = alloc.p > 0
            assert np.allclose(alloc.p[active], mu - inv[active], rtol=1e-6)
            assert np.all(mu <= inv[~active] * (1 + 1e-9))

    def test_beats_uniform_allocation(self):
        rng = np.random.default_rng(15)
        h = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        power, sigma2 = 3.0, 0.1
        alloc = water_filling(h, power, sigma2)
        uniform_rate = float(
            np.mean(np.log2(1 + (power / 32) * np.abs(h) ** 2 / sigma2))
        )
        assert average_rate(h, alloc) >= uniform_rate - 1e-12

    def test_zero_channels_rejected(self):
        with pytest.raises(AllZeroChannelError):
            water_filling(np.zeros(4, dtype=complex), 1.0, 1.0)

    def test_dead_subcarrier_gets_nothing(self):
        h = np.array([1.0, 0.0, 2.0])
        alloc = water_filling(h, 5.0, 0.5)
        assert alloc.p[1] == 0.0
        assert np.sum(alloc.p) == pytest.approx(5.0, rel=1e-9)

    def test_zero_budget(self):
        h = np.array([1.0, 2.0])
        alloc = water_filling(h, 0.0, 1.0)
        assert np.array_equal(alloc.p, np.zeros(2))
        assert average_rate(h, alloc) == 0.0


class TestJensenBound:
    def test_bounds_uniform_power_rate(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            power, sigma2 = 2.0, 0.3
            uniform_rate = float(
                np.mean(np.log2(1 + (power / 16) * np.abs(h) ** 2 / sigma2))
            )
            assert jensen_upper_bound(h, power, sigma2) >= uniform_rate - 1e-12

    def test_tight_for_flat_channel(self):
        h = np.full(8, 0.7 + 0.1j)
        rate = float(np.mean(np.log2(1 + (4.0 / 8) * np.abs(h) ** 2 / 0.2)))
        assert jensen_upper_bound(h, 4.0, 0.2) == pytest.approx(rate, rel=1e-12)


class TestPipeline:
    def test_two_stage_consistency(self):
        problem = make_problem(50, 4, 2)
        result = two_stage_pipeline(problem, power=1.0, sigma2=1e-11, seed=0)
        assert result.mode == "continuous"
        assert np.array_equal(result.channels, problem.channels(result.values))
        assert result.sum_gain == pytest.approx(
            problem.objective(result.values), rel=1e-12
        )
        assert result.rate == pytest.approx(
            average_rate(result.channels, result.allocation), rel=1e-15
        )

    def test_discrete_mode(self):
        problem = make_problem(51, 4, 2, n=4)
        cfg = GreedyConfig(block_size=1, quantization=QuantizedSet(1, B_LO, B_HI))
        result = two_stage_pipeline(
            problem, power=1.0, sigma2=1e-11, seed=3, mode="discrete", greedy_config=cfg
        )
        levels = cfg.quantization.levels
        assert np.all(np.isin(result.values, levels))

    def test_unknown_mode(self):
        problem = make_problem(0, 2, 2, n=4)
        with pytest.raises(ValueError):
            two_stage_pipeline(problem, 1.0, 1e-11, 0, mode="annealing")

    def test_deterministic(self):
        problem = make_problem(52, 4, 2)
        a = two_stage_pipeline(problem, 1.0, 1e-11, seed=9)
        b = two_stage_pipeline(problem, 1.0, 1e-11, seed=9)
        assert np.array_equal(a.values, b.values)
        assert a.rate == b.rate


class TestFrequencyIndependentBenchmark:
    def test_reduces_to_wideband_run_under_flat_model(self):
        problem = make_problem(60, 4, 2, model=flat_model(MODEL))
        fi = solve_frequency_independent(problem, 1.0, 1e-11, seed=1)
        direct = two_stage_pipeline(problem, 1.0, 1e-11, seed=1)
        assert fi.rate == pytest.approx(direct.rate, rel=1e-9)
        assert np.allclose(fi.values, direct.values, rtol=1e-6, atol=1e-12)

    def test_flat_matrix_structure(self):
        problem = make_problem(61, 4, 2)
        fi = solve_frequency_independent(problem, 1.0, 1e-11, seed=2)
        y = fi.y_flat
        assert np.allclose(y, y.T)
        assert np.allclose(y.real, 0.0)
        assert np.allclose(y[:2, 2:], 0.0)
        assert np.all((fi.values > B_LO) & (fi.values < B_HI))
        assert fi.rate > 0

    def test_channels_come_from_true_model(self):
        problem = make_problem(62, 4, 2)
        fi = solve_frequency_independent(problem, 1.0, 1e-11, seed=3)
        assert np.array_equal(fi.channels, problem.channels(fi.values))
