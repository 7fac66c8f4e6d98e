import numpy as np
import pytest

from safecert import (
    SafeRegion,
    SynthSystemParams,
    TrajectorySet,
    default_safe_region,
    eval_grid,
    extract_onestep_pairs,
    gen_dataset,
    is_safe,
    mc_ground_truth,
    simulate,
    simulate_batch,
    trajectory_safe,
)
from safecert.benchmark import SATURATION, _drift
from safecert.rng import stream


def recover_noise(params: SynthSystemParams, states: np.ndarray) -> np.ndarray:
    """Invert the Euler step to read the latent disturbance off a batch
    of trajectories: z_t = x_{t+1} - x_t - h * f(x_t)."""
    x, x_next = states[:, :-1], states[:, 1:]
    return x_next - x - params.h * _drift(x)


class TestRegion:
    def test_default_geometry(self, region):
        assert region.dim == 2
        lo, hi = region.box_array()
        assert np.array_equal(lo, [-3.0, -2.0])
        assert np.array_equal(hi, [2.5, 1.0])
        assert len(region.obstacles) == 3

    def test_box_interior_and_boundary_are_safe(self, region):
        assert is_safe(region, np.array([-2.0, 0.5]))
        assert is_safe(region, np.array([-3.0, -2.0]))
        assert is_safe(region, np.array([2.5, 1.0]))

    def test_outside_box_unsafe(self, region):
        assert not is_safe(region, np.array([2.51, 0.0]))
        assert not is_safe(region, np.array([0.0, -2.01]))

    def test_obstacle_boundary_unsafe(self, region):
        # obstacles are closed boxes, so their edges count as collisions
        assert not is_safe(region, np.array([0.4, 0.2]))
        assert not is_safe(region, np.array([0.6, 0.6]))
        assert not is_safe(region, np.array([-1.5, -1.5]))
        assert is_safe(region, np.array([0.39999, 0.2]))
        assert is_safe(region, np.array([0.5, 0.19999]))

    def test_batch_shape(self, region):
        pts = np.array([[0.0, 0.0], [0.5, 0.3], [9.0, 9.0]])
        flags = is_safe(region, pts)
        assert flags.tolist() == [True, False, False]

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            SafeRegion(low=(1.0,), high=(0.0,), obstacles=())


class TestTrajectorySafety:
    def test_initial_state_counts(self, region):
        traj = np.array([[0.5, 0.3], [-2.0, 0.0]])
        assert not trajectory_safe(region, traj)

    def test_all_steps_safe(self, region):
        traj = np.array([[-2.0, 0.0], [-1.9, 0.1], [-1.8, 0.0]])
        assert trajectory_safe(region, traj)

    def test_batch(self, region):
        trajs = np.array(
            [
                [[-2.0, 0.0], [-1.9, 0.1]],
                [[-2.0, 0.0], [0.5, 0.3]],
            ]
        )
        assert trajectory_safe(region, trajs).tolist() == [True, False]


class TestSimulation:
    def test_deterministic_given_seed(self, markov_params, region):
        a = gen_dataset(markov_params, region, n=7, T=4, seed=42)
        b = gen_dataset(markov_params, region, n=7, T=4, seed=42)
        assert np.array_equal(a.states, b.states)

    def test_trajectory_streams_independent_of_batch_size(self, markov_params, region):
        big = gen_dataset(markov_params, region, n=9, T=4, seed=42)
        small = gen_dataset(markov_params, region, n=3, T=4, seed=42)
        assert np.array_equal(big.states[:3], small.states)

    def test_purpose_separates_noise(self, markov_params, region):
        train = gen_dataset(markov_params, region, n=4, T=4, seed=42)
        cal = gen_dataset(markov_params, region, n=4, T=4, seed=42, purpose="cal-traj")
        assert not np.allclose(train.states, cal.states)

    def test_initial_disturbance_at_stationary_variance(self, region):
        params = SynthSystemParams(alpha=0.8)
        ts = gen_dataset(params, region, n=20000, T=1, seed=5)
        var0 = recover_noise(params, ts.states)[:, 0].var(axis=0)
        target = params.sigma**2
        assert np.all(np.abs(var0 - target) < 0.05 * target)

    def test_alpha_zero_disturbance_stationary_at_every_step(self, markov_params, region):
        """Without memory there is no state feedback into the disturbance,
        so its variance stays at sigma^2 along the whole horizon."""
        ts = gen_dataset(markov_params, region, n=20000, T=5, seed=5)
        z = recover_noise(markov_params, ts.states)
        target = markov_params.sigma**2
        ratios = z.var(axis=0) / target
        assert np.all(np.abs(ratios - 1.0) < 0.06)

    def test_memory_inflates_disturbance_over_time(self, region):
        """With alpha > 0 the tanh coupling feeds the state back into the
        disturbance, pumping its variance above sigma^2 as t grows."""
        params = SynthSystemParams(alpha=0.8)
        ts = gen_dataset(params, region, n=6000, T=5, seed=5)
        z = recover_noise(params, ts.states)
        ratios = z.var(axis=0).mean(axis=1) / params.sigma**2
        assert ratios[-1] > ratios[0] + 0.5

    def test_memoryless_noise_at_alpha_zero(self, markov_params, region):
        ts = gen_dataset(markov_params, region, n=6000, T=3, seed=6)
        z = recover_noise(markov_params, ts.states)
        r = np.corrcoef(z[:, 0, 0], z[:, 1, 0])[0, 1]
        assert abs(r) < 0.05

    def test_persistent_noise_at_high_alpha(self, region):
        params = SynthSystemParams(alpha=0.9)
        ts = gen_dataset(params, region, n=6000, T=3, seed=6)
        z = recover_noise(params, ts.states)
        r = np.corrcoef(z[:, 0, 0], z[:, 1, 0])[0, 1]
        assert r > 0.5

    def test_states_saturate_instead_of_overflowing(self, markov_params):
        x0 = np.array([8e5, -8e5])
        traj = simulate(markov_params, x0, 400, stream(0, "traj", 0))
        assert np.all(np.isfinite(traj))
        assert np.max(np.abs(traj)) <= SATURATION

    def test_simulate_batch_matches_single(self, markov_params):
        x0s = np.array([[0.1, 0.2], [-1.0, 0.5]])
        rng_a = stream(1, "x")
        batch = simulate_batch(markov_params, x0s, 3, rng_a)
        assert batch.shape == (2, 4, 2)
        assert np.array_equal(batch[:, 0], x0s)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            SynthSystemParams(alpha=1.0)
        with pytest.raises(ValueError):
            SynthSystemParams(alpha=-0.1)
        with pytest.raises(ValueError):
            SynthSystemParams(alpha=0.5, sigma=0.0)


class TestPairs:
    def test_iid_pairs_shapes_and_support(self, markov_params, region):
        pairs = extract_onestep_pairs(None, 50, "iid", 3, params=markov_params, region=region)
        assert pairs.x.shape == (50, 2)
        assert pairs.x_next.shape == (50, 2)
        lo, hi = region.box_array()
        assert np.all(pairs.x >= lo) and np.all(pairs.x <= hi)

    def test_dependent_pairs_slice_trajectories(self, small_trajs):
        n, steps, d = small_trajs.states.shape
        pairs = extract_onestep_pairs(small_trajs, n * (steps - 1), "dependent", 3)
        assert np.array_equal(pairs.x, small_trajs.states[:, :-1].reshape(-1, d))
        assert np.array_equal(pairs.x_next, small_trajs.states[:, 1:].reshape(-1, d))

    def test_dependent_subsample_is_a_sorted_subset(self, small_trajs):
        full = extract_onestep_pairs(small_trajs, 400, "dependent", 3)
        sub = extract_onestep_pairs(small_trajs, 60, "dependent", 3)
        full_rows = {tuple(r) for r in np.hstack([full.x, full.x_next])}
        sub_rows = [tuple(r) for r in np.hstack([sub.x, sub.x_next])]
        assert len(sub_rows) == 60
        assert all(r in full_rows for r in sub_rows)

    def test_dependent_overdraw_rejected(self, small_trajs):
        with pytest.raises(ValueError):
            extract_onestep_pairs(small_trajs, 10_000, "dependent", 3)

    def test_unknown_mode_rejected(self, small_trajs):
        with pytest.raises(ValueError):
            extract_onestep_pairs(small_trajs, 10, "bootstrap", 3)


class TestGroundTruth:
    def test_grid_layout(self, region):
        grid = eval_grid(region, (4, 5))
        assert grid.shape == (20, 2)
        lo, hi = region.box_array()
        assert grid[0, 0] == pytest.approx(lo[0] + (hi[0] - lo[0]) / 8)
        assert grid[0, 1] == pytest.approx(lo[1] + (hi[1] - lo[1]) / 10)

    def test_probabilities_and_unsafe_starts(self, markov_params, region):
        grid = np.array([[-2.0, 0.0], [0.5, 0.3]])
        gt = mc_ground_truth(markov_params, region, grid, 5, 64, seed=2)
        assert 0.0 <= gt.p_mc[0] <= 1.0
        assert gt.p_mc[1] == 0.0
        again = mc_ground_truth(markov_params, region, grid, 5, 64, seed=2)
        assert np.array_equal(gt.p_mc, again.p_mc)

    def test_longer_horizon_never_safer(self, markov_params, region):
        """Rollout prefixes are shared between horizons at a fixed seed, so
        the per-point estimate is monotone in T."""
        grid = eval_grid(region, (5, 5))
        short = mc_ground_truth(markov_params, region, grid, 3, 80, seed=7)
        long = mc_ground_truth(markov_params, region, grid, 9, 80, seed=7)
        assert np.all(long.p_mc <= short.p_mc + 1e-12)


class TestCsvRoundTrips:
    def test_trajectory_set(self, markov_params, small_trajs):
        text = small_trajs.to_csv("# config=abc seed=11")
        back = TrajectorySet.from_csv(text, params=markov_params, seed=11)
        assert np.array_equal(back.states, small_trajs.states)

    def test_onestep_pairs(self, small_pairs):
        from safecert import OneStepPairs

        text = small_pairs.to_csv()
        back = OneStepPairs.from_csv(text, params=small_pairs.params, seed=11)
        assert np.array_equal(back.x, small_pairs.x)
        assert np.array_equal(back.x_next, small_pairs.x_next)

    def test_ground_truth(self, markov_params, region):
        grid = eval_grid(region, (3, 3))
        gt = mc_ground_truth(markov_params, region, grid, 3, 16, seed=4)
        from safecert import GroundTruthGrid

        back = GroundTruthGrid.from_csv(gt.to_csv(), n_mc=16, seed=4)
        assert np.array_equal(back.grid, gt.grid)
        assert np.array_equal(back.p_mc, gt.p_mc)
