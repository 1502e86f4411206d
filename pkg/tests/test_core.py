import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import corridor, dataset_from_episodes
from datascope.core import (
    Dataset,
    FiniteMDP,
    PolicyTable,
    Trajectory,
    Transition,
    average_trajectory_return,
    evaluate_policy_exact,
    finite_horizon_q,
    occupancy_empirical,
    occupancy_exact,
    rollout,
    sample_transitions,
)
from datascope.envs import make_env, random_mdp, random_policy


def single_state(gamma=0.5, horizon=200):
    p = np.zeros((1, 1, 1, 1))
    p[0, 0, 0, 0] = 1.0
    return FiniteMDP(np.array([1.0]), p, np.array([1.0]), np.array([False]),
                     gamma=gamma, horizon=horizon)


class TestFiniteMDP:
    def test_rejects_unnormalized_rows(self):
        mdp = corridor()
        bad = mdp.dynamics.copy()
        bad[0, 0, 1, 0] = 0.5
        with pytest.raises(ValueError):
            mdp.with_(dynamics=bad)

    def test_terminal_must_self_loop_with_zero_reward(self):
        mdp = corridor()
        bad = mdp.dynamics.copy()
        bad[3, 0, 3] = [0.0, 1.0]
        with pytest.raises(ValueError):
            mdp.with_(dynamics=bad)

    def test_gamma_must_be_below_one(self):
        with pytest.raises(ValueError):
            corridor(gamma=1.0)

    def test_arrays_are_read_only(self):
        mdp = corridor()
        with pytest.raises(ValueError):
            mdp.dynamics[0, 0, 0, 0] = 1.0

    def test_equality_and_with(self):
        a = make_env("grid5")
        assert a == make_env("grid5")
        assert a.with_(gamma=0.5) != a


class TestEvaluate:
    def test_geometric_series(self):
        assert evaluate_policy_exact(single_state(), PolicyTable.uniform(1, 1)) == pytest.approx(2.0, abs=1e-12)

    def test_zero_rewards(self, rng):
        mdp = random_mdp(rng, 5, 3, 1)
        assert np.all(mdp.rewards == 0)
        assert evaluate_policy_exact(mdp, random_policy(rng, 5, 3)) == 0.0

    def test_corridor_return_matches_enumeration(self):
        mdp = corridor(3, gamma=0.9)
        pi = PolicyTable.uniform(4, 1)
        # single trajectory: rewards 0, 0, 1
        assert evaluate_policy_exact(mdp, pi) == pytest.approx(0.81, abs=1e-12)
        ds = rollout(mdp, pi, 3, rng=0)
        assert average_trajectory_return(ds, 0.9) == pytest.approx(0.81, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_policy_exact(make_env("grid5"), PolicyTable.uniform(3, 4))

    def test_frozen_grid5_uniform(self):
        mdp = make_env("grid5")
        pi = PolicyTable.uniform(mdp.n_states, mdp.n_actions)
        assert evaluate_policy_exact(mdp, pi, 1.0) == pytest.approx(-15.04158655694334, abs=1e-10)
        assert evaluate_policy_exact(mdp, pi) == pytest.approx(-3.715427204321931, abs=1e-10)

    def test_monte_carlo_within_three_standard_errors(self):
        mdp = make_env("grid5")
        pi = PolicyTable.uniform(mdp.n_states, mdp.n_actions)
        ds = rollout(mdp, pi, 100_000, rng=7)
        starts, stops = ds.episode_bounds()
        seg = np.repeat(np.arange(starts.size), stops - starts)
        g = np.bincount(seg, weights=ds.r)
        se = g.std(ddof=1) / np.sqrt(g.size)
        assert abs(g.mean() - evaluate_policy_exact(mdp, pi, 1.0)) <= 3 * se

    def test_optimal_chain(self):
        mdp = make_env("chain8")
        best = PolicyTable.greedy(finite_horizon_q(mdp))
        assert evaluate_policy_exact(mdp, best, 1.0) == pytest.approx(1.0)
        assert evaluate_policy_exact(mdp, PolicyTable.uniform(8, 2), 1.0) == pytest.approx(
            0.3779973182827234, abs=1e-12)


class TestOccupancy:
    def test_single_state_uniform(self):
        p = np.zeros((1, 2, 1, 1))
        p[0, :, 0, 0] = 1.0
        mdp = FiniteMDP(np.array([0.0]), p, np.ones(1), np.zeros(1, bool), horizon=5)
        np.testing.assert_allclose(occupancy_exact(mdp, PolicyTable.uniform(1, 2)).rho, [[0.5, 0.5]])

    def test_two_step_corridor(self):
        rho = occupancy_exact(corridor(2), PolicyTable.uniform(3, 1)).rho
        np.testing.assert_allclose(rho[:, 0], [0.5, 0.5, 0.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_normalized_and_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, 6, 3, 2, n_terminal=int(rng.integers(0, 2)))
        rho = occupancy_exact(mdp, random_policy(rng, 6, 3)).rho
        assert rho.min() >= 0
        assert abs(rho.sum() - 1) <= 1e-10

    @pytest.mark.slow
    def test_grid5_matches_million_episode_monte_carlo(self):
        mdp = make_env("grid5")
        pi = PolicyTable.uniform(mdp.n_states, mdp.n_actions)
        counts = np.zeros((mdp.n_states, mdp.n_actions))
        rng = np.random.default_rng(2024)
        for _ in range(10):  # 10 chunks of 1e5 episodes
            ds = rollout(mdp, pi, 100_000, rng)
            counts += ds.sa_counts(mdp.n_states, mdp.n_actions)
        emp = counts / counts.sum()
        tv = 0.5 * np.abs(emp - occupancy_exact(mdp, pi).rho).sum()
        assert tv <= 1e-3

    def test_empirical_occupancy(self):
        ds = dataset_from_episodes([[(0, 0, 0.0, 1, False), (1, 1, 0.0, 0, False)]],
                                   n_states=2, n_actions=2)
        np.testing.assert_allclose(occupancy_empirical(ds).rho, [[0.5, 0], [0, 0.5]])


class TestAverageReturn:
    def test_single_trajectory(self):
        ds = dataset_from_episodes([[(0, 0, 1.0, 1, False), (1, 0, 1.0, 2, False),
                                     (2, 0, 1.0, 3, True)]])
        assert average_trajectory_return(ds, 1.0) == 3.0

    def test_mean_of_two(self):
        ds = dataset_from_episodes([[(0, 0, 2.0, 1, True)], [(0, 0, 1.0, 1, False),
                                                             (1, 0, 3.0, 2, True)]])
        assert average_trajectory_return(ds, 1.0) == 3.0

    def test_matches_double_loop(self, rng):
        mdp = make_env("grid5-slip")
        ds = sample_transitions(mdp, PolicyTable.uniform(mdp.n_states, 4), 3000, rng)
        for gamma in (1.0, 0.9):
            per = [sum(gamma ** t * tr.r for t, tr in enumerate(traj.transitions))
                   for traj in ds.trajectories()]
            assert average_trajectory_return(ds, gamma) == pytest.approx(np.mean(per), abs=1e-12)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            average_trajectory_return(Dataset.empty(), 1.0)


class TestDataset:
    def test_manifest_count_must_match(self):
        with pytest.raises(ValueError):
            Dataset.from_arrays([0], [0], [0], [0], [0.0], [1], [False], n=2)

    def test_stitching_enforced(self):
        with pytest.raises(ValueError):
            dataset_from_episodes([[(0, 0, 0.0, 1, False), (2, 0, 0.0, 3, False)]])

    def test_only_last_step_terminal(self):
        with pytest.raises(ValueError):
            dataset_from_episodes([[(0, 0, 0.0, 1, True), (1, 0, 0.0, 2, False)]])

    def test_trajectory_checks(self):
        with pytest.raises(ValueError):
            Trajectory((Transition(0, 0, 0.0, 1, False), Transition(3, 0, 0.0, 1, False)), 0)

    def test_round_trip_through_trajectories(self, rng):
        mdp = make_env("lavagap5")
        ds = sample_transitions(mdp, PolicyTable.uniform(mdp.n_states, 4), 500, rng)
        again = Dataset.from_trajectories(list(ds.trajectories()), **ds.manifest.to_dict())
        assert again == ds

    def test_concatenate_renumbers(self):
        a = dataset_from_episodes([[(0, 0, 0.0, 1, True)]])
        b = dataset_from_episodes([[(1, 0, 0.0, 2, True)]])
        c = Dataset.concatenate([a, b])
        assert c.ep.tolist() == [0, 1]

    def test_sample_transitions_exact_count(self, rng):
        mdp = make_env("chain8")
        ds = sample_transitions(mdp, PolicyTable.uniform(8, 2), 1234, rng)
        assert len(ds) == 1234 == ds.manifest.n
