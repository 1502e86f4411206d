import json

import numpy as np
import pytest

from conftest import dataset_from_episodes
from datascope.core import PolicyTable, sample_transitions
from datascope.envs import make_env, transform
from datascope.shift import IncomparableError, compare, estimate_factors

N = 20_000


def sample(mdp, probs, seed):
    return sample_transitions(mdp, PolicyTable(probs), N, np.random.default_rng(seed))


@pytest.fixture(scope="module")
def slip():
    return make_env("grid5-slip")


def uniform(mdp):
    return np.full((mdp.n_states, mdp.n_actions), 1 / mdp.n_actions)


def test_factors_recompose_joint(slip):
    f = estimate_factors(sample(slip, uniform(slip), 0))
    np.testing.assert_allclose(f.recompose(), f.empirical_joint(), atol=1e-12)


def test_same_process_is_none(slip):
    a = estimate_factors(sample(slip, uniform(slip), 0))
    b = estimate_factors(sample(slip, uniform(slip), 1))
    rep = compare(a, b)
    assert rep.label == "none"
    assert max(rep.tv_policy, rep.tv_state_dyn, rep.tv_occupancy) < 0.05


def test_policy_change(slip):
    biased = np.tile([0.7, 0.1, 0.1, 0.1], (slip.n_states, 1))
    rep = compare(estimate_factors(sample(slip, uniform(slip), 0)),
                  estimate_factors(sample(slip, biased, 1)))
    assert rep.flags["policy"] and not rep.flags["state_dyn"] and not rep.flags["reward"]
    assert rep.tv_policy == pytest.approx(0.45, abs=0.03)


def test_dynamics_change(slip):
    noisy, _ = transform(slip, "dynamics_noise", eps=0.5)
    rep = compare(estimate_factors(sample(slip, uniform(slip), 0)),
                  estimate_factors(sample(noisy, uniform(noisy), 1)))
    assert rep.flags["state_dyn"] and not rep.flags["policy"] and not rep.flags["reward"]


def test_reward_change_is_flagged(slip):
    scaled, _ = transform(slip, "reward_scale", c=2.0)
    rep = compare(estimate_factors(sample(slip, uniform(slip), 0)),
                  estimate_factors(sample(scaled, uniform(scaled), 0)))
    # identical samples up to the reward relabelling
    assert rep.tv_policy == 0.0 and rep.tv_state_dyn == 0.0
    assert rep.flags["reward"] and rep.label == "reward-dynamics"


def test_disjoint_support_raises():
    a = dataset_from_episodes([[(0, 0, 0.0, 1, True)]], n_states=4, n_actions=2)
    b = dataset_from_episodes([[(2, 1, 0.0, 3, True)]], n_states=4, n_actions=2)
    with pytest.raises(IncomparableError):
        compare(estimate_factors(a), estimate_factors(b))


def test_no_shared_triples_gives_nan():
    a = dataset_from_episodes([[(0, 0, 0.0, 1, True)]], n_states=4, n_actions=2)
    b = dataset_from_episodes([[(0, 0, 0.0, 2, True)]], n_states=4, n_actions=2)
    rep = compare(estimate_factors(a), estimate_factors(b))
    assert np.isnan(rep.tv_reward) and not rep.flags["reward"]
    assert rep.tv_state_dyn == 1.0
    assert json.loads(rep.to_json())["label"] == rep.label == "state-dynamics"


def test_bad_threshold(slip):
    f = estimate_factors(sample(slip, uniform(slip), 0))
    with pytest.raises(ValueError):
        compare(f, f, threshold=2.0)
