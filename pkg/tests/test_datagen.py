import numpy as np
import pytest

from datascope.core import PolicyTable, evaluate_policy_exact, finite_horizon_q
from datascope.datagen import GenerationScheme, OnlineTrainerConfig, generate, train_online
from datascope.envs import make_env
from datascope.io import dumps


@pytest.fixture(scope="module")
def grid():
    mdp = make_env("grid5")
    return mdp, train_online(mdp, OnlineTrainerConfig(steps=5000, seed=0))


def test_online_reaches_optimal_return(grid):
    mdp, res = grid
    best = evaluate_policy_exact(mdp, PolicyTable.greedy(finite_horizon_q(mdp)), 1.0)
    assert res.best_eval_return == pytest.approx(best)
    assert evaluate_policy_exact(mdp, res.expert, 1.0) == pytest.approx(best)


def test_replay_log_is_complete(grid):
    mdp, res = grid
    log = res.replay_log
    assert len(log) == 5000
    assert log.manifest.scheme == "replay"
    assert len(res.eval_history) == 5000 // 200


def test_online_is_deterministic():
    mdp = make_env("chain8")
    a = train_online(mdp, OnlineTrainerConfig(steps=1500, seed=3))
    b = train_online(mdp, OnlineTrainerConfig(steps=1500, seed=3))
    assert a.replay_log == b.replay_log and a.eval_history == b.eval_history


def test_epsilon_schedule():
    cfg = OnlineTrainerConfig()
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(cfg.eps_decay_steps) == pytest.approx(cfg.eps_final)
    assert cfg.epsilon(10 ** 6) == pytest.approx(cfg.eps_final)
    with pytest.raises(ValueError):
        OnlineTrainerConfig(steps=10)


@pytest.mark.parametrize("kind", ["random", "expert", "mixed", "noisy", "replay"])
def test_exact_sizes_and_manifest(grid, kind):
    mdp, res = grid
    ds = generate(mdp, GenerationScheme(kind, 1234), res.expert, res.replay_log, seed=5)
    assert len(ds) == 1234
    m = ds.manifest
    assert (m.env, m.scheme, m.seed, m.n) == ("grid5", kind, 5, 1234)


def test_noisy_zero_equals_expert(grid):
    mdp, res = grid
    a = generate(mdp, GenerationScheme("noisy", 2000, epsilon=0.0), res.expert, seed=1)
    b = generate(mdp, GenerationScheme("expert", 2000), res.expert, seed=1)
    assert dumps(a) == dumps(b)


def test_mixed_fraction(grid):
    mdp, res = grid
    ds = generate(mdp, GenerationScheme("mixed", 1000, mix_fraction=0.0), res.expert, seed=2)
    assert dumps(ds) == dumps(generate(mdp, GenerationScheme("expert", 1000), res.expert, seed=2))
    full = generate(mdp, GenerationScheme("mixed", 1000, mix_fraction=1.0), res.expert, seed=2)
    assert dumps(full) == dumps(generate(mdp, GenerationScheme("random", 1000), seed=2))


def test_replay_is_log_prefix(grid):
    mdp, res = grid
    ds = generate(mdp, GenerationScheme("replay", 300), replay_log=res.replay_log)
    np.testing.assert_array_equal(ds.s, res.replay_log.s[:300])


def test_missing_inputs(grid):
    mdp, res = grid
    with pytest.raises(ValueError):
        generate(mdp, GenerationScheme("expert", 10))
    with pytest.raises(ValueError):
        generate(mdp, GenerationScheme("replay", 10))
    with pytest.raises(ValueError):
        generate(mdp, GenerationScheme("replay", 10_000), replay_log=res.replay_log)
    with pytest.raises(ValueError):
        GenerationScheme("uniform")
