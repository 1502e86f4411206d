import numpy as np
import pytest

from datascope.core import Dataset, FiniteMDP


def corridor(n_live=3, gamma=0.9):
    """Deterministic corridor: ``n_live`` nonterminal states then a rewarding goal.

    Action 0 moves right; entering the goal pays 1.
    """
    S = n_live + 1
    rewards = np.array([0.0, 1.0])
    p = np.zeros((S, 1, S, 2))
    for s in range(n_live):
        p[s, 0, s + 1, int(s + 1 == n_live)] = 1.0
    p[n_live, 0, n_live, 0] = 1.0
    init = np.eye(S)[0]
    terminal = np.arange(S) == n_live
    return FiniteMDP(rewards, p, init, terminal, gamma=gamma, horizon=10, name="corridor")


def dataset_from_episodes(episodes, **manifest):
    """Build a dataset from lists of (s, a, r, sn, d) tuples, one list per episode."""
    rows = [(ep, t, *tr) for ep, steps in enumerate(episodes) for t, tr in enumerate(steps)]
    cols = list(zip(*rows))
    return Dataset.from_arrays(*cols, **manifest)


def fixture_dataset(unique_pairs, avg_return, n_traj=100, **manifest):
    """Dataset with exactly ``unique_pairs`` distinct (s, a) and the given mean return.

    States run 0..unique_pairs-1 with action 0, cut into ``n_traj`` consecutive
    trajectories; each trajectory's first step carries the whole return.
    """
    n = unique_pairs
    s = np.arange(n)
    bounds = np.linspace(0, n, n_traj + 1).astype(int)
    ep = np.repeat(np.arange(n_traj), np.diff(bounds))
    t = s - bounds[ep]
    r = np.where(t == 0, avg_return, 0.0)
    return Dataset.from_arrays(ep, t, s, np.zeros(n, dtype=int), r, s + 1,
                               np.zeros(n, dtype=bool), n_states=n + 1, n_actions=1, **manifest)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
