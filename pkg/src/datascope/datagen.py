"""Online tabular Q-learning and the five dataset-generation schemes.

``train_online`` plays an epsilon-greedy Q-learning agent in the environment
and logs every transition it sees; that log is the *replay* dataset. The
final greedy policy is the *expert*. :func:`generate` then samples datasets
with the random, expert, mixed, noisy or replay scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_rng, check_unit_interval
from .core import (
    Dataset,
    FiniteMDP,
    PolicyTable,
    average_trajectory_return,
    rollout,
    sample_transitions,
)

SCHEMES = ("random", "expert", "mixed", "noisy", "replay")
MIN_ONLINE_STEPS = 5_000  # shorter runs leave the grid experts suboptimal


@dataclass(frozen=True)
class OnlineTrainerConfig:
    """Hyperparameters of the online Q-learning run.

    ``gamma=None`` uses the MDP's discount. ``seed_steps`` uniformly random
    steps are played (and logged) before the epsilon schedule starts.
    """

    steps: int = 20_000
    alpha: float = 0.1
    gamma: float | None = None
    eps_initial: float = 1.0
    eps_final: float = 0.01
    eps_decay_steps: int = 1_000
    eval_every: int = 200
    eval_episodes: int = 10
    seed_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.steps, "steps")
        check_positive_int(self.eval_every, "eval_every")
        check_positive_int(self.eval_episodes, "eval_episodes")
        check_positive_int(self.seed_steps, "seed_steps", minimum=0)
        check_positive_int(self.eps_decay_steps, "eps_decay_steps", minimum=0)
        check_unit_interval(self.eps_initial, "eps_initial")
        check_unit_interval(self.eps_final, "eps_final")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.eps_initial < self.eps_final:
            raise ValueError("eps_initial must be >= eps_final")
        if self.steps < self.eps_decay_steps:
            raise ValueError("steps must be >= eps_decay_steps")

    def epsilon(self, step):
        if self.eps_decay_steps == 0:
            return self.eps_final
        frac = min(1.0, step / self.eps_decay_steps)
        return self.eps_initial + frac * (self.eps_final - self.eps_initial)


@dataclass(frozen=True)
class OnlineResult:
    expert: PolicyTable
    replay_log: Dataset
    eval_history: list = field(default_factory=list)  # (step, mean undiscounted return)
    q: np.ndarray | None = None

    @property
    def best_eval_return(self):
        return max(r for _, r in self.eval_history) if self.eval_history else float("nan")

    def __iter__(self):
        # allows ``expert, log, history = train_online(...)``
        return iter((self.expert, self.replay_log, self.eval_history))


def train_online(mdp: FiniteMDP, cfg: OnlineTrainerConfig = OnlineTrainerConfig()) -> OnlineResult:
    """Epsilon-greedy tabular Q-learning; returns expert, replay log and eval history."""
    rng = np.random.default_rng(cfg.seed)
    eval_rng = np.random.default_rng([cfg.seed, 1])
    gamma = mdp.gamma if cfg.gamma is None else float(cfg.gamma)
    S, A = mdp.n_states, mdp.n_actions
    nxt_tab, rew_tab, cdf_tab = mdp._outcome_table()
    rewards, terminal = mdp.rewards.tolist(), mdp.terminal.tolist()
    q = np.zeros((S, A))
    total = cfg.seed_steps + cfg.steps
    u_explore, u_action, u_env = rng.random(total), rng.random(total), rng.random(total)

    rows = {k: np.empty(total, dtype=dt) for k, dt in
            (("ep", np.int64), ("t", np.int64), ("s", np.int64), ("a", np.int64),
             ("r", float), ("sn", np.int64), ("d", bool))}
    history = []
    ep, t, s = 0, 0, int(mdp.sample_initial(1, rng)[0])
    for i in range(total):
        learning = i >= cfg.seed_steps
        eps = cfg.epsilon(i - cfg.seed_steps) if learning else 1.0
        if u_explore[i] < eps:
            a = int(u_action[i] * A)
        else:
            row = q[s]
            best = np.flatnonzero(row == row.max())
            a = int(best[int(u_action[i] * best.size)])
        idx = s * A + a
        k = int(np.searchsorted(cdf_tab[idx], u_env[i]))
        k = min(k, cdf_tab.shape[1] - 1)
        sn, r = int(nxt_tab[idx, k]), rewards[rew_tab[idx, k]]
        done = terminal[sn]
        target = r if done else r + gamma * q[sn].max()
        q[s, a] += cfg.alpha * (target - q[s, a])

        rows["ep"][i], rows["t"][i], rows["s"][i], rows["a"][i] = ep, t, s, a
        rows["r"][i], rows["sn"][i], rows["d"][i] = r, sn, done
        t += 1
        s = sn
        if done or t >= mdp.horizon:
            ep, t = ep + 1, 0
            s = int(mdp.sample_initial(1, rng)[0])
        if learning and (i - cfg.seed_steps + 1) % cfg.eval_every == 0:
            greedy = PolicyTable.greedy(q)
            runs = rollout(mdp, greedy, cfg.eval_episodes, eval_rng)
            history.append((i - cfg.seed_steps + 1, average_trajectory_return(runs, 1.0)))

    log = Dataset.from_arrays(
        *(rows[c] for c in ("ep", "t", "s", "a", "r", "sn", "d")),
        env=mdp.name, scheme="replay", seed=int(cfg.seed),
        n_states=S, n_actions=A, gamma=float(gamma),
    )
    return OnlineResult(PolicyTable.greedy(q), log, history, q)


def online_steps(n_samples, requested=None):
    """Online training length for a dataset of ``n_samples`` rows.

    Never shorter than ``n_samples`` (the replay prefix must exist) or the
    exploration decay period.
    """
    steps = requested if requested else max(n_samples, MIN_ONLINE_STEPS)
    return max(steps, n_samples, OnlineTrainerConfig.eps_decay_steps)


@dataclass(frozen=True)
class GenerationScheme:
    kind: str
    n_samples: int = 10_000
    epsilon: float = 0.2
    mix_fraction: float = 0.8

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; choose from {SCHEMES}")
        check_positive_int(self.n_samples, "n_samples")
        check_unit_interval(self.epsilon, "epsilon")
        check_unit_interval(self.mix_fraction, "mix_fraction")

    @property
    def needs_expert(self):
        return self.kind in ("expert", "noisy", "mixed")


def generate(mdp: FiniteMDP, scheme: GenerationScheme, expert: PolicyTable | None = None,
             replay_log: Dataset | None = None, seed=0) -> Dataset:
    """Sample a dataset of exactly ``scheme.n_samples`` transitions.

    ``random`` uses the uniform policy, ``expert`` the greedy expert, ``noisy``
    the expert mixed with uniform actions at rate ``epsilon``. ``mixed`` samples
    a fresh random part (``mix_fraction`` of the rows) followed by a fresh
    expert part. ``replay`` returns the first ``n_samples`` rows of the log.
    """
    n = scheme.n_samples
    if scheme.needs_expert and expert is None:
        raise ValueError(f"scheme {scheme.kind!r} needs an expert policy")
    manifest = dict(env=mdp.name, scheme=scheme.kind, seed=int(seed), n=n,
                    n_states=mdp.n_states, n_actions=mdp.n_actions, gamma=float(mdp.gamma))
    if scheme.kind == "replay":
        if replay_log is None:
            raise ValueError("replay scheme needs the online replay log")
        if len(replay_log) < n:
            raise ValueError(f"replay log has {len(replay_log)} rows, {n} requested")
        return replay_log.head(n).with_manifest(**manifest)

    rng = check_rng(seed)
    uniform = PolicyTable.uniform(mdp.n_states, mdp.n_actions)
    if scheme.kind == "random":
        ds = sample_transitions(mdp, uniform, n, rng)
    elif scheme.kind == "expert":
        ds = sample_transitions(mdp, expert, n, rng)
    elif scheme.kind == "noisy":
        ds = sample_transitions(mdp, expert.epsilon_greedy(scheme.epsilon), n, rng)
    else:
        n_random = int(round(scheme.mix_fraction * n))
        parts = []
        if n_random:
            parts.append(sample_transitions(mdp, uniform, n_random, rng))
        if n - n_random:
            parts.append(sample_transitions(mdp, expert, n - n_random, rng))
        ds = Dataset.concatenate(parts, n_states=mdp.n_states, n_actions=mdp.n_actions)
    return ds.with_manifest(**manifest)
