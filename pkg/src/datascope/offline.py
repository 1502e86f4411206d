"""Tabular offline RL agents and the normalized performance measure omega.

Every agent learns from a fixed :class:`~datascope.core.Dataset` only. Value
based agents run full-batch sweeps: each sweep moves every observed
``Q(s, a)`` towards the mean target over that pair's dataset rows,
``Q <- Q + lr * (T Q - Q)``. Unobserved pairs keep their zero initialization.
At evaluation the greedy policy spreads its mass over tied maximizers, and
states absent from the dataset act uniformly.

========  ==================================================================
bc        argmax of the empirical behavior policy
mce       Monte-Carlo returns of the behavior policy, greedy at inference
bve       SARSA on the logged next action, bootstrap 0 at trajectory ends
qlearn    max-operator bootstrapping on dataset transitions
bcq       max restricted to actions with pi_b(a|s) >= tau * max_a pi_b
cql       qlearn plus the penalty ``Q(s) -= lr * alpha * (softmax Q(s) - pi_b(s))``
========  ==================================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset, check_positive_int, check_rng, check_unit_interval
from .core import Dataset, FiniteMDP, PolicyTable, average_trajectory_return, rollout

ALGORITHMS = ("bc", "mce", "bve", "qlearn", "bcq", "cql")
TIE_ATOL = 1e-12


def omega(best_return, d_min_return, d_expert_return) -> float:
    """Best evaluation return affinely scaled so min -> 0 and expert -> 1."""
    if not d_expert_return > d_min_return:
        raise ValueError("expert return must exceed the minimum return")
    return (float(best_return) - d_min_return) / (d_expert_return - d_min_return)


def greedy_policy(q, seen=None, atol=TIE_ATOL) -> PolicyTable:
    """Uniform over maximizers of each row; uniform everywhere on unseen states."""
    q = np.asarray(q, dtype=float)
    top = q >= q.max(axis=1, keepdims=True) - atol
    probs = top / top.sum(axis=1, keepdims=True)
    if seen is not None:
        probs[~seen] = 1.0 / q.shape[1]
    return PolicyTable(probs)


@dataclass(frozen=True)
class _Batch:
    """Per-row arrays and per-pair statistics of a dataset."""

    S: int
    A: int
    idx: np.ndarray  # s * A + a
    r: np.ndarray
    sn: np.ndarray
    d: np.ndarray
    last: np.ndarray  # final row of its trajectory
    next_a: np.ndarray  # logged action at sn (undefined where ``last``)
    counts: np.ndarray  # (S*A,)
    behavior: np.ndarray  # (S, A) empirical pi_b, zero rows on unseen states
    seen: np.ndarray  # (S,)

    @classmethod
    def from_dataset(cls, ds: Dataset, n_states=None, n_actions=None):
        check_dataset(ds)
        S = n_states or ds.manifest.n_states or int(max(ds.s.max(), ds.sn.max())) + 1
        A = n_actions or ds.manifest.n_actions or int(ds.a.max()) + 1
        last = np.ones(len(ds), dtype=bool)
        last[:-1] = ds.ep[1:] != ds.ep[:-1]
        next_a = np.zeros(len(ds), dtype=np.int64)
        next_a[:-1] = ds.a[1:]
        idx = ds.s * A + ds.a
        counts = np.bincount(idx, minlength=S * A).astype(float)
        sa = counts.reshape(S, A)
        seen = sa.sum(axis=1) > 0
        behavior = np.divide(sa, sa.sum(axis=1, keepdims=True), out=np.zeros_like(sa),
                             where=seen[:, None])
        return cls(S, A, idx, ds.r, ds.sn, ds.d, last, next_a, counts, behavior, seen)

    def pair_mean(self, target):
        sums = np.bincount(self.idx, weights=target, minlength=self.S * self.A)
        mean = np.divide(sums, self.counts, out=np.zeros_like(sums), where=self.counts > 0)
        return mean.reshape(self.S, self.A)

    @property
    def covered(self):
        return (self.counts > 0).reshape(self.S, self.A)


class TabularOfflineAgent(BaseEstimator):
    """Shared fit/predict machinery; subclasses define one learning sweep.

    ``fit(ds)`` accepts an optional ``callback(iteration, agent)`` invoked
    every ``eval_every`` sweeps, which is how :func:`run_offline` evaluates
    intermediate policies in the environment.
    """

    def __init__(self, iterations=200, alpha_lr=0.5, gamma=0.99, eval_every=20):
        self.iterations = iterations
        self.alpha_lr = alpha_lr
        self.gamma = gamma
        self.eval_every = eval_every

    def _validate_params(self):
        check_positive_int(self.iterations, "iterations")
        check_positive_int(self.eval_every, "eval_every")
        if not 0 < self.alpha_lr <= 1:
            raise ValueError("alpha_lr must lie in (0, 1]")
        check_unit_interval(self.gamma, "gamma")

    def _init(self, batch):
        return np.zeros((batch.S, batch.A))

    def _sweep(self, q, batch):
        raise NotImplementedError

    def _eligible(self, batch):
        return None

    def fit(self, X, y=None, callback=None, n_states=None, n_actions=None):
        self._validate_params()
        batch = _Batch.from_dataset(X, n_states, n_actions)
        self.batch_ = batch
        q = self._init(batch)
        for it in range(1, self.iterations + 1):
            q = self._sweep(q, batch)
            self.q_ = q
            if callback is not None and it % self.eval_every == 0:
                callback(it, self)
        self.q_ = q
        self.n_states_, self.n_actions_ = batch.S, batch.A
        return self

    def _masked_q(self):
        q = self.q_.copy()
        mask = self._eligible(self.batch_)
        if mask is not None:
            q[~mask] = -np.inf
        return q

    def policy(self) -> PolicyTable:
        check_is_fitted(self, "q_")
        return greedy_policy(self._masked_q(), self.batch_.seen)

    def predict_proba(self, states):
        return self.policy().probs[np.asarray(states)]

    def predict(self, states, random_state=None):
        """Greedy actions; ties and unseen states resolved with ``random_state``."""
        rng = check_rng(random_state)
        return self.policy().sample(np.asarray(states), rng)


class BehavioralCloning(TabularOfflineAgent):
    def _init(self, batch):
        return batch.behavior.copy()

    def _sweep(self, q, batch):
        return q


class MonteCarloEstimation(TabularOfflineAgent):
    def _init(self, batch):
        # discounted return-to-go of every row, cut at trajectory ends
        g = np.zeros(batch.r.size)
        acc = 0.0
        for i in range(batch.r.size - 1, -1, -1):
            acc = batch.r[i] + (0.0 if batch.last[i] else self.gamma * acc)
            g[i] = acc
        self._mc_target = batch.pair_mean(g)
        return np.zeros((batch.S, batch.A))

    def _sweep(self, q, batch):
        return q + self.alpha_lr * batch.covered * (self._mc_target - q)


class BehaviorValueEstimation(TabularOfflineAgent):
    def _sweep(self, q, batch):
        boot = np.where(batch.last | batch.d, 0.0, q[batch.sn, batch.next_a])
        target = batch.r + self.gamma * boot
        return q + self.alpha_lr * batch.covered * (batch.pair_mean(target) - q)


class OfflineQLearning(TabularOfflineAgent):
    def _next_values(self, q, batch):
        return q.max(axis=1)

    def _bellman(self, q, batch):
        v = self._next_values(q, batch)
        target = batch.r + self.gamma * np.where(batch.d, 0.0, v[batch.sn])
        return q + self.alpha_lr * batch.covered * (batch.pair_mean(target) - q)

    def _sweep(self, q, batch):
        return self._bellman(q, batch)


class BatchConstrainedQLearning(OfflineQLearning):
    """Q-learning whose max only ranges over behaviorally plausible actions."""

    def __init__(self, iterations=200, alpha_lr=0.5, gamma=0.99, eval_every=20, tau=0.3):
        super().__init__(iterations, alpha_lr, gamma, eval_every)
        self.tau = tau

    def _validate_params(self):
        super()._validate_params()
        check_unit_interval(self.tau, "tau")

    def _eligible(self, batch):
        b = batch.behavior
        mask = b >= self.tau * b.max(axis=1, keepdims=True)
        mask[~batch.seen] = True
        return mask

    def _next_values(self, q, batch):
        return np.where(self._eligible(batch), q, -np.inf).max(axis=1)


class ConservativeQLearning(OfflineQLearning):
    """Q-learning with a penalty pulling Q(s, .) towards the data's log-likelihood."""

    def __init__(self, iterations=200, alpha_lr=0.5, gamma=0.99, eval_every=20, alpha=0.1):
        super().__init__(iterations, alpha_lr, gamma, eval_every)
        self.alpha = alpha

    def _validate_params(self):
        super()._validate_params()
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")

    def _sweep(self, q, batch):
        z = q - q.max(axis=1, keepdims=True)
        soft = np.exp(z)
        soft /= soft.sum(axis=1, keepdims=True)
        grad = np.where(batch.seen[:, None], soft - batch.behavior, 0.0)
        return self._bellman(q, batch) - self.alpha_lr * self.alpha * grad


_AGENTS = {
    "bc": BehavioralCloning,
    "mce": MonteCarloEstimation,
    "bve": BehaviorValueEstimation,
    "qlearn": OfflineQLearning,
    "bcq": BatchConstrainedQLearning,
    "cql": ConservativeQLearning,
}


@dataclass(frozen=True)
class OfflineConfig:
    """Offline training settings; ``gamma=None`` uses the environment's discount."""

    algorithm: str = "qlearn"
    iterations: int = 200
    alpha_lr: float = 0.5
    gamma: float | None = None
    eval_every: int = 20
    eval_episodes: int = 10
    seed: int = 0
    tau: float = 0.3
    alpha: float = 0.1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        check_positive_int(self.eval_episodes, "eval_episodes")

    def make_agent(self, gamma):
        kw = dict(iterations=self.iterations, alpha_lr=self.alpha_lr, gamma=gamma,
                  eval_every=self.eval_every)
        if self.algorithm == "bcq":
            kw["tau"] = self.tau
        elif self.algorithm == "cql":
            kw["alpha"] = self.alpha
        return _AGENTS[self.algorithm](**kw)


@dataclass(frozen=True)
class OfflineResult:
    best_eval_return: float
    eval_history: list = field(default_factory=list)  # (iteration, mean return)
    omega: float = float("nan")
    learned_policy: PolicyTable | None = None
    policies: list = field(default_factory=list, repr=False)  # policy at each evaluation

    def to_dict(self):
        return {
            "best_eval_return": self.best_eval_return,
            "omega": self.omega,
            "eval_history": [[int(i), float(g)] for i, g in self.eval_history],
        }


def run_offline(ds: Dataset, mdp: FiniteMDP, cfg: OfflineConfig = OfflineConfig(),
                d_min_return=None, d_expert_return=None) -> OfflineResult:
    """Train one agent on ``ds`` and evaluate it in ``mdp`` every ``eval_every`` sweeps.

    Evaluation returns are undiscounted episode means. ``omega`` is computed
    from the best of them when both reference returns are given.
    """
    check_dataset(ds)
    gamma = mdp.gamma if cfg.gamma is None else float(cfg.gamma)
    agent = cfg.make_agent(gamma)
    rng = np.random.default_rng(cfg.seed)
    history, policies = [], []

    def evaluate(it, ag):
        pi = ag.policy()
        runs = rollout(mdp, pi, cfg.eval_episodes, rng)
        history.append((it, average_trajectory_return(runs, 1.0)))
        policies.append(pi)

    agent.fit(ds, callback=evaluate, n_states=mdp.n_states, n_actions=mdp.n_actions)
    if not history:
        evaluate(agent.iterations, agent)
    best = max(g for _, g in history)
    om = float("nan")
    if d_min_return is not None and d_expert_return is not None:
        om = omega(best, d_min_return, d_expert_return)
    return OfflineResult(best, history, om, agent.policy(), policies)
