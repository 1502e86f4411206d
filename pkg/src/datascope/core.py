"""Finite MDPs, policies, datasets and exact policy evaluation.

The tabular objects here are the ground truth every other module checks
against: exact expected returns by backward induction and exact occupancies
by forward propagation of the state distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from ._validation import check_dataset, check_policy, check_rng

PROB_ATOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    """Tabular MDP with an explicit joint next-state/reward distribution.

    ``dynamics[s, a, s2, k]`` is the probability of landing in ``s2`` with
    reward ``rewards[k]`` after taking ``a`` in ``s``. Terminal states must
    self-loop with reward 0, so 0 has to be one of the reward values whenever
    a terminal state exists.
    """

    rewards: np.ndarray
    dynamics: np.ndarray
    initial_dist: np.ndarray
    terminal: np.ndarray
    gamma: float = 0.99
    horizon: int = 100
    name: str = "mdp"

    def __post_init__(self):
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        object.__setattr__(self, "dynamics", _frozen(self.dynamics))
        object.__setattr__(self, "initial_dist", _frozen(self.initial_dist))
        object.__setattr__(self, "terminal", _frozen(self.terminal, dtype=bool))
        self._validate()

    def _validate(self):
        p, r = self.dynamics, self.rewards
        if p.ndim != 4:
            raise ValueError("dynamics must have shape (S, A, S, R)")
        S, A, S2, R = p.shape
        if S != S2 or R != r.size or S < 1 or A < 1:
            raise ValueError(f"inconsistent dynamics shape {p.shape} for {r.size} rewards")
        if len(np.unique(r)) != r.size:
            raise ValueError("reward values must be distinct")
        if np.any(p < 0) or np.any(p > 1 + PROB_ATOL):
            raise ValueError("dynamics entries must lie in [0, 1]")
        row_err = np.abs(p.sum(axis=(2, 3)) - 1.0)
        if row_err.max() > PROB_ATOL:
            s, a = np.unravel_index(row_err.argmax(), row_err.shape)
            raise ValueError(f"dynamics row ({s}, {a}) does not sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.initial_dist.shape != (S,) or abs(self.initial_dist.sum() - 1) > PROB_ATOL:
            raise ValueError("initial_dist must be a probability vector over states")
        if np.any(self.initial_dist < 0):
            raise ValueError("initial_dist must be nonnegative")
        if self.terminal.shape != (S,):
            raise ValueError("terminal must have one flag per state")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.terminal.any():
            zero = np.flatnonzero(r == 0.0)
            if zero.size == 0:
                raise ValueError("terminal states need a 0 reward value")
            for s in np.flatnonzero(self.terminal):
                if not np.allclose(p[s, :, s, zero[0]], 1.0, atol=PROB_ATOL, rtol=0):
                    raise ValueError(f"terminal state {s} must self-loop with reward 0")

    @property
    def n_states(self) -> int:
        return self.dynamics.shape[0]

    @property
    def n_actions(self) -> int:
        return self.dynamics.shape[1]

    @property
    def state_dynamics(self) -> np.ndarray:
        """p(s' | s, a), shape (S, A, S)."""
        return self.dynamics.sum(axis=3)

    @property
    def expected_reward(self) -> np.ndarray:
        return np.einsum("ijkl,l->ij", self.dynamics, self.rewards)

    def is_deterministic(self, atol=1e-12) -> bool:
        flat = self.dynamics.reshape(self.n_states * self.n_actions, -1)
        return bool(np.all(np.abs(flat.max(axis=1) - 1.0) <= atol))

    def with_(self, **changes) -> "FiniteMDP":
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, FiniteMDP):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and self.horizon == other.horizon
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.dynamics, other.dynamics)
            and np.array_equal(self.initial_dist, other.initial_dist)
            and np.array_equal(self.terminal, other.terminal)
        )

    __hash__ = None

    # sampling support -----------------------------------------------------

    def _outcome_table(self):
        cached = self.__dict__.get("_outcomes")
        if cached is not None:
            return cached
        S, A, _, R = self.dynamics.shape
        flat = self.dynamics.reshape(S * A, S * R)
        width = max(1, int((flat > 0).sum(axis=1).max()))
        nxt = np.zeros((S * A, width), dtype=np.int64)
        rew = np.zeros((S * A, width), dtype=np.int64)
        cdf = np.ones((S * A, width))
        for i, row in enumerate(flat):
            nz = np.flatnonzero(row > 0)
            nxt[i, : nz.size], rew[i, : nz.size] = np.divmod(nz, R)
            c = np.cumsum(row[nz])
            c[-1] = 1.0
            cdf[i, : nz.size] = c
            nxt[i, nz.size:] = nxt[i, nz.size - 1]
            rew[i, nz.size:] = rew[i, nz.size - 1]
        table = (nxt, rew, cdf)
        object.__setattr__(self, "_outcomes", table)
        return table

    def sample_step(self, s, a, rng):
        """Sample ``(s_next, reward_index)`` for integer arrays or scalars."""
        nxt, rew, cdf = self._outcome_table()
        idx = np.asarray(s) * self.n_actions + np.asarray(a)
        u = rng.random(np.shape(idx))
        k = (cdf[idx] < np.expand_dims(u, -1)).sum(axis=-1)
        k = np.minimum(k, cdf.shape[1] - 1)
        return nxt[idx, k], rew[idx, k]

    def sample_initial(self, n, rng):
        return rng.choice(self.n_states, size=n, p=self.initial_dist)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Stationary per-state action distribution ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ValueError("policy table must be 2-d (states x actions)")
        if np.any(p < 0):
            raise ValueError("policy probabilities must be nonnegative")
        err = np.abs(p.sum(axis=1) - 1.0)
        if p.size and err.max() > PROB_ATOL:
            raise ValueError(f"policy row {int(err.argmax())} does not sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def greedy(cls, q):
        """Deterministic argmax policy; ties go to the lowest action index."""
        q = np.asarray(q)
        probs = np.zeros_like(q, dtype=float)
        probs[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
        return cls(probs)

    @classmethod
    def from_actions(cls, actions, n_actions):
        actions = np.asarray(actions)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    def epsilon_greedy(self, epsilon):
        """Mix with the uniform policy: ``(1 - eps) * pi + eps * uniform``."""
        if epsilon == 0:
            return self
        uniform = np.full_like(self.probs, 1.0 / self.n_actions)
        return PolicyTable((1.0 - epsilon) * self.probs + epsilon * uniform)

    def sample(self, states, rng):
        cdf = np.cumsum(self.probs[np.asarray(states)], axis=-1)
        u = rng.random(np.shape(states))
        a = (cdf < np.expand_dims(u, -1)).sum(axis=-1)
        return np.minimum(a, self.n_actions - 1)

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    rho: np.ndarray
    derivation: str = "exact"

    def __post_init__(self):
        rho = _frozen(self.rho)
        if np.any(rho < 0):
            raise ValueError("occupancy entries must be nonnegative")
        if abs(rho.sum() - 1.0) > 1e-10:
            raise ValueError(f"occupancy must sum to 1 (got {rho.sum():.15g})")
        if self.derivation not in ("exact", "empirical"):
            raise ValueError("derivation must be 'exact' or 'empirical'")
        object.__setattr__(self, "rho", rho)

    @property
    def state_marginal(self):
        return self.rho.sum(axis=1)


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int
    terminal: bool


@dataclass(frozen=True)
class Trajectory:
    transitions: tuple
    episode_id: int = 0

    def __post_init__(self):
        tr = tuple(Transition(*t) for t in self.transitions)
        for prev, cur in zip(tr, tr[1:]):
            if prev.s_next != cur.s:
                raise ValueError(f"trajectory {self.episode_id} is not contiguous")
            if prev.terminal:
                raise ValueError(f"trajectory {self.episode_id} continues after a terminal step")
        object.__setattr__(self, "transitions", tr)

    def __len__(self):
        return len(self.transitions)

    def discounted_return(self, gamma=1.0):
        return sum(gamma**t * tr.r for t, tr in enumerate(self.transitions))


@dataclass(frozen=True)
class Manifest:
    env: str = "unknown"
    scheme: str = "unknown"
    seed: int = 0
    n: int = 0
    n_states: int = 0
    n_actions: int = 0
    gamma: float = 1.0

    def to_dict(self):
        return {
            "env": self.env,
            "scheme": self.scheme,
            "seed": int(self.seed),
            "n": int(self.n),
            "n_states": int(self.n_states),
            "n_actions": int(self.n_actions),
            "gamma": float(self.gamma),
        }


_COLUMNS = ("ep", "t", "s", "a", "r", "sn", "d")
_DTYPES = (np.int64, np.int64, np.int64, np.int64, float, np.int64, bool)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered trajectories stored column-wise.

    Rows are grouped by episode id with ascending step index, exactly the order
    of the on-disk JSON Lines format. Columns are read-only numpy arrays.
    """

    ep: np.ndarray
    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    sn: np.ndarray
    d: np.ndarray
    manifest: Manifest = field(default_factory=Manifest)

    def __post_init__(self):
        for name, dt in zip(_COLUMNS, _DTYPES):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=dt))
        n = self.ep.size
        if any(getattr(self, c).shape != (n,) for c in _COLUMNS):
            raise ValueError("dataset columns must be 1-d and of equal length")
        if self.manifest.n != n:
            raise ValueError(f"manifest declares n={self.manifest.n} but dataset has {n} rows")
        self._check_structure()

    def _check_structure(self):
        n = len(self)
        if n == 0:
            return
        m = self.manifest
        if m.n_states and (self.s.max() >= m.n_states or self.sn.max() >= m.n_states):
            raise ValueError("state id outside the declared state range")
        if m.n_actions and self.a.max() >= m.n_actions:
            raise ValueError("action id outside the declared action range")
        if min(self.s.min(), self.sn.min(), self.a.min(), self.ep.min(), self.t.min()) < 0:
            raise ValueError("ids must be nonnegative")
        if not np.isfinite(self.r).all():
            raise ValueError("rewards must be finite")
        same = self.ep[1:] == self.ep[:-1]
        if np.any(same & (self.t[1:] != self.t[:-1] + 1)):
            raise ValueError("step indices must ascend by one within an episode")
        if np.any(same & (self.sn[:-1] != self.s[1:])):
            raise ValueError("s_next of a step must equal s of the following step")
        if np.any(same & self.d[:-1]):
            raise ValueError("only the final transition of an episode may be terminal")
        starts = np.concatenate([[0], np.flatnonzero(~same) + 1])
        if len(np.unique(self.ep[starts])) != starts.size:
            raise ValueError("episode rows must be contiguous")

    def __len__(self):
        return self.ep.size

    @classmethod
    def from_arrays(cls, ep, t, s, a, r, sn, d, **manifest):
        manifest.setdefault("n", len(ep))
        return cls(ep, t, s, a, r, sn, d, manifest=Manifest(**manifest))

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], **manifest):
        rows = [
            (traj.episode_id, t, *tr)
            for traj in trajectories
            for t, tr in enumerate(traj.transitions)
        ]
        cols = list(zip(*rows)) if rows else [()] * 7
        return cls.from_arrays(*cols, **manifest)

    @classmethod
    def empty(cls, **manifest):
        return cls.from_arrays(*([()] * 7), **manifest)

    @classmethod
    def concatenate(cls, parts, **manifest):
        """Stack datasets, renumbering episodes so ids stay unique."""
        cols = {c: [] for c in _COLUMNS}
        offset = 0
        for part in parts:
            if len(part) == 0:
                continue
            _, ep = np.unique(part.ep, return_inverse=True)
            cols["ep"].append(ep + offset)
            offset += ep.max() + 1
            for c in _COLUMNS[1:]:
                cols[c].append(getattr(part, c))
        arrays = [np.concatenate(cols[c]) if cols[c] else np.array([]) for c in _COLUMNS]
        return cls.from_arrays(*arrays, **manifest)

    def with_manifest(self, **changes):
        return replace(self, manifest=replace(self.manifest, **changes))

    def head(self, n):
        m = replace(self.manifest, n=min(n, len(self)))
        return Dataset(*(getattr(self, c)[:n] for c in _COLUMNS), manifest=m)

    def episode_bounds(self):
        """Start/stop row indices of each trajectory, in file order."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        brk = np.flatnonzero(self.ep[1:] != self.ep[:-1]) + 1
        starts = np.concatenate([[0], brk])
        stops = np.concatenate([brk, [len(self)]])
        return starts, stops

    @property
    def n_trajectories(self):
        return self.episode_bounds()[0].size

    def trajectories(self) -> Iterator[Trajectory]:
        for lo, hi in zip(*self.episode_bounds()):
            rows = zip(
                self.s[lo:hi].tolist(), self.a[lo:hi].tolist(), self.r[lo:hi].tolist(),
                self.sn[lo:hi].tolist(), self.d[lo:hi].tolist(),
            )
            yield Trajectory(tuple(rows), int(self.ep[lo]))

    def __iter__(self) -> Iterator[Transition]:
        for row in zip(self.s.tolist(), self.a.tolist(), self.r.tolist(),
                       self.sn.tolist(), self.d.tolist()):
            yield Transition(*row)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.manifest == other.manifest and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in _COLUMNS
        )

    __hash__ = None

    def returns_to_go(self, gamma):
        """Discounted return from every row to the end of its trajectory."""
        g = np.zeros(len(self))
        starts, stops = self.episode_bounds()
        nxt_same = np.zeros(len(self), dtype=bool)
        if len(self):
            nxt_same[:-1] = self.ep[1:] == self.ep[:-1]
        # one backward pass; resets at trajectory boundaries
        acc = 0.0
        r = self.r
        for i in range(len(self) - 1, -1, -1):
            acc = r[i] + (gamma * acc if nxt_same[i] else 0.0)
            g[i] = acc
        return g

    def sa_counts(self, n_states=None, n_actions=None):
        n_states = n_states or self.manifest.n_states or int(self.s.max()) + 1
        n_actions = n_actions or self.manifest.n_actions or int(self.a.max()) + 1
        counts = np.zeros((n_states, n_actions), dtype=np.int64)
        np.add.at(counts, (self.s, self.a), 1)
        return counts


# ---------------------------------------------------------------------------
# exact evaluation


def _state_distributions(mdp: FiniteMDP, policy: PolicyTable):
    """Yield per-step nonterminal state distributions d_t for t < horizon."""
    live = ~mdp.terminal
    p_pi = np.einsum("sa,sak->sk", policy.probs, mdp.state_dynamics)
    d = mdp.initial_dist * live
    for _ in range(mdp.horizon):
        yield d
        d = (d @ p_pi) * live


def evaluate_policy_exact(mdp: FiniteMDP, policy: PolicyTable, gamma=None) -> float:
    """Expected discounted return of ``policy`` from the initial distribution.

    Computed by backward induction over the finite horizon; terminal states
    have value 0. ``gamma`` overrides the MDP's discount (e.g. 1.0 for the
    undiscounted returns used in reporting).
    """
    check_policy(policy, mdp)
    gamma = mdp.gamma if gamma is None else float(gamma)
    r_sa = mdp.expected_reward
    p = mdp.state_dynamics
    live = ~mdp.terminal
    v = np.zeros(mdp.n_states)
    for _ in range(mdp.horizon):
        q = r_sa + gamma * p @ v
        v = (policy.probs * q).sum(axis=1) * live
    return float(mdp.initial_dist @ v)


def occupancy_exact(mdp: FiniteMDP, policy: PolicyTable) -> OccupancyTable:
    """Normalized expected visit counts of each (s, a) within one episode."""
    check_policy(policy, mdp)
    visits = np.zeros(mdp.n_states)
    for d in _state_distributions(mdp, policy):
        visits += d
    total = visits.sum()
    if total <= 0:
        raise ValueError("episodes start in terminal states; occupancy is undefined")
    return OccupancyTable(visits[:, None] * policy.probs / total, "exact")


def occupancy_empirical(ds: Dataset, n_states=None, n_actions=None) -> OccupancyTable:
    check_dataset(ds)
    counts = ds.sa_counts(n_states, n_actions)
    return OccupancyTable(counts / counts.sum(), "empirical")


def average_trajectory_return(ds: Dataset, gamma=1.0) -> float:
    """Mean discounted return over the trajectories of ``ds``."""
    check_dataset(ds)
    starts, _ = ds.episode_bounds()
    seg = np.searchsorted(starts, np.arange(len(ds)), side="right") - 1
    disc = np.power(float(gamma), ds.t - ds.t[starts][seg]) if gamma != 1 else np.ones(len(ds))
    per_traj = np.bincount(seg, weights=ds.r * disc, minlength=starts.size)
    return float(per_traj.mean())


# ---------------------------------------------------------------------------
# sampling


def rollout(mdp: FiniteMDP, policy: PolicyTable, n_episodes, rng=None, first_episode_id=0,
            **manifest) -> Dataset:
    """Sample ``n_episodes`` full episodes (cut at the horizon) in lockstep."""
    check_policy(policy, mdp)
    rng = check_rng(rng)
    B = int(n_episodes)
    if B == 0:
        return Dataset.empty(n_states=mdp.n_states, n_actions=mdp.n_actions, **manifest)
    state = mdp.sample_initial(B, rng)
    alive = ~mdp.terminal[state]
    steps = []
    for _ in range(mdp.horizon):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        a = policy.sample(state[idx], rng)
        sn, k = mdp.sample_step(state[idx], a, rng)
        done = mdp.terminal[sn]
        steps.append((idx, state[idx], a, mdp.rewards[k], sn, done))
        state[idx] = sn
        alive[idx] = ~done
    if not steps:
        return Dataset.empty(n_states=mdp.n_states, n_actions=mdp.n_actions, **manifest)
    cols = [np.concatenate(c) for c in zip(*steps)]
    t = np.concatenate([np.full(len(st[0]), i) for i, st in enumerate(steps)])
    order = np.lexsort((t, cols[0]))
    ep = cols[0][order] + first_episode_id
    return Dataset.from_arrays(
        ep, t[order], cols[1][order], cols[2][order], cols[3][order], cols[4][order],
        cols[5][order], n_states=mdp.n_states, n_actions=mdp.n_actions, **manifest,
    )


def sample_transitions(mdp: FiniteMDP, policy: PolicyTable, n_samples, rng=None,
                       **manifest) -> Dataset:
    """Collect exactly ``n_samples`` transitions; the final episode may be partial."""
    rng = check_rng(rng)
    parts, total, next_id = [], 0, 0
    batch = max(8, n_samples // max(1, mdp.horizon) + 1)
    while total < n_samples:
        part = rollout(mdp, policy, batch, rng, first_episode_id=next_id)
        if len(part) == 0:
            raise ValueError("policy produces empty episodes; cannot collect samples")
        parts.append(part)
        total += len(part)
        next_id += batch
        batch = max(8, (n_samples - total) // max(1, mdp.horizon) + 1)
    ds = Dataset.concatenate(parts, n_states=mdp.n_states, n_actions=mdp.n_actions)
    ds = ds.head(n_samples)
    return ds.with_manifest(**manifest) if manifest else ds


# ---------------------------------------------------------------------------
# planning oracles


def value_iteration(mdp: FiniteMDP, gamma=None, tol=1e-13, max_iter=100_000):
    """Infinite-horizon optimal action values, iterated to a fixed point."""
    gamma = mdp.gamma if gamma is None else float(gamma)
    r_sa, p, live = mdp.expected_reward, mdp.state_dynamics, ~mdp.terminal
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = r_sa + gamma * p @ v
        v_new = q.max(axis=1) * live
        if np.abs(v_new - v).max() < tol:
            v = v_new
            break
        v = v_new
    return r_sa + gamma * p @ v


def finite_horizon_q(mdp: FiniteMDP, horizon=None, gamma=None):
    """Optimal action values with ``horizon`` steps to go (backward induction)."""
    gamma = mdp.gamma if gamma is None else float(gamma)
    horizon = mdp.horizon if horizon is None else int(horizon)
    r_sa, p, live = mdp.expected_reward, mdp.state_dynamics, ~mdp.terminal
    v = np.zeros(mdp.n_states)
    q = r_sa.copy()
    for _ in range(horizon):
        q = r_sa + gamma * p @ v
        v = q.max(axis=1) * live
    return q
