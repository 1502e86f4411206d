"""Built-in finite environments and MDP transformations.

Gridworlds use four actions (up, down, left, right); bumping into a wall or
the border leaves the agent in place. Goal and lava cells are terminal.
Transformations return the new MDP together with a :class:`TransformRecord`
that carries the state map ``phi`` (new state -> original state) and the
per-state action maps ``psi`` when the transform is a homomorphism.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive_int, check_rng, check_unit_interval
from .core import FiniteMDP

UP, DOWN, LEFT, RIGHT = range(4)
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class GridSpec:
    """Layout and reward parameters of a gridworld. Cells are ``(row, col)``."""

    width: int = 5
    height: int = 5
    walls: frozenset = frozenset()
    lava: frozenset = frozenset()
    start: tuple = (4, 0)
    goal: tuple = (0, 4)
    step_reward: float = 0.0
    goal_reward: float = 1.0
    lava_reward: float = -1.0
    slip_prob: float = 0.0
    gamma: float = 0.95
    horizon: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(map(tuple, self.walls)))
        object.__setattr__(self, "lava", frozenset(map(tuple, self.lava)))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))

    @classmethod
    def from_json(cls, path_or_obj):
        obj = path_or_obj
        if not isinstance(obj, dict):
            obj = json.loads(Path(path_or_obj).read_text(encoding="utf-8"))
        return cls(**obj)

    def cells(self):
        return [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in self.walls
        ]


def _neighbour(spec, cell, action):
    dr, dc = _MOVES[action]
    r, c = cell[0] + dr, cell[1] + dc
    if not (0 <= r < spec.height and 0 <= c < spec.width) or (r, c) in spec.walls:
        return cell
    return (r, c)


def _reachable(spec, src, dst):
    seen, queue = {src}, deque([src])
    while queue:
        cell = queue.popleft()
        if cell == dst:
            return True
        for a in range(4):
            nxt = _neighbour(spec, cell, a)
            if nxt not in seen and nxt not in spec.lava:
                seen.add(nxt)
                queue.append(nxt)
    return False


def build_gridworld(spec: GridSpec) -> FiniteMDP:
    """Tabular MDP of a gridworld; one state per non-wall cell, row-major."""
    inside = lambda cell: 0 <= cell[0] < spec.height and 0 <= cell[1] < spec.width
    for name in ("start", "goal"):
        cell = getattr(spec, name)
        if not inside(cell) or cell in spec.walls or cell in spec.lava:
            raise ValueError(f"{name} {cell} must be a free cell inside the grid")
    if spec.start == spec.goal:
        raise ValueError("start and goal must differ")
    if not _reachable(spec, spec.start, spec.goal):
        raise ValueError("goal is not reachable from start without entering lava")
    check_unit_interval(spec.slip_prob, "slip_prob")

    cells = spec.cells()
    index = {cell: i for i, cell in enumerate(cells)}
    terminal = np.array([c == spec.goal or c in spec.lava for c in cells])
    values = {spec.step_reward, spec.goal_reward}
    if spec.lava:
        values.add(spec.lava_reward)
    values.add(0.0)
    rewards = np.array(sorted(values))
    ridx = {v: k for k, v in enumerate(rewards)}
    zero = ridx[0.0]

    S, A, R = len(cells), 4, rewards.size
    p = np.zeros((S, A, S, R))
    action_mix = (1.0 - spec.slip_prob) * np.eye(A) + spec.slip_prob / A
    for s, cell in enumerate(cells):
        if terminal[s]:
            p[s, :, s, zero] = 1.0
            continue
        for a in range(A):
            for b in range(A):
                w = action_mix[a, b]
                if w == 0:
                    continue
                nxt = _neighbour(spec, cell, b)
                if nxt == spec.goal:
                    r = spec.goal_reward
                elif nxt in spec.lava:
                    r = spec.lava_reward
                else:
                    r = spec.step_reward
                p[s, a, index[nxt], ridx[r]] += w
    init = np.zeros(S)
    init[index[spec.start]] = 1.0
    horizon = spec.horizon or 4 * spec.width * spec.height
    return FiniteMDP(rewards, p, init, terminal, gamma=spec.gamma, horizon=horizon,
                     name="grid")


def build_chain(n, noise=0.0, gamma=0.9, horizon=None) -> FiniteMDP:
    """Left/right chain of ``n`` states; reaching the right end pays 1 and ends the episode.

    With probability ``noise`` the agent moves opposite to the chosen direction.
    Moving left from state 0 stays put.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError("chain needs n >= 2 states")
    check_unit_interval(noise, "noise")
    rewards = np.array([0.0, 1.0])
    p = np.zeros((n, 2, n, 2))
    for s in range(n - 1):
        left, right = max(s - 1, 0), s + 1
        for a, (want, other) in enumerate(((left, right), (right, left))):
            for nxt, w in ((want, 1.0 - noise), (other, noise)):
                if w:
                    p[s, a, nxt, int(nxt == n - 1)] += w
    p[n - 1, :, n - 1, 0] = 1.0
    init = np.zeros(n)
    init[0] = 1.0
    terminal = np.zeros(n, dtype=bool)
    terminal[-1] = True
    return FiniteMDP(rewards, p, init, terminal, gamma=gamma,
                     horizon=horizon or 4 * n, name=f"chain{n}")


# ---------------------------------------------------------------------------
# catalog

GRID5 = GridSpec(
    walls={(1, 1), (1, 2), (1, 3), (3, 1), (3, 2), (3, 3)},
    step_reward=-0.2,
)

LAVAGAP5 = GridSpec(
    lava={(0, 2), (1, 2), (3, 2), (4, 2)},
    start=(0, 0),
    goal=(4, 4),
    step_reward=-0.2,
)


@dataclass(frozen=True)
class EnvCatalogEntry:
    name: str
    builder: object
    notes: str = ""

    def build(self):
        if isinstance(self.builder, GridSpec):
            return build_gridworld(self.builder).with_(name=self.name)
        return self.builder().with_(name=self.name)


CATALOG = {
    e.name: e
    for e in (
        EnvCatalogEntry("grid5", GRID5, "5x5 gridworld with two interior wall segments"),
        EnvCatalogEntry(
            "grid5-slip",
            GridSpec(**{**GRID5.__dict__, "slip_prob": 0.1}),
            "grid5 with sticky/slippery actions (p=0.1)",
        ),
        EnvCatalogEntry("lavagap5", LAVAGAP5, "lava column with a single gap"),
    )
}


def make_env(name) -> FiniteMDP:
    """Build an environment from a catalog name, ``chain<N>`` or a GridSpec JSON path."""
    if name in CATALOG:
        return CATALOG[name].build()
    m = re.fullmatch(r"chain(\d+)", name)
    if m:
        return build_chain(int(m.group(1))).with_(name=name)
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return build_gridworld(GridSpec.from_json(path)).with_(name=path.stem)
    raise KeyError(f"unknown environment {name!r}")


def env_names():
    return sorted(CATALOG) + ["chain<N>"]


# ---------------------------------------------------------------------------
# transformations


@dataclass(frozen=True)
class TransformRecord:
    """How a transformed MDP relates to its source.

    ``phi[s]`` is the source state of new state ``s`` and ``psi[s, a]`` the
    source action of new action ``a`` in new state ``s``; both are None when
    the transform is not a homomorphism onto the source.
    """

    kind: str
    params: dict = field(default_factory=dict)
    phi: np.ndarray | None = None
    psi: np.ndarray | None = None


def _identity_psi(n_states, n_actions):
    return np.tile(np.arange(n_actions), (n_states, 1))


def permute_states(mdp, perm=None, rng=None):
    """Relabel states: source state ``i`` becomes ``perm[i]``."""
    n = mdp.n_states
    perm = check_rng(rng).permutation(n) if perm is None else np.asarray(perm)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm must be a permutation of the state ids")
    inv = np.argsort(perm)
    new = mdp.with_(
        dynamics=mdp.dynamics[inv][:, :, inv],
        initial_dist=mdp.initial_dist[inv],
        terminal=mdp.terminal[inv],
    )
    rec = TransformRecord("permute_states", {"perm": perm.tolist()}, phi=inv,
                          psi=_identity_psi(n, mdp.n_actions))
    return new, rec


def permute_actions(mdp, perm=None, rng=None):
    """Relabel actions in every state: source action ``a`` becomes ``perm[a]``."""
    A = mdp.n_actions
    perm = check_rng(rng).permutation(A) if perm is None else np.asarray(perm)
    if sorted(perm.tolist()) != list(range(A)):
        raise ValueError("perm must be a permutation of the action ids")
    inv = np.argsort(perm)
    new = mdp.with_(dynamics=mdp.dynamics[:, inv])
    psi = np.tile(inv, (mdp.n_states, 1))
    rec = TransformRecord("permute_actions", {"perm": perm.tolist()},
                          phi=np.arange(mdp.n_states), psi=psi)
    return new, rec


def duplicate_states(mdp, k=2):
    """Split every state into ``k`` copies that each evolve within their own copy.

    Copy ``j`` of state ``s`` gets id ``s * k + j``; initial mass is split
    evenly across copies. The source MDP is the quotient under ``phi``.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError("k must be an integer >= 1")
    S, A, _, R = mdp.dynamics.shape
    p = np.zeros((S * k, A, S * k, R))
    for j in range(k):
        p[j::k, :, j::k, :] = mdp.dynamics
    new = mdp.with_(
        dynamics=p,
        initial_dist=np.repeat(mdp.initial_dist / k, k),
        terminal=np.repeat(mdp.terminal, k),
    )
    phi = np.repeat(np.arange(S), k)
    rec = TransformRecord("duplicate_states", {"k": int(k)}, phi=phi,
                          psi=_identity_psi(S * k, A))
    return new, rec


def reward_scale(mdp, c=2.0):
    """Multiply every reward value by ``c`` (a reward-dynamics shift)."""
    if c == 0:
        raise ValueError("c must be nonzero")
    rec = TransformRecord("reward_scale", {"c": float(c)})
    return mdp.with_(rewards=mdp.rewards * c), rec


def dynamics_noise(mdp, eps=0.1):
    """With probability ``eps`` the chosen action is replaced by a uniform one."""
    eps = check_unit_interval(eps, "eps")
    mean = mdp.dynamics.mean(axis=1, keepdims=True)
    p = (1.0 - eps) * mdp.dynamics + eps * mean
    rec = TransformRecord("dynamics_noise", {"eps": eps})
    return mdp.with_(dynamics=p), rec


_TRANSFORMS = {
    "permute_states": permute_states,
    "permute_actions": permute_actions,
    "duplicate_states": duplicate_states,
    "reward_scale": reward_scale,
    "dynamics_noise": dynamics_noise,
}


def transform(mdp, kind, **params):
    """Apply a named transformation; returns ``(new_mdp, TransformRecord)``."""
    try:
        fn = _TRANSFORMS[kind]
    except KeyError:
        raise ValueError(f"unknown transform {kind!r}; choose from {sorted(_TRANSFORMS)}") from None
    return fn(mdp, **params)


# ---------------------------------------------------------------------------
# random instances for property sweeps


def random_mdp(rng=None, n_states=5, n_actions=3, n_rewards=3, deterministic=False,
               n_terminal=1, gamma=0.9, horizon=20, support=3) -> FiniteMDP:
    """Random tabular MDP.

    Every nonterminal (s, a) row puts mass on at most ``support`` random
    (s', r) outcomes (exactly one when ``deterministic``). The last
    ``n_terminal`` states are terminal; 0 is always one of the reward values.
    """
    rng = check_rng(rng)
    S, A, R = n_states, n_actions, max(1, n_rewards)
    if n_terminal >= S:
        raise ValueError("need at least one nonterminal state")
    others = rng.choice(np.arange(-4, 5)[np.arange(-4, 5) != 0], size=R - 1, replace=False)
    rewards = np.sort(np.concatenate([[0.0], others / 2.0]))
    zero = int(np.flatnonzero(rewards == 0.0)[0])
    terminal = np.zeros(S, dtype=bool)
    if n_terminal:
        terminal[S - n_terminal:] = True
    p = np.zeros((S, A, S, R))
    for s in range(S):
        if terminal[s]:
            p[s, :, s, zero] = 1.0
            continue
        for a in range(A):
            k = 1 if deterministic else int(rng.integers(1, support + 1))
            outcomes = rng.choice(S * R, size=min(k, S * R), replace=False)
            w = rng.dirichlet(np.ones(outcomes.size))
            p[s, a].flat[outcomes] = w
    init = np.zeros(S)
    init[: S - n_terminal] = rng.dirichlet(np.ones(S - n_terminal))
    return FiniteMDP(rewards, p, init, terminal, gamma=gamma, horizon=horizon, name="random")


def random_policy(rng, n_states, n_actions, deterministic=False):
    from .core import PolicyTable

    rng = check_rng(rng)
    if deterministic:
        return PolicyTable.from_actions(rng.integers(0, n_actions, n_states), n_actions)
    return PolicyTable(rng.dirichlet(np.ones(n_actions), size=n_states))
