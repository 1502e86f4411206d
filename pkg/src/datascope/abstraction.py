"""MDP homomorphisms between ground MDPs and a common abstract MDP.

A :class:`Homomorphism` maps every ground state through ``phi`` and every
ground action of state ``s`` through ``psi[s]``. This module validates the
reward and state aggregation conditions, lifts abstract policies to ground
policies, and checks numerically that corresponding policies share the same
expected return and that the abstract transition-entropy lower-bounds the
ground one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_rng
from .core import Dataset, FiniteMDP, PolicyTable, evaluate_policy_exact
from .measures import transition_entropy_exact

HOMOMORPHISM_ATOL = 1e-10


@dataclass(frozen=True, eq=False)
class Homomorphism:
    phi: np.ndarray
    psi: np.ndarray
    ground: FiniteMDP
    abstract_mdp: FiniteMDP

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.int64)
        psi = np.asarray(self.psi, dtype=np.int64)
        if phi.shape != (self.ground.n_states,):
            raise ValueError("phi needs one entry per ground state")
        if psi.shape != (self.ground.n_states, self.ground.n_actions):
            raise ValueError("psi needs shape (ground states, ground actions)")
        if phi.min() < 0 or phi.max() >= self.abstract_mdp.n_states:
            raise ValueError("phi maps outside the abstract state space")
        if psi.min() < 0 or psi.max() >= self.abstract_mdp.n_actions:
            raise ValueError("psi maps outside the abstract action space")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def identity(cls, mdp):
        psi = np.tile(np.arange(mdp.n_actions), (mdp.n_states, 1))
        return cls(np.arange(mdp.n_states), psi, mdp, mdp)

    @classmethod
    def from_transform(cls, transformed, source, record):
        """Homomorphism from a transformed MDP onto the MDP it was derived from."""
        if record.phi is None:
            raise ValueError(f"transform {record.kind!r} is not a homomorphism")
        return cls(record.phi, record.psi, transformed, source)

    def is_surjective(self):
        if np.unique(self.phi).size != self.abstract_mdp.n_states:
            return False
        A = self.abstract_mdp.n_actions
        return all(np.unique(row).size == A for row in self.psi)

    def to_json(self, abstract_env=None):
        return json.dumps({
            "phi": self.phi.tolist(),
            "psi": self.psi.tolist(),
            "abstract_env": abstract_env or self.abstract_mdp.name,
        })

    @classmethod
    def from_json(cls, text, ground, abstract_mdp):
        obj = json.loads(text)
        return cls(obj["phi"], obj["psi"], ground, abstract_mdp)


@dataclass(frozen=True)
class Violation:
    condition: str  # "state", "reward", "terminal"
    s: int
    a: int
    s_next: int
    reward: float | None
    expected: float
    actual: float


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.valid


def _reward_index_map(ground, abstract):
    lookup = {float(v): k for k, v in enumerate(abstract.rewards)}
    return np.array([lookup.get(float(v), -1) for v in ground.rewards])


def validate_homomorphism(h: Homomorphism, atol=HOMOMORPHISM_ATOL) -> ValidationReport:
    """Check the aggregation conditions for every ground (s, a, s', r).

    * state: p_hat(phi(s') | phi(s), psi_s(a)) equals the ground mass of
      phi's preimage of phi(s');
    * reward: p_hat(r | phi(s), psi_s(a), phi(s')) equals p(r | s, a, s')
      wherever p(s' | s, a) > 0;
    * terminal flags agree along phi.
    """
    if not h.is_surjective():
        raise ValueError("abstraction maps must be surjective")
    g, ab = h.ground, h.abstract_mdp
    phi, psi = h.phi, h.psi
    ridx = _reward_index_map(g, ab)
    p_g = g.state_dynamics
    p_ab = ab.state_dynamics
    violations = []

    for s in range(g.n_states):
        if g.terminal[s] != ab.terminal[phi[s]]:
            violations.append(Violation("terminal", s, -1, -1, None,
                                        float(ab.terminal[phi[s]]), float(g.terminal[s])))
        for a in range(g.n_actions):
            hs, ha = phi[s], psi[s, a]
            for s2 in range(g.n_states):
                hs2 = phi[s2]
                mass = p_g[s, a, phi == hs2].sum()
                if abs(p_ab[hs, ha, hs2] - mass) > atol:
                    violations.append(Violation("state", s, a, s2, None,
                                                float(p_ab[hs, ha, hs2]), float(mass)))
                if p_g[s, a, s2] <= 0:
                    continue
                cond_g = g.dynamics[s, a, s2] / p_g[s, a, s2]
                denom = p_ab[hs, ha, hs2]
                cond_ab = ab.dynamics[hs, ha, hs2] / denom if denom > 0 else np.zeros(ab.rewards.size)
                for k, w in enumerate(cond_g):
                    expected = cond_ab[ridx[k]] if ridx[k] >= 0 else 0.0
                    if abs(expected - w) > atol:
                        violations.append(Violation("reward", s, a, s2, float(g.rewards[k]),
                                                    float(expected), float(w)))
                for k in range(ab.rewards.size):
                    if k not in ridx and cond_ab[k] > atol:
                        violations.append(Violation("reward", s, a, s2, float(ab.rewards[k]),
                                                    float(cond_ab[k]), 0.0))
    return ValidationReport(not violations, violations)


def quotient_mdp(ground: FiniteMDP, phi, psi, atol=HOMOMORPHISM_ATOL):
    """Aggregate ground dynamics into the abstract MDP induced by (phi, psi).

    Raises ValueError when the aggregate is not well defined, i.e. ground pairs
    in the same abstract class disagree, or when reward conditionals differ
    across next states that share an abstract image.
    """
    phi, psi = np.asarray(phi), np.asarray(psi)
    S_hat, A_hat = phi.max() + 1, psi.max() + 1
    R = ground.rewards.size
    onehot = np.zeros((ground.n_states, S_hat))
    onehot[np.arange(ground.n_states), phi] = 1.0
    agg = np.einsum("sakr,kh->sahr", ground.dynamics, onehot)

    # reward conditionals must not depend on which preimage state was hit
    p_sn = ground.state_dynamics
    for s in range(ground.n_states):
        for a in range(ground.n_actions):
            hit = np.flatnonzero(p_sn[s, a] > 0)
            for s2 in hit:
                ref = agg[s, a, phi[s2]] / agg[s, a, phi[s2]].sum()
                cond = ground.dynamics[s, a, s2] / p_sn[s, a, s2]
                if np.abs(ref - cond).max() > atol:
                    raise ValueError("reward conditionals differ within an abstract state")

    dyn = np.full((S_hat, A_hat, S_hat, R), np.nan)
    terminal = np.zeros(S_hat, dtype=bool)
    for s in range(ground.n_states):
        terminal[phi[s]] |= ground.terminal[s]
        for a in range(ground.n_actions):
            cell = dyn[phi[s], psi[s, a]]
            if np.isnan(cell).all():
                dyn[phi[s], psi[s, a]] = agg[s, a]
            elif np.abs(cell - agg[s, a]).max() > atol:
                raise ValueError(f"ground pair ({s}, {a}) disagrees with its abstract class")
    if np.isnan(dyn).any():
        raise ValueError("abstraction maps are not surjective")
    for s in range(ground.n_states):
        if terminal[phi[s]] != ground.terminal[s]:
            raise ValueError("terminal flags are not constant on abstract states")
    init = onehot.T @ ground.initial_dist
    return FiniteMDP(ground.rewards, dyn, init, terminal, gamma=ground.gamma,
                     horizon=ground.horizon, name=f"quotient({ground.name})")


def mdps_close(a: FiniteMDP, b: FiniteMDP, atol=HOMOMORPHISM_ATOL, check_initial=False):
    """Entrywise comparison of two MDPs' dynamics, matching rewards by value."""
    if (a.n_states, a.n_actions) != (b.n_states, b.n_actions):
        return False
    if not np.array_equal(a.terminal, b.terminal):
        return False
    values = np.union1d(a.rewards, b.rewards)

    def expand(m):
        out = np.zeros(m.dynamics.shape[:3] + (values.size,))
        out[..., np.searchsorted(values, m.rewards)] = m.dynamics
        return out

    if np.abs(expand(a) - expand(b)).max() > atol:
        return False
    return not check_initial or np.abs(a.initial_dist - b.initial_dist).max() <= atol


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class LiftedPolicy:
    abstract_policy: PolicyTable
    ground_policy: PolicyTable
    split_rule: str


def lift_policy(h: Homomorphism, abstract_policy: PolicyTable, split_rule="uniform") -> LiftedPolicy:
    """Ground policy whose pushforward through (phi, psi) is ``abstract_policy``.

    The mass of abstract action ``b`` in state ``s`` is spread over
    ``psi[s]``'s preimage of ``b``: evenly (``"uniform"``) or entirely on the
    lowest-numbered ground action (``"first"``).
    """
    if split_rule not in ("uniform", "first"):
        raise ValueError("split_rule must be 'uniform' or 'first'")
    if abstract_policy.probs.shape != (h.abstract_mdp.n_states, h.abstract_mdp.n_actions):
        raise ValueError("abstract policy does not match the abstract MDP")
    g = h.ground
    probs = np.zeros((g.n_states, g.n_actions))
    for s in range(g.n_states):
        row = abstract_policy.probs[h.phi[s]]
        for b in range(h.abstract_mdp.n_actions):
            pre = np.flatnonzero(h.psi[s] == b)
            if pre.size == 0:
                raise ValueError(f"abstract action {b} has no preimage in ground state {s}")
            if split_rule == "uniform":
                probs[s, pre] = row[b] / pre.size
            else:
                probs[s, pre[0]] = row[b]
    return LiftedPolicy(abstract_policy, PolicyTable(probs), split_rule)


def pushforward_policy(h: Homomorphism, ground_policy: PolicyTable, atol=1e-12) -> PolicyTable:
    """Abstract policy induced by a ground policy; must agree across preimages."""
    A_hat = h.abstract_mdp.n_actions
    out = np.full((h.abstract_mdp.n_states, A_hat), np.nan)
    for s in range(h.ground.n_states):
        row = np.bincount(h.psi[s], weights=ground_policy.probs[s], minlength=A_hat)
        prev = out[h.phi[s]]
        if np.isnan(prev).all():
            out[h.phi[s]] = row
        elif np.abs(prev - row).max() > atol:
            raise ValueError(f"ground state {s} pushes forward to a different abstract row")
    return PolicyTable(out)


# ---------------------------------------------------------------------------
# theory checks


def _check_pair(h1, h2):
    if not mdps_close(h1.abstract_mdp, h2.abstract_mdp, check_initial=True):
        raise ValueError("homomorphisms do not share the same abstract MDP")
    for h in (h1, h2):
        pushed = np.bincount(h.phi, weights=h.ground.initial_dist,
                             minlength=h.abstract_mdp.n_states)
        if np.abs(pushed - h.abstract_mdp.initial_dist).max() > HOMOMORPHISM_ATOL:
            raise ValueError("ground initial distribution does not push forward to the abstract one")


@dataclass(frozen=True)
class ReturnReport:
    g_ground: float
    g_other: float
    g_abstract: float
    difference: float
    equal: bool


def check_return_preservation(h1, h2, abstract_policy, split_rule="uniform", atol=1e-9,
                              gamma=None) -> ReturnReport:
    """Exact returns of the two lifted ground policies must coincide."""
    _check_pair(h1, h2)
    pi1 = lift_policy(h1, abstract_policy, split_rule).ground_policy
    pi2 = lift_policy(h2, abstract_policy, split_rule).ground_policy
    g1 = evaluate_policy_exact(h1.ground, pi1, gamma)
    g2 = evaluate_policy_exact(h2.ground, pi2, gamma)
    g_hat = evaluate_policy_exact(h1.abstract_mdp, abstract_policy, gamma)
    diff = abs(g1 - g2)
    return ReturnReport(g1, g2, g_hat, diff, diff <= atol)


@dataclass(frozen=True)
class EntropyBoundReport:
    h_ground: float
    h_other: float
    h_abstract: float
    lower_bound_ground: bool
    lower_bound_other: bool
    difference_bound: bool
    slack: float

    @property
    def holds(self):
        return self.lower_bound_ground and self.lower_bound_other and self.difference_bound


def check_entropy_bounds(h1, h2, abstract_policy, split_rule="uniform",
                         atol=HOMOMORPHISM_ATOL) -> EntropyBoundReport:
    """Abstract entropy lower-bounds both images; their gap obeys the max bound.

    ``slack`` is ``max(H, H~) - H^ - |H - H~|`` (nonnegative when the bound holds).
    """
    _check_pair(h1, h2)
    pi1 = lift_policy(h1, abstract_policy, split_rule).ground_policy
    pi2 = lift_policy(h2, abstract_policy, split_rule).ground_policy
    H1 = transition_entropy_exact(h1.ground, pi1)
    H2 = transition_entropy_exact(h2.ground, pi2)
    Hh = transition_entropy_exact(h1.abstract_mdp, abstract_policy)
    slack = max(H1, H2) - Hh - abs(H1 - H2)
    return EntropyBoundReport(
        H1, H2, Hh,
        lower_bound_ground=H1 >= Hh - atol,
        lower_bound_other=H2 >= Hh - atol,
        difference_bound=slack >= -atol,
        slack=slack,
    )


def map_dataset(ds: Dataset, h: Homomorphism) -> Dataset:
    """Push a ground dataset through (phi, psi) onto the abstract MDP."""
    return Dataset.from_arrays(
        ds.ep, ds.t, h.phi[ds.s], h.psi[ds.s, ds.a], ds.r, h.phi[ds.sn], ds.d,
        env=h.abstract_mdp.name, scheme=ds.manifest.scheme, seed=ds.manifest.seed,
        n_states=h.abstract_mdp.n_states, n_actions=h.abstract_mdp.n_actions,
        gamma=ds.manifest.gamma,
    )


# ---------------------------------------------------------------------------
# random homomorphisms


def random_homomorphism(abstract: FiniteMDP, rng=None, max_state_copies=3,
                        n_ground_actions=None) -> Homomorphism:
    """Random ground MDP that is a homomorphic image of ``abstract`` by construction.

    Each abstract state gets 1..``max_state_copies`` ground copies, each
    ground state a random surjection of ``n_ground_actions`` actions onto the
    abstract ones. Abstract next-state mass is split over the preimage with
    random Dirichlet weights, reward conditionals are copied, and initial mass
    is split randomly over preimages.
    """
    rng = check_rng(rng)
    S_hat, A_hat = abstract.n_states, abstract.n_actions
    A = n_ground_actions or A_hat + int(rng.integers(0, 2))
    if A < A_hat:
        raise ValueError("ground needs at least as many actions as the abstract MDP")
    copies = rng.integers(1, max_state_copies + 1, size=S_hat)
    phi = np.repeat(np.arange(S_hat), copies)
    S = phi.size
    psi = np.empty((S, A), dtype=np.int64)
    for s in range(S):
        psi[s] = rng.permutation(np.concatenate([np.arange(A_hat),
                                                 rng.integers(0, A_hat, A - A_hat)]))
    p = np.zeros((S, A, S, abstract.rewards.size))
    terminal = abstract.terminal[phi]
    for s in range(S):
        for a in range(A):
            hs, ha = phi[s], psi[s, a]
            if terminal[s]:
                p[s, a, s] = abstract.dynamics[hs, ha, hs]
                continue
            for hs2 in range(S_hat):
                block = abstract.dynamics[hs, ha, hs2]
                if block.sum() == 0:
                    continue
                pre = np.flatnonzero(phi == hs2)
                w = rng.dirichlet(np.ones(pre.size))
                p[s, a, pre] = w[:, None] * block[None, :]
    init = np.zeros(S)
    for hs in range(S_hat):
        pre = np.flatnonzero(phi == hs)
        init[pre] = abstract.initial_dist[hs] * rng.dirichlet(np.ones(pre.size))
    ground = FiniteMDP(abstract.rewards, p, init, terminal, gamma=abstract.gamma,
                       horizon=abstract.horizon, name=f"image({abstract.name})")
    return Homomorphism(phi, psi, ground, abstract)
