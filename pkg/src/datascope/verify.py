"""Numerical checks of the entropy and homomorphism invariants on random MDPs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .abstraction import (
    Homomorphism,
    check_entropy_bounds,
    check_return_preservation,
    random_homomorphism,
    validate_homomorphism,
)
from .core import occupancy_exact
from .envs import build_chain, duplicate_states, random_mdp, random_policy
from .measures import (
    entropy,
    transition_entropy_exact,
    transition_entropy_factorized,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    n: int

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.0e} n={self.n}"


def _random_sizes(rng, max_states=6, max_actions=4, max_rewards=3):
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    R = int(rng.integers(1, max_rewards + 1))
    return S, A, R


def entropy_factorization(n=100, seed=0, tol=1e-10) -> CheckResult:
    """Direct joint entropy vs occupancy-weighted dynamics entropy plus occupancy entropy."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        S, A, R = _random_sizes(rng)
        mdp = random_mdp(rng, S, A, R, n_terminal=int(rng.integers(0, 2)))
        pi = random_policy(rng, S, A)
        direct = transition_entropy_exact(mdp, pi, check=False)
        worst = max(worst, abs(direct - transition_entropy_factorized(mdp, pi)))
    return CheckResult("entropy factorization", worst <= tol, worst, tol, n)


def deterministic_collapse(n=100, seed=1, tol=1e-12) -> CheckResult:
    """On deterministic MDPs the transition-entropy equals the occupancy entropy."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        S, A, R = _random_sizes(rng)
        mdp = random_mdp(rng, S, A, R, deterministic=True, n_terminal=int(rng.integers(0, 2)))
        pi = random_policy(rng, S, A)
        h = transition_entropy_exact(mdp, pi, check=False)
        worst = max(worst, abs(h - entropy(occupancy_exact(mdp, pi).rho)))
    return CheckResult("deterministic collapse", worst <= tol, worst, tol, n)


def homomorphism_suite(n=100, seed=2, tol=1e-10, return_tol=1e-9):
    """Abstract-entropy lower bound, max-difference bound and return equality on random image pairs."""
    rng = np.random.default_rng(seed)
    lower = diff = ret = valid = 0.0
    for _ in range(n):
        S, A, R = _random_sizes(rng, max_states=4, max_actions=3)
        abstract = random_mdp(rng, S, A, R, n_terminal=int(rng.integers(0, 2)))
        h1 = random_homomorphism(abstract, rng)
        h2 = random_homomorphism(abstract, rng)
        for h in (h1, h2):
            valid = max(valid, float(not validate_homomorphism(h).valid))
        pi_hat = random_policy(rng, S, A, deterministic=bool(rng.integers(0, 2)))
        eb = check_entropy_bounds(h1, h2, pi_hat)
        lower = max(lower, eb.h_abstract - eb.h_ground, eb.h_abstract - eb.h_other, 0.0)
        diff = max(diff, -eb.slack, 0.0)
        ret = max(ret, check_return_preservation(h1, h2, pi_hat).difference)
    return [
        CheckResult("generated images validate", valid == 0.0, valid, 0.0, 2 * n),
        CheckResult("abstract entropy lower bound", lower <= tol, lower, tol, n),
        CheckResult("image entropy-difference bound", diff <= tol, diff, tol, n),
        CheckResult("return preservation", ret <= return_tol, ret, return_tol, n),
    ]


def duplicate_gap(tol=1e-10) -> CheckResult:
    """Full 2-way duplication with uniform splitting adds exactly ln 2 of entropy."""
    from .abstraction import lift_policy
    from .core import PolicyTable

    base = build_chain(5, noise=0.2)
    dup, rec = duplicate_states(base, 2)
    h = Homomorphism.from_transform(dup, base, rec)
    pi_hat = PolicyTable(np.tile([0.3, 0.7], (base.n_states, 1)))
    pi = lift_policy(h, pi_hat).ground_policy
    gap = transition_entropy_exact(dup, pi) - transition_entropy_exact(base, pi_hat)
    err = abs(gap - math.log(2))
    return CheckResult("duplicate-states gap equals ln 2", err <= tol, err, tol, 1)


def run_all(n=100, seed=0):
    return [
        entropy_factorization(n, seed),
        deterministic_collapse(n, seed + 1),
        *homomorphism_suite(n, seed + 2),
        duplicate_gap(),
    ]
