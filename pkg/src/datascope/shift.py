"""Empirical transition-distribution factors and domain-shift classification.

A dataset's joint ``p(s, a, r, s')`` factors as reward dynamics
``p(r | s, a, s')`` times state dynamics ``p(s' | s, a)`` times the behavior
policy ``pi(a | s)`` times the state occupancy ``rho(s)``. Two datasets are
compared factor by factor with total-variation distances, each conditional
weighted by the averaged occupancy of the two datasets and restricted to
the support both of them observed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._validation import check_dataset
from .core import Dataset

DEFAULT_THRESHOLD = 0.05
FACTORS = ("reward", "state_dyn", "policy", "occupancy")
_LABELS = {
    "reward": "reward-dynamics",
    "state_dyn": "state-dynamics",
    "policy": "policy",
    "occupancy": "occupancy",
}


class IncomparableError(ValueError):
    """The two datasets share no state-action pair."""


def _cond(counts):
    total = counts.sum(axis=-1, keepdims=True)
    return np.divide(counts, total, out=np.zeros(counts.shape), where=total > 0)


@dataclass(frozen=True, eq=False)
class FactorEstimates:
    """Count-based maximum-likelihood factors of one dataset.

    ``counts[s, a, s', k]`` counts rows with reward ``rewards[k]``.
    Conditionals are zero outside their observed support.
    """

    rewards: np.ndarray
    counts: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def reward_dynamics(self):
        return _cond(self.counts)

    @property
    def state_dynamics(self):
        return _cond(self.counts.sum(axis=3))

    @property
    def policy(self):
        return _cond(self.counts.sum(axis=(2, 3)))

    @property
    def state_occupancy(self):
        c = self.counts.sum(axis=(1, 2, 3))
        return c / c.sum()

    @property
    def state_support(self):
        return self.counts.sum(axis=(1, 2, 3)) > 0

    @property
    def sa_support(self):
        return self.counts.sum(axis=(2, 3)) > 0

    @property
    def sas_support(self):
        return self.counts.sum(axis=3) > 0

    def empirical_joint(self):
        return self.counts / self.counts.sum()

    def recompose(self):
        """Product of the four factors, shape (S, A, S', R)."""
        return (
            self.state_occupancy[:, None, None, None]
            * self.policy[:, :, None, None]
            * self.state_dynamics[:, :, :, None]
            * self.reward_dynamics
        )

    def aligned(self, n_states, n_actions, rewards):
        """Same counts embedded in larger state/action spaces and a reward superset."""
        S, A, _, _ = self.counts.shape
        out = np.zeros((n_states, n_actions, n_states, rewards.size))
        cols = np.searchsorted(rewards, self.rewards)
        out[:S, :A, :S][..., cols] = self.counts
        return FactorEstimates(rewards, out)


def estimate_factors(ds: Dataset, n_states=None, n_actions=None) -> FactorEstimates:
    check_dataset(ds)
    S = n_states or ds.manifest.n_states or int(max(ds.s.max(), ds.sn.max())) + 1
    A = n_actions or ds.manifest.n_actions or int(ds.a.max()) + 1
    rewards, k = np.unique(ds.r, return_inverse=True)
    counts = np.zeros((S, A, S, rewards.size))
    np.add.at(counts, (ds.s, ds.a, ds.sn, k), 1.0)
    return FactorEstimates(rewards, counts)


def _tv(p, q, axis=-1):
    return 0.5 * np.abs(p - q).sum(axis=axis)


def _weighted(tv, weight, mask):
    w = np.where(mask, weight, 0.0)
    total = w.sum()
    if total == 0:
        return float("nan")
    return float(np.clip((np.where(mask, tv, 0.0) * w).sum() / total, 0.0, 1.0))


@dataclass(frozen=True)
class ShiftReport:
    tv_reward: float
    tv_state_dyn: float
    tv_policy: float
    tv_occupancy: float
    threshold: float
    shared_states: int
    shared_pairs: int

    @property
    def flags(self):
        return {
            f: bool(np.isfinite(v) and v > self.threshold)
            for f, v in zip(FACTORS, (self.tv_reward, self.tv_state_dyn, self.tv_policy,
                                      self.tv_occupancy))
        }

    @property
    def label(self):
        """``none``, a single factor, ``general`` (all three conditionals) or a '+'-list."""
        on = [f for f, v in self.flags.items() if v]
        if not on:
            return "none"
        if {"reward", "state_dyn", "policy"} <= set(on):
            return "general"
        return "+".join(_LABELS[f] for f in on)

    def to_dict(self):
        return {
            "tv_reward": self.tv_reward,
            "tv_state_dyn": self.tv_state_dyn,
            "tv_policy": self.tv_policy,
            "tv_occupancy": self.tv_occupancy,
            "threshold": self.threshold,
            "flags": self.flags,
            "label": self.label,
            "shared_states": self.shared_states,
            "shared_pairs": self.shared_pairs,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), allow_nan=True)


def compare(a: FactorEstimates, b: FactorEstimates, threshold=DEFAULT_THRESHOLD) -> ShiftReport:
    """Per-factor occupancy-weighted TV distances between two datasets.

    The occupancy TV covers all states; the conditional TVs only cover states,
    pairs and triples observed in both datasets. A factor without shared
    support (e.g. no common (s, a, s')) reports NaN and is not flagged.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    S = max(a.counts.shape[0], b.counts.shape[0])
    A = max(a.counts.shape[1], b.counts.shape[1])
    rewards = np.union1d(a.rewards, b.rewards)
    a, b = a.aligned(S, A, rewards), b.aligned(S, A, rewards)

    shared_sa = a.sa_support & b.sa_support
    if not shared_sa.any():
        raise IncomparableError("datasets share no state-action pair; shift is undefined")
    shared_s = a.state_support & b.state_support
    shared_sas = a.sas_support & b.sas_support

    rho = 0.5 * (a.state_occupancy + b.state_occupancy)
    pi = 0.5 * (a.policy + b.policy)
    p_sn = 0.5 * (a.state_dynamics + b.state_dynamics)
    w_sa = rho[:, None] * pi
    w_sas = w_sa[:, :, None] * p_sn

    return ShiftReport(
        tv_reward=_weighted(_tv(a.reward_dynamics, b.reward_dynamics), w_sas, shared_sas),
        tv_state_dyn=_weighted(_tv(a.state_dynamics, b.state_dynamics), w_sa, shared_sa),
        tv_policy=_weighted(_tv(a.policy, b.policy), rho, shared_s),
        tv_occupancy=float(_tv(a.state_occupancy, b.state_occupancy)),
        threshold=float(threshold),
        shared_states=int(shared_s.sum()),
        shared_pairs=int(shared_sa.sum()),
    )
