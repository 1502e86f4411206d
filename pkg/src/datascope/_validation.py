"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numbers

import numpy as np


class DataFormatError(ValueError):
    """Raised for malformed dataset files or inconsistent dataset contents."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def check_rng(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts None, an int, a SeedSequence or an existing Generator (returned
    unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_probability_vector(p, name="p", atol=1e-12):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1 + atol):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {p.sum():.15g})")
    return p


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_unit_interval(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_policy(policy, mdp):
    """Ensure a policy table matches the state/action dimensions of ``mdp``."""
    probs = policy.probs if hasattr(policy, "probs") else np.asarray(policy)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy has shape {probs.shape}, MDP expects "
            f"({mdp.n_states}, {mdp.n_actions})"
        )
    return policy


def check_dataset(ds, allow_empty=False):
    from .core import Dataset

    if not isinstance(ds, Dataset):
        raise TypeError(f"expected a Dataset, got {type(ds).__name__}")
    if not allow_empty and len(ds) == 0:
        raise ValueError("dataset is empty")
    return ds
