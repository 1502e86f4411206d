"""Exploration and exploitation measures for policies and datasets.

Theoretical side: transition-entropy of a policy acting in a finite MDP and
its occupancy-entropy special case. Empirical side: trajectory quality (TQ),
state-action coverage (SACo), its log variant, and the plug-in entropy ratio,
all normalized by reference datasets/returns.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset, check_policy, check_positive_int
from .core import (
    Dataset,
    FiniteMDP,
    OccupancyTable,
    PolicyTable,
    average_trajectory_return,
    occupancy_exact,
)
from .sketch import DEFAULT_PRECISION, exact_unique_count, hll_count

FACTORIZATION_ATOL = 1e-10


class NumericalValidationError(AssertionError):
    """Two independent computations of the same quantity disagree."""


def entropy(p) -> float:
    """Shannon entropy (nats) of the positive entries of ``p``."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def dynamics_entropy(mdp: FiniteMDP) -> np.ndarray:
    """H(p(r, s' | s, a)) for every state-action pair, shape (S, A)."""
    flat = mdp.dynamics.reshape(mdp.n_states, mdp.n_actions, -1)
    logs = np.log(np.where(flat > 0, flat, 1.0))
    return -(flat * logs).sum(axis=2)


def transition_entropy_exact(mdp: FiniteMDP, policy: PolicyTable, check=True) -> float:
    """Entropy of the joint distribution over (s, a, r, s') induced by ``policy``.

    The joint is formed explicitly from the exact occupancy and the dynamics.
    With ``check`` it is compared against the occupancy-weighted dynamics
    entropy plus the occupancy entropy; a mismatch above 1e-10 raises
    :class:`NumericalValidationError`.
    """
    check_policy(policy, mdp)
    rho = occupancy_exact(mdp, policy).rho
    joint = rho[:, :, None, None] * mdp.dynamics
    direct = entropy(joint)
    if check:
        factorized = float((rho * dynamics_entropy(mdp)).sum()) + entropy(rho)
        if abs(direct - factorized) > FACTORIZATION_ATOL:
            raise NumericalValidationError(
                f"joint entropy {direct!r} != factorized form {factorized!r}"
            )
    return direct


def transition_entropy_factorized(mdp: FiniteMDP, policy: PolicyTable) -> float:
    rho = occupancy_exact(mdp, policy).rho
    return float((rho * dynamics_entropy(mdp)).sum()) + entropy(rho)


def occupancy_entropy(rho) -> float:
    """-sum rho log rho over a normalized occupancy table."""
    table = rho.rho if isinstance(rho, OccupancyTable) else np.asarray(rho, dtype=float)
    if np.any(table < 0) or abs(table.sum() - 1.0) > 1e-10:
        raise ValueError("occupancy must be nonnegative and sum to 1")
    return entropy(table)


# ---------------------------------------------------------------------------
# dataset measures


def _normalize(value, low, high, what):
    if not high > low:
        raise ValueError(f"{what}: expert return {high} must exceed minimum return {low}")
    return (value - low) / (high - low)


def tq(ds, d_min_return, d_expert_return, gamma=1.0) -> float:
    """Trajectory quality: average return affinely scaled between two references.

    ``ds`` may be a :class:`Dataset` or an already computed average return.
    """
    g = average_trajectory_return(ds, gamma) if isinstance(ds, Dataset) else float(ds)
    return _normalize(g, float(d_min_return), float(d_expert_return), "tq")


def saco(u_ds, u_ref) -> float:
    if not u_ref > 0:
        raise ValueError("reference unique count must be positive")
    return float(u_ds) / float(u_ref)


def lsaco(u_ds, u_ref) -> float:
    if u_ds < 2 or u_ref < 2:
        raise ValueError("lsaco needs unique counts >= 2")
    return math.log(u_ds) / math.log(u_ref)


def naive_entropy(ds: Dataset) -> float:
    """Plug-in entropy of the empirical state-action frequencies."""
    check_dataset(ds)
    codes = (ds.s.astype(np.uint64) << np.uint64(32)) | ds.a.astype(np.uint64)
    _, counts = np.unique(codes, return_counts=True)
    return entropy(counts / counts.sum())


def naive_entropy_ratio(ds: Dataset, ref: Dataset) -> float:
    h_ref = naive_entropy(ref)
    if h_ref == 0:
        raise ValueError("reference dataset has zero entropy")
    return naive_entropy(ds) / h_ref


@dataclass(frozen=True)
class BiasTerms:
    z: float
    regime_k_threshold: float
    less_biased_flag: bool


def naive_bias(K, N, p) -> BiasTerms:
    """Second-order bias of the plug-in entropy estimator.

    ``z = (K - 1) / (2N) + (sum(1/p_k) - 1) / (12 N^2)`` with the O(N^-3)
    remainder dropped. ``less_biased_flag`` marks the regime
    ``K >= 2 N ln N + 1`` in which the log unique-count is at most as biased.
    """
    K = check_positive_int(K, "K")
    N = check_positive_int(N, "N", minimum=2)
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("p must be a probability vector")
    pos = p[p > 0]
    if pos.size != K:
        raise ValueError(f"p has {pos.size} positive entries, expected K={K}")
    z = (K - 1) / (2 * N) + (np.sum(1.0 / pos) - 1.0) / (12 * N * N)
    threshold = 2 * N * math.log(N) + 1
    return BiasTerms(float(z), threshold, K >= threshold)


# ---------------------------------------------------------------------------
# reports

REPORT_FIELDS = (
    "name", "tq", "saco", "lsaco", "naive_entropy_ratio", "unique_sa", "avg_return",
    "n_transitions", "ref_name", "min_name", "expert_name",
)


@dataclass(frozen=True)
class References:
    """Reference dataset for coverage plus min/expert returns for quality."""

    d_ref: Dataset
    d_min_return: float
    d_expert_return: float
    ref_name: str = "replay"
    min_name: str = "random"
    expert_name: str = "expert"


@dataclass(frozen=True)
class MeasureReport:
    tq: float
    saco: float
    lsaco: float
    naive_entropy_ratio: float
    unique_sa: float
    avg_return: float
    n_transitions: int
    references: dict = field(default_factory=dict)
    name: str = ""

    def to_dict(self):
        d = asdict(self)
        refs = d.pop("references")
        out = {"name": d.pop("name")}
        out.update(d)
        out.update(ref_name=refs.get("ref"), min_name=refs.get("min"),
                   expert_name=refs.get("expert"))
        return out

    def csv_row(self):
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [self.to_dict()[k] for k in REPORT_FIELDS]
        )
        return buf.getvalue()

    @staticmethod
    def csv_header():
        return ",".join(REPORT_FIELDS) + "\n"


def parse_counter(counter):
    """``"exact"``, ``"hll"`` or ``"hll:<p>"`` -> (kind, precision)."""
    if counter == "exact":
        return "exact", None
    if counter == "hll":
        return "hll", DEFAULT_PRECISION
    if isinstance(counter, str) and counter.startswith("hll:"):
        try:
            return "hll", int(counter[4:])
        except ValueError:
            pass
    raise ValueError(f"unknown counter {counter!r}; use 'exact' or 'hll:<p>'")


def count_unique(ds, counter="exact"):
    kind, p = parse_counter(counter)
    if kind == "exact":
        return exact_unique_count(ds)
    return hll_count(ds, p=p)


def characterize(ds: Dataset, refs: References, counter="exact", gamma=1.0,
                 name="") -> MeasureReport:
    """Full TQ / SACo / lSACo / entropy-ratio report of one dataset."""
    check_dataset(ds)
    u_ds = count_unique(ds, counter)
    u_ref = count_unique(refs.d_ref, counter)
    g = average_trajectory_return(ds, gamma)
    try:
        ls = lsaco(u_ds, u_ref)
    except ValueError:
        ls = float("nan")
    try:
        ratio = naive_entropy_ratio(ds, refs.d_ref)
    except ValueError:
        ratio = float("nan")
    return MeasureReport(
        tq=tq(g, refs.d_min_return, refs.d_expert_return),
        saco=saco(u_ds, u_ref),
        lsaco=ls,
        naive_entropy_ratio=ratio,
        unique_sa=u_ds,
        avg_return=g,
        n_transitions=len(ds),
        references={"ref": refs.ref_name, "min": refs.min_name, "expert": refs.expert_name},
        name=name,
    )


class DatasetCharacterizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`characterize`.

    ``fit`` takes the reference dataset; ``transform`` maps a sequence of
    datasets to rows ``[tq, saco, lsaco, naive_entropy_ratio]``.

    Parameters
    ----------
    min_return, expert_return : float
        Average returns of the minimal and expert reference datasets.
    counter : str
        ``"exact"`` or ``"hll:<p>"``.
    gamma : float
        Discount applied to dataset returns (1.0 reports undiscounted returns).
    """

    feature_names = ("tq", "saco", "lsaco", "naive_entropy_ratio")

    def __init__(self, min_return=0.0, expert_return=1.0, counter="exact", gamma=1.0):
        self.min_return = min_return
        self.expert_return = expert_return
        self.counter = counter
        self.gamma = gamma

    def fit(self, X, y=None):
        ref = X[0] if isinstance(X, (list, tuple)) else X
        check_dataset(ref)
        parse_counter(self.counter)
        if not self.expert_return > self.min_return:
            raise ValueError("expert_return must exceed min_return")
        self.references_ = References(ref, self.min_return, self.expert_return)
        self.u_ref_ = count_unique(ref, self.counter)
        return self

    def report(self, ds, name=""):
        check_is_fitted(self, "references_")
        return characterize(ds, self.references_, self.counter, self.gamma, name)

    def transform(self, X):
        check_is_fitted(self, "references_")
        if isinstance(X, Dataset):
            X = [X]
        rows = [self.report(ds) for ds in X]
        return np.array([[getattr(r, f) for f in self.feature_names] for r in rows])

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names, dtype=object)
