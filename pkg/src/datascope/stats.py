"""Pearson and Spearman correlation tables with p-values.

For small samples the p-value comes from a permutation test (exact
enumeration while ``n!`` fits in the resample budget, otherwise a seeded
Monte-Carlo permutation); larger samples use the usual t approximation.
Degenerate inputs produce a row with null statistics and a reason.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

PERMUTATION_MAX_N = 20
N_RESAMPLES = 40_320  # 8!, so n <= 8 is enumerated exactly


@dataclass(frozen=True)
class CorrelationRow:
    x: str
    y: str
    n: int
    pearson_r: float | None
    pearson_p: float | None
    spearman_rho: float | None
    spearman_p: float | None
    p_method: str | None
    null_reason: str | None = None

    def to_dict(self):
        return asdict(self)


def _row_pearson(xs, y):
    xc = xs - xs.mean(axis=-1, keepdims=True)
    yc = y - y.mean()
    return (xc * yc).sum(axis=-1) / np.sqrt((xc * xc).sum(axis=-1) * (yc * yc).sum())


def _permutation_p(x, y, rank, seed):
    """Two-sided permutation p-value of Pearson r (on ranks when ``rank``)."""
    if rank:
        x, y = stats.rankdata(x), stats.rankdata(y)

    def stat(xp, axis=-1):
        return _row_pearson(np.moveaxis(xp, axis, -1), y)

    kwargs = dict(permutation_type="pairings", n_resamples=N_RESAMPLES,
                  alternative="two-sided", vectorized=True)
    try:
        res = stats.permutation_test((x,), stat, rng=seed, **kwargs)
    except TypeError:  # scipy < 1.15
        res = stats.permutation_test((x,), stat, random_state=seed, **kwargs)
    return float(min(1.0, res.pvalue))


def correlate(x, y, x_name="x", y_name="y", seed=0) -> CorrelationRow:
    """Correlation of two columns; rows where either value is NaN are dropped."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("columns must be 1-d and of equal length")
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    n = int(x.size)

    def null(reason):
        return CorrelationRow(x_name, y_name, n, None, None, None, None, None, reason)

    if n < 3:
        return null("fewer than 3 paired observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return null(f"constant column: {x_name if np.ptp(x) == 0 else y_name}")

    r = float(np.clip(stats.pearsonr(x, y).statistic, -1.0, 1.0))
    rho = float(np.clip(stats.spearmanr(x, y).statistic, -1.0, 1.0))
    if n <= PERMUTATION_MAX_N:
        method = "exact-permutation" if math.factorial(n) <= N_RESAMPLES else "mc-permutation"
        p_r = _permutation_p(x, y, False, seed)
        p_rho = _permutation_p(x, y, True, seed)
    else:
        method = "t-approximation"
        p_r = float(stats.pearsonr(x, y).pvalue)
        p_rho = float(stats.spearmanr(x, y).pvalue)
    return CorrelationRow(x_name, y_name, n, r, p_r, rho, p_rho, method)


FIELDS = tuple(CorrelationRow.__dataclass_fields__)


@dataclass(frozen=True)
class CorrelationTable:
    rows: tuple

    def lookup(self, x, y) -> CorrelationRow:
        for row in self.rows:
            if row.x == x and row.y == y:
                return row
        raise KeyError((x, y))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELDS)
        for row in self.rows:
            w.writerow(["" if v is None else v for v in (getattr(row, f) for f in FIELDS)])
        return buf.getvalue()

    def to_json(self):
        return json.dumps([r.to_dict() for r in self.rows], indent=2)


def correlation_table(columns: dict, xs, ys, seed=0) -> CorrelationTable:
    """Correlate every column named in ``xs`` with every column named in ``ys``."""
    rows = [correlate(columns[x], columns[y], x, y, seed) for x in xs for y in ys]
    return CorrelationTable(tuple(rows))
