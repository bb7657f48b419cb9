"""Firm-level productivity shocks and their aggregate footprint.

A shock panel holds one growth-rate realization per firm and period.
Aggregate volatility weighs each firm's sample variance by its squared
influence; variance shares split that total across a partition of firms,
which is how the contribution of an aggregated remainder node is measured
against the firms kept in a test network.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    OverlappingPartitionError,
    PartitionError,
    SizeMismatchError,
    ZeroDenominatorError,
)

__all__ = [
    "DEFAULT_PERIODS",
    "DEFAULT_SHOCK_SD",
    "draw_shock_panel",
    "proxied_panel",
    "firm_variances",
    "aggregate_volatility",
    "variance_shares",
]

DEFAULT_PERIODS = 10
# Standard deviation of period growth shocks, in percent.
DEFAULT_SHOCK_SD = 6.0


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_shock_panel(n_firms: int, n_periods: int = DEFAULT_PERIODS,
                     sd: float = DEFAULT_SHOCK_SD, seed=0) -> np.ndarray:
    """Draw an (n_firms, n_periods) panel of i.i.d. normal growth shocks."""
    if n_firms <= 0 or n_periods < 2:
        raise ValueError("need at least one firm and two periods")
    if not sd > 0:
        raise ValueError(f"shock standard deviation must be positive, got {sd}")
    return _as_rng(seed).normal(0.0, sd, size=(n_firms, n_periods))


def proxied_panel(panel: np.ndarray, kept_ids: np.ndarray,
                  mode: str = "pointwise") -> np.ndarray:
    """Shock rows for a test network: kept firms, then their aggregate.

    The appended last row stands in for the firms folded into the remainder
    node.  With ``mode="pointwise"`` it is the per-period median of their
    shocks; averaging across many independent firms concentrates that series
    near zero, so the remainder carries almost no variance.  With
    ``mode="typical"`` it is the whole series of the excluded firm whose
    sample volatility is the median one, keeping the remainder's variance at
    the scale of a single firm.  Even counts take the lower middle, ties the
    lower firm id.
    """
    panel = np.asarray(panel, dtype=np.float64)
    kept_ids = np.asarray(kept_ids, dtype=np.int64)
    excluded = np.setdiff1d(np.arange(panel.shape[0]), kept_ids)
    if excluded.size == 0:
        raise PartitionError("no excluded firms to fold into a remainder row")
    if mode == "pointwise":
        tail = np.median(panel[excluded], axis=0)
    elif mode == "typical":
        sds = panel[excluded].std(axis=1, ddof=1)
        pick = excluded[np.argsort(sds, kind="stable")[(excluded.size - 1) // 2]]
        tail = panel[pick]
    else:
        raise ValueError(f"mode must be 'pointwise' or 'typical', got {mode!r}")
    return np.vstack([panel[kept_ids], tail[None, :]])


def firm_variances(panel: np.ndarray) -> np.ndarray:
    """Unbiased per-firm sample variance across periods."""
    panel = np.asarray(panel, dtype=np.float64)
    if panel.ndim != 2 or panel.shape[1] < 2:
        raise SizeMismatchError("panel must be 2-d with at least two periods")
    return panel.var(axis=1, ddof=1)


def aggregate_volatility(variances: np.ndarray, influence: np.ndarray) -> float:
    """Economy-wide volatility: sqrt of influence-squared-weighted variance."""
    variances = np.asarray(variances, dtype=np.float64)
    influence = np.asarray(influence, dtype=np.float64)
    if variances.shape != influence.shape:
        raise SizeMismatchError(
            f"{variances.size} variances vs {influence.size} influence entries")
    return float(np.sqrt(np.sum(variances * influence ** 2)))


def variance_shares(variances: np.ndarray, influence: np.ndarray,
                    partition: dict[str, np.ndarray]) -> dict[str, float]:
    """Share of aggregate variance carried by each block of a partition.

    Blocks must be disjoint and jointly cover every firm.  Shares sum to
    one up to rounding.
    """
    variances = np.asarray(variances, dtype=np.float64)
    influence = np.asarray(influence, dtype=np.float64)
    if variances.shape != influence.shape:
        raise SizeMismatchError(
            f"{variances.size} variances vs {influence.size} influence entries")
    n = variances.size
    seen = np.zeros(n, dtype=np.int64)
    for name, ids in partition.items():
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise PartitionError(f"block {name!r} names firms outside 0..{n - 1}")
        seen[ids] += 1
    if (seen > 1).any():
        raise OverlappingPartitionError(
            f"{int((seen > 1).sum())} firms appear in more than one block")
    if (seen == 0).any():
        raise PartitionError(f"{int((seen == 0).sum())} firms are in no block")
    contrib = variances * influence ** 2
    total = float(contrib.sum())
    if total <= 0.0:
        raise ZeroDenominatorError("aggregate variance is zero; shares undefined")
    return {name: float(contrib[np.asarray(ids, dtype=np.int64)].sum()) / total
            for name, ids in partition.items()}
