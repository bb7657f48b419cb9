"""Harmonizing firm financial statements into production accounts.

Raw filings report revenue, cost of goods sold, and sometimes a wage bill.
Turning them into network-ready accounts takes four moves: estimate the
labour share of costs where wages are undisclosed, split the merged cost
pool, derive value added, and impute final demand and capital formation
from sector ratios.  A final cleaning pass repairs the most common filing
defect (labour counted in both costs and value added) and drops what still
violates the accounting identity.

Panels are pandas frames with one row per firm and fiscal year, columns
``firm, year, sector, revenue, cogs, labour, ebit, depamort``; ``labour``
is NaN where undisclosed, and ``cogs`` excludes the wage bill whenever one
is disclosed separately.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import (
    EmptyInputError,
    EmptySectorWindowError,
    RatioOutOfRangeError,
    SizeMismatchError,
    UncoveredSectorYearError,
    ZeroDenominatorError,
)

__all__ = [
    "METHODS",
    "DEFAULT_WINDOW",
    "LabourShareModel",
    "CleaningReport",
    "cogs_labour_share",
    "fit_labour_share",
    "split_cogs",
    "firm_value_added",
    "impute_demand_and_gfcf",
    "clean_accounting",
    "heldout_rmse",
]

METHODS = ("1", "2a", "2b", "3")
DEFAULT_WINDOW = 3

REQUIRED_COLUMNS = ("firm", "year", "sector", "revenue", "cogs",
                    "labour", "ebit", "depamort")


def cogs_labour_share(w, g):
    """Labour's share of the combined cost pool: w / (g + w)."""
    w_arr = np.asarray(w, dtype=np.float64)
    g_arr = np.asarray(g, dtype=np.float64)
    pool = w_arr + g_arr
    if np.any(pool <= 0):
        raise ZeroDenominatorError("labour share needs a positive cost pool")
    share = w_arr / pool
    return float(share) if np.isscalar(w) and np.isscalar(g) else share


@dataclass(frozen=True)
class LabourShareModel:
    """Per sector and year labour-share estimates on a rolling window.

    ``shares`` is indexed by consecutive years with one column per sector;
    every cell is filled and lies in [0, 1].
    """

    method: str
    window: int
    shares: pd.DataFrame

    def share(self, sector, year) -> np.ndarray:
        """Vectorized lookup; unknown sectors or years are an error."""
        sector = np.atleast_1d(np.asarray(sector, dtype=object))
        year = np.atleast_1d(np.asarray(year, dtype=np.int64))
        if sector.shape != year.shape:
            raise SizeMismatchError("sector and year lookups must align")
        known = set(self.shares.columns)
        for s in sector:
            if s not in known:
                raise UncoveredSectorYearError(f"sector {s!r} was never fitted")
        lo, hi = int(self.shares.index.min()), int(self.shares.index.max())
        if ((year < lo) | (year > hi)).any():
            raise UncoveredSectorYearError(
                f"years outside the fitted range {lo}..{hi}")
        cols = self.shares.columns.get_indexer(sector)
        return self.shares.to_numpy()[year - lo, cols]


def _check_panel(panel: pd.DataFrame) -> None:
    missing = [c for c in REQUIRED_COLUMNS if c not in panel.columns]
    if missing:
        raise SizeMismatchError(f"panel lacks columns {missing}")
    if len(panel) == 0:
        raise EmptyInputError("empty financials panel")


def _window_share(win: pd.DataFrame, method: str) -> float:
    if win.empty:
        return np.nan
    if method == "1":
        # each firm's own window mean, then averaged across firms
        return float(win.groupby("firm")["alpha"].mean().mean())
    if method == "2a":
        return float(win.groupby("year")["alpha"].mean().mean())
    if method == "2b":
        sums = win.groupby("year").agg(w=("labour", "sum"), pool=("pool", "sum"))
        return float((sums["w"] / sums["pool"]).mean())
    # method 3: yearly unweighted means, time-averaged with each year
    # weighted by its share of the window's cost pool
    by_year = win.groupby("year").agg(alpha=("alpha", "mean"),
                                      pool=("pool", "sum"))
    return float((by_year["alpha"] * by_year["pool"]).sum()
                 / by_year["pool"].sum())


def fit_labour_share(panel: pd.DataFrame, method: str = "2b",
                     window: int = DEFAULT_WINDOW) -> LabourShareModel:
    """Estimate sector-year labour shares from disclosing firms.

    The window for year t spans {t-window+1 .. t}, so the first directly
    estimable year is the panel's first year plus window-1.  Methods:
    "1" averages each firm's window-mean share across firms, "2a" averages
    yearly sector means across the window, "2b" averages yearly
    ratio-of-sums shares, "3" averages the yearly means of "2a" weighted
    by each year's slice of the window's cost pool.
    Years an estimate cannot reach get interior linear interpolation, the
    first available value propagated back, and the last propagated
    forward.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    if window < 1:
        raise ValueError("window must be at least one year")
    _check_panel(panel)
    disc = panel[panel["labour"].notna()].copy()
    disc["pool"] = disc["labour"] + disc["cogs"]
    disc = disc[disc["pool"] > 0]
    disc["alpha"] = disc["labour"] / disc["pool"]

    years = np.arange(int(panel["year"].min()), int(panel["year"].max()) + 1)
    sectors = sorted(panel["sector"].unique())
    raw = pd.DataFrame(np.nan, index=years, columns=sectors, dtype=np.float64)
    for s, sdf in disc.groupby("sector"):
        year_col = sdf["year"].to_numpy()
        for t in years[window - 1:]:
            win = sdf[(year_col >= t - window + 1) & (year_col <= t)]
            raw.loc[t, s] = _window_share(win, method)

    starved = [s for s in sectors if raw[s].isna().all()]
    if starved:
        raise EmptySectorWindowError(
            f"sectors {starved} have no disclosing firm in any window")
    filled = raw.interpolate(limit_area="inside").ffill().bfill()
    assert float(filled.min().min()) >= 0.0 and float(filled.max().max()) <= 1.0
    return LabourShareModel(method, window, filled)


def split_cogs(panel: pd.DataFrame, model: LabourShareModel) -> pd.DataFrame:
    """Split each firm-year's cost pool into labour and intermediates.

    Disclosing rows pass through (their cogs already excludes labour).
    Undisclosed rows get labour_hat = share * cogs and intermediate_hat =
    cogs - labour_hat, so the pool is conserved exactly.
    """
    _check_panel(panel)
    out = panel.copy()
    hidden = out["labour"].isna().to_numpy()
    labour_hat = out["labour"].to_numpy(dtype=np.float64, na_value=0.0).copy()
    inter_hat = out["cogs"].to_numpy(dtype=np.float64).copy()
    if hidden.any():
        alpha = model.share(out.loc[hidden, "sector"].to_numpy(),
                            out.loc[hidden, "year"].to_numpy())
        pool = out.loc[hidden, "cogs"].to_numpy(dtype=np.float64)
        labour_hat[hidden] = alpha * pool
        inter_hat[hidden] = pool - labour_hat[hidden]
    out["labour_hat"] = labour_hat
    out["intermediate_hat"] = inter_hat
    return out


def firm_value_added(w, ebit, da):
    """Value added as the wage bill plus pre-depreciation operating profit."""
    return np.asarray(w, dtype=np.float64) + np.asarray(ebit, dtype=np.float64) \
        + np.asarray(da, dtype=np.float64)


def impute_demand_and_gfcf(revenue, demand_ratio, gfcf_ratio):
    """Split revenue into final demand, capital formation, and network sales.

    Ratios are the firm's sector aggregates (final demand over output,
    capital formation over output).  Negative ratios are clamped to zero
    with a warning; ratios above one or jointly above one are an error.
    Returns (final_demand, gfcf, intermediate_sales) with the three parts
    summing to revenue exactly when evaluated as (d + f) + k.
    """
    q = np.asarray(revenue, dtype=np.float64)
    fr = np.asarray(demand_ratio, dtype=np.float64)
    kr = np.asarray(gfcf_ratio, dtype=np.float64)
    if fr.shape != q.shape or kr.shape != q.shape:
        raise SizeMismatchError("one demand and one gfcf ratio per firm")
    if (fr < 0).any() or (kr < 0).any():
        warnings.warn("negative sector ratios clamped to zero", stacklevel=2)
        fr = np.maximum(fr, 0.0)
        kr = np.maximum(kr, 0.0)
    if (fr > 1).any() or (kr > 1).any() or (fr + kr > 1).any():
        raise RatioOutOfRangeError("demand and gfcf ratios must fit within one")
    f = q * fr
    k = q * kr
    d = q - (f + k)
    low = d < 0
    if low.any():
        # ratios summing to one can push d a rounding error below zero
        k = np.where(low, q - f, k)
        d = np.where(low, 0.0, d)
    # Settle the last rounding ulp so that (d + f) + k == q bitwise.
    # Full steps fix plain drift; fractional steps rotated through the
    # three parts break round-to-even ties that a whole-ulp move keeps.
    schedule = [(1.0, 0), (1.0, 1)] + [(s, w) for s in (0.5, 0.25, 0.75)
                                       for w in (0, 1, 2)]
    parts = [d, k, f]
    for step, who in schedule:
        err = q - ((parts[0] + parts[2]) + parts[1])
        if not err.any():
            break
        parts[who] = np.maximum(parts[who] + step * err, 0.0)
    d, k, f = parts
    return f, k, d


@dataclass(frozen=True)
class CleaningReport:
    """Outcome of the accounting-identity pass."""

    frame: pd.DataFrame
    dropped: pd.DataFrame
    n_corrected: int

    @property
    def dropped_fraction(self) -> float:
        total = len(self.frame) + len(self.dropped)
        return len(self.dropped) / total if total else 0.0


def clean_accounting(frame: pd.DataFrame) -> CleaningReport:
    """Repair or drop firm-years violating revenue >= inputs + value added.

    A negative residual with an unset flag is treated as labour counted in
    both columns: labour_hat is subtracted from intermediate_hat once and
    the row flagged.  Rows still violating afterwards, or with
    non-positive value added or negative intermediates, are dropped.
    Running the pass again changes nothing.
    """
    for col in ("revenue", "intermediate_hat", "labour_hat", "value_added"):
        if col not in frame.columns:
            raise SizeMismatchError(f"cleaning needs column {col!r}")
    out = frame.copy()
    if "flag" not in out.columns:
        out["flag"] = 0
    residual = out["revenue"] - out["intermediate_hat"] - out["value_added"]
    fix = (residual < 0) & (out["flag"] == 0)
    out.loc[fix, "intermediate_hat"] -= out.loc[fix, "labour_hat"]
    out.loc[fix, "flag"] = 1
    residual = out["revenue"] - out["intermediate_hat"] - out["value_added"]
    bad = (residual < 0) | (out["value_added"] <= 0) | (out["intermediate_hat"] < 0)
    return CleaningReport(out[~bad].copy(), out[bad].copy(), int(fix.sum()))


def heldout_rmse(panel: pd.DataFrame, methods=METHODS,
                 holdout_fraction: float = 0.25, seed: int = 0,
                 window: int = DEFAULT_WINDOW) -> dict[str, float]:
    """Compare labour-share methods on held-out disclosing firm-years.

    A fraction of disclosing rows is masked: their wage bill is hidden and
    folded back into the cost pool, as if never disclosed.  Each method is
    fitted on the rest and scored by the root-mean-square error of its
    wage-bill predictions on the masked rows.
    """
    _check_panel(panel)
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout fraction must be inside (0, 1)")
    disc = np.flatnonzero(panel["labour"].notna().to_numpy())
    if disc.size < 2:
        raise EmptyInputError("need at least two disclosing rows to hold out")
    rng = np.random.default_rng(seed)
    n_hide = max(1, int(round(holdout_fraction * disc.size)))
    hidden = rng.choice(disc, size=n_hide, replace=False)

    train = panel.copy()
    pos = train.index[hidden]
    truth = train.loc[pos, "labour"].to_numpy(dtype=np.float64)
    train.loc[pos, "cogs"] = train.loc[pos, "cogs"] + train.loc[pos, "labour"]
    train.loc[pos, "labour"] = np.nan

    scores: dict[str, float] = {}
    for method in methods:
        model = fit_labour_share(train, method=method, window=window)
        alpha = model.share(train.loc[pos, "sector"].to_numpy(),
                            train.loc[pos, "year"].to_numpy())
        predicted = alpha * train.loc[pos, "cogs"].to_numpy(dtype=np.float64)
        scores[method] = float(np.sqrt(np.mean((predicted - truth) ** 2)))
    return scores
