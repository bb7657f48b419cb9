"""Comparison statistics between reconstructed and reference quantities.

Error metrics are normalized by the span of the empirical quantity (maximum
minus minimum over its non-zero values), so results are comparable across
quantities with very different units.  The power-law fitter implements the
continuous maximum-likelihood estimator with a KS-minimizing cutoff; the
exponent follows the density convention p(x) ~ x**(-gamma), whose survival
function decays with exponent gamma - 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    DegenerateRangeError,
    EdgeSetMismatchError,
    EmptyInputError,
    InsufficientTailError,
    NonPositiveWeightError,
    SizeMismatchError,
    ZeroVectorError,
)

__all__ = [
    "NormalizedErrors",
    "PowerLawFit",
    "MetricsReport",
    "l1_error",
    "normalized_errors",
    "cosine_similarity",
    "ci_coverage",
    "ccdf",
    "powerlaw_fit",
    "align_union",
]

# A fit needs at least this many tail points when the cutoff is estimated.
MIN_TAIL = 50

# KS-scan candidates beyond this are thinned evenly for tractability.
MAX_XMIN_CANDIDATES = 512


def _pair(x, x_star) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_star, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise SizeMismatchError("compared vectors must be 1-d and equally long")
    return a, b


def l1_error(s_in, s_out, s_in_target, s_out_target) -> float:
    """Total absolute strength mismatch, in money units."""
    a_in, b_in = _pair(s_in, s_in_target)
    a_out, b_out = _pair(s_out, s_out_target)
    return float(np.abs(a_in - b_in).sum() + np.abs(a_out - b_out).sum())


@dataclass(frozen=True)
class NormalizedErrors:
    rmse: float
    mae: float
    medae: float
    span: float


def normalized_errors(x, x_star, span: float | None = None) -> NormalizedErrors:
    """RMSE, MAE and median absolute error of x_star against x, divided by
    the span of the empirical values x (max - min over non-zero entries).

    The median uses the exact order statistic: the mean of the two middle
    values when the count is even.
    """
    a, b = _pair(x, x_star)
    if a.size == 0:
        raise EmptyInputError("cannot score empty vectors")
    if span is None:
        live = a[a != 0]
        if live.size == 0:
            raise DegenerateRangeError("no non-zero empirical values")
        span = float(live.max() - live.min())
    if span <= 0:
        raise DegenerateRangeError("empirical span is zero")
    err = np.abs(a - b)
    return NormalizedErrors(
        rmse=float(np.sqrt(np.mean(err * err)) / span),
        mae=float(err.mean() / span),
        medae=float(np.median(err) / span),
        span=span,
    )


def cosine_similarity(x, x_star) -> float:
    a, b = _pair(x, x_star)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def ci_coverage(values, lower, upper) -> float:
    """Fraction of values inside [lower, upper], bounds inclusive."""
    v = np.asarray(values, dtype=np.float64)
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    if not v.shape == lo.shape == hi.shape:
        raise EdgeSetMismatchError("values and bounds must align one to one")
    if v.size == 0:
        raise EmptyInputError("coverage of an empty edge set is undefined")
    return float(np.mean((v >= lo) & (v <= hi)))


def ccdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical survival function at the distinct sample values.

    Returns (values ascending, share of samples >= value).
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise EmptyInputError("ccdf of an empty sample is undefined")
    values = np.unique(x)
    below = np.searchsorted(x, values, side="left")
    return values, (x.size - below) / x.size


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    xmin: float
    n_tail: int
    ks_distance: float


def _tail_gamma(tail_sorted: np.ndarray, xmin: float) -> float:
    log_sum = float(np.log(tail_sorted / xmin).sum())
    if log_sum <= 0:
        raise InsufficientTailError("tail carries no spread above the cutoff")
    return 1.0 + tail_sorted.size / log_sum


def _tail_ks(tail_sorted: np.ndarray, xmin: float, gamma: float) -> float:
    m = tail_sorted.size
    fitted = 1.0 - (tail_sorted / xmin) ** (1.0 - gamma)
    steps = np.arange(1, m + 1) / m
    return float(np.maximum(np.abs(steps - fitted),
                            np.abs(fitted - (steps - 1.0 / m))).max())


def powerlaw_fit(samples, xmin: float | None = None,
                 max_candidates: int = MAX_XMIN_CANDIDATES) -> PowerLawFit:
    """Continuous power-law MLE with optional KS-minimizing cutoff search.

    With ``xmin`` given, fits gamma = 1 + n / sum(log(x / xmin)) over the
    tail x >= xmin.  Without it, scans candidate cutoffs over the distinct
    sample values up to the 95th percentile, keeps only candidates leaving at
    least MIN_TAIL points, and returns the fit with the smallest KS distance.
    Candidate lists longer than ``max_candidates`` are thinned evenly; the
    fit is invariant under rescaling all samples by a positive constant.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise EmptyInputError("cannot fit an empty sample")
    if x[0] <= 0:
        raise NonPositiveWeightError("power-law samples must be positive")

    if xmin is not None:
        tail = x[x >= xmin]
        if tail.size == 0:
            raise InsufficientTailError("no samples at or above xmin")
        gamma = _tail_gamma(tail, xmin)
        return PowerLawFit(gamma, float(xmin), int(tail.size),
                           _tail_ks(tail, xmin, gamma))

    cap = np.quantile(x, 0.95)
    candidates = np.unique(x)
    candidates = candidates[candidates <= cap]
    starts = np.searchsorted(x, candidates, side="left")
    ok = x.size - starts >= MIN_TAIL
    candidates, starts = candidates[ok], starts[ok]
    if candidates.size == 0:
        raise InsufficientTailError(
            f"need at least {MIN_TAIL} tail points for a cutoff scan")
    if candidates.size > max_candidates:
        pick = np.linspace(0, candidates.size - 1, max_candidates).round().astype(int)
        pick = np.unique(pick)
        candidates, starts = candidates[pick], starts[pick]

    best: PowerLawFit | None = None
    for v, i in zip(candidates, starts):
        tail = x[i:]
        gamma = _tail_gamma(tail, float(v))
        ks = _tail_ks(tail, float(v), gamma)
        if best is None or ks < best.ks_distance:
            best = PowerLawFit(gamma, float(v), int(tail.size), ks)
    return best


def align_union(src_a, dst_a, val_a, src_b, dst_b, val_b) -> tuple[np.ndarray, np.ndarray]:
    """Align two edge-value sets over the union of their (src, dst) keys.

    Edges absent from one side contribute zero there.  When both sides share
    one topology this is a plain reordering.
    """
    sa = np.asarray(src_a, dtype=np.int64)
    da = np.asarray(dst_a, dtype=np.int64)
    sb = np.asarray(src_b, dtype=np.int64)
    db = np.asarray(dst_b, dtype=np.int64)
    key_a = (sa << 32) | da
    key_b = (sb << 32) | db
    if np.unique(key_a).size != key_a.size or np.unique(key_b).size != key_b.size:
        raise EdgeSetMismatchError("duplicate edges in alignment input")
    keys = np.union1d(key_a, key_b)
    out_a = np.zeros(keys.size)
    out_b = np.zeros(keys.size)
    out_a[np.searchsorted(keys, key_a)] = np.asarray(val_a, dtype=np.float64)
    out_b[np.searchsorted(keys, key_b)] = np.asarray(val_b, dtype=np.float64)
    return out_a, out_b


@dataclass(frozen=True)
class MetricsReport:
    """Bundle of comparison statistics for one reconstructed quantity."""

    l1: float | None = None
    rmse: float | None = None
    mae: float | None = None
    medae: float | None = None
    span: float | None = None
    cosine: float | None = None
    ci_coverage: float | None = None
    powerlaw_empirical: PowerLawFit | None = None
    powerlaw_reconstructed: PowerLawFit | None = None

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if value is None:
                continue
            out[key] = value
        return out
