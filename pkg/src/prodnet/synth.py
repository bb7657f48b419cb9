"""Synthetic firm-level economies with closed accounts.

The generator draws an intended size per firm, attaches customers in
proportion to size, assigns raw heavy-tailed edge weights and then runs one
balancing pass (rows, then columns) against the intended sizes.  Accounts are
derived from the realized flows afterwards, so every balance identity holds by
construction.  The pass anchors firm strengths to sizes, which keeps the
economy granular without letting any single edge dwarf the total.  All
randomness comes from one seed through named sub-streams, so economies are
reproducible bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleConfigError, SizeMismatchError, UnlabeledNodeError
from .network import NodeAccounts, WeightedNetwork, build_network

__all__ = [
    "SynthConfig",
    "SectorTable",
    "GroundTruth",
    "generate_ground_truth",
    "derive_sector_table",
]

# Lognormal spread of firm fitness around its degree; keeps size and degree
# correlated without collapsing the weight tail.
_FITNESS_SIGMA = 0.5

# Power applied to the fitness draw to form the intended firm size.  Degrees
# carry a lighter tail than sizes; sharpening bridges the two so the realized
# weight distribution lands on the configured tail exponent.
_SIZE_SHARPEN = 1.65

# Customer attachment mixes size-proportional with uniform preference.  Pure
# size attachment starves small firms of suppliers; the uniform component
# gives the long tail of small buyers its share of purchases.
_ATTACH_UNIFORM_MIX = 0.3

# Minimum sector value added as a fraction of sector intermediate cost.  Final
# demand is lifted when a sector would otherwise book a non-positive residual.
_SECTOR_VA_FLOOR = 0.05

# Stream names, in spawn order.  Changing this list changes every economy.
_PHASES = ("degrees", "fitness", "attachment", "weights", "sectors", "ratios")


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic economy generator.

    Tail exponents use the survival-function convention P(X > x) ~ x**(-gamma),
    the way production-network studies quote them; a maximum-likelihood density
    fit of the same tail reports gamma + 1.  Both exponents must exceed 1 so
    the draws have finite mean.  The ratio ranges bound the value-added share
    of total cost and the final-demand share of total sales drawn per sector.
    """

    n_firms: int = 1000
    n_sectors: int = 10
    mean_degree: float = 5.0
    degree_tail_exponent: float = 1.5
    weight_tail_exponent: float = 1.2
    value_added_ratio_range: tuple[float, float] = (0.2, 0.6)
    final_demand_ratio_range: tuple[float, float] = (0.1, 0.5)
    seed: int = 0

    def validate(self) -> None:
        if self.n_firms < 2:
            raise InfeasibleConfigError("need at least two firms")
        if not 1 <= self.n_sectors <= self.n_firms:
            raise InfeasibleConfigError(
                f"n_sectors must lie in [1, n_firms], got {self.n_sectors}")
        if not 1.0 <= self.mean_degree <= self.n_firms - 1:
            raise InfeasibleConfigError(
                f"mean_degree must lie in [1, n_firms - 1], got {self.mean_degree}")
        for name in ("degree_tail_exponent", "weight_tail_exponent"):
            if getattr(self, name) <= 1.0:
                raise InfeasibleConfigError(f"{name} must exceed 1")
        for name in ("value_added_ratio_range", "final_demand_ratio_range"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo < hi < 1.0:
                raise InfeasibleConfigError(
                    f"{name} must satisfy 0 < low < high < 1, got ({lo}, {hi})")
        if self.seed < 0:
            raise InfeasibleConfigError("seed must be non-negative")


@dataclass(frozen=True)
class SectorTable:
    """Per-sector totals of a closed economy.

    For every sector: q = d + f = x + y, where q is total output, d sales to
    other producers, f final demand, x purchases from other producers and y
    value added.  Value added is the residual q - x, as in sectoral accounts,
    so the identity is exact even when firms book profits.
    """

    q: np.ndarray
    x: np.ndarray
    d: np.ndarray
    y: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        n = self.q.shape[0]
        for name in ("x", "d", "y", "f"):
            if getattr(self, name).shape != (n,):
                raise SizeMismatchError(f"sector field {name} has wrong length")
        scale = np.maximum(np.abs(self.q), 1.0)
        sales_gap = np.abs(self.q - (self.d + self.f)) / scale
        cost_gap = np.abs(self.q - (self.x + self.y)) / scale
        if sales_gap.size and max(sales_gap.max(), cost_gap.max()) > 1e-9:
            raise SizeMismatchError("sector table identities violated")

    @property
    def n_sectors(self) -> int:
        return int(self.q.shape[0])

    @classmethod
    def from_sides(cls, x, d, f) -> SectorTable:
        """Build a table from intermediate cost, intermediate sales and
        final demand; output and value added follow exactly."""
        x = np.asarray(x, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        f = np.asarray(f, dtype=np.float64)
        q = d + f
        return cls(q=q, x=x, d=d, y=q - x, f=f)


@dataclass(frozen=True)
class GroundTruth:
    """A generated economy: network, accounts, sector labels and the intended
    firm sizes (``fitness``) that drove attachment and weight balancing."""

    net: WeightedNetwork
    accounts: NodeAccounts
    labels: np.ndarray
    fitness: np.ndarray
    config: SynthConfig


def _calibrate_degrees(base: np.ndarray, target: float, kmax: int) -> np.ndarray:
    """Scale heavy-tailed draws so the floored, clipped mean hits target."""
    def mean_at(s: float) -> float:
        return float(np.floor(s * base).clip(1, kmax).mean())

    lo, hi = 1e-9, 4.0
    while mean_at(hi) < target and hi < 1e12:
        hi *= 4.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mean_at(mid) < target:
            lo = mid
        else:
            hi = mid
    s = hi if abs(mean_at(hi) - target) <= abs(mean_at(lo) - target) else lo
    return np.floor(s * base).clip(1, kmax).astype(np.int64)


def _draw_customers(k: np.ndarray, fitness: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Fitness-proportional customers without replacement for every firm.

    Samples all edges at once from the fitness distribution, then redraws
    self-loops and repeat picks until every (src, dst) pair is distinct.
    Keeping the earliest draw of each repeated pair and redrawing the rest
    reproduces successive weighted sampling without replacement.
    """
    n = fitness.shape[0]
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    m = src.size
    cdf = np.cumsum(fitness)
    total = cdf[-1]
    dst = np.empty(m, dtype=np.int64)
    todo = np.arange(m)
    for round_no in range(500):
        dst[todo] = np.searchsorted(cdf, rng.random(todo.size) * total,
                                    side="right")
        pair = src * n + dst
        order = np.argsort(pair, kind="stable")
        dup = np.zeros(m, dtype=bool)
        dup[order[1:]] = pair[order[1:]] == pair[order[:-1]]
        bad = dup | (src == dst)
        todo = np.flatnonzero(bad)
        if todo.size == 0:
            return src, dst
    # A handful of huge-fitness rows can stall rejection; finish those exactly.
    for i in np.unique(src[todo]):
        row = np.flatnonzero(src == i)
        keys = rng.exponential(size=n) / fitness
        keys[i] = np.inf
        dst[row] = np.argpartition(keys, row.size)[:row.size]
    return src, dst


def _per_sector_ratio(rng: np.random.Generator, n_sectors: int,
                      rng_range: tuple[float, float]) -> np.ndarray:
    lo, hi = rng_range
    return rng.uniform(lo, hi, size=n_sectors)


def generate_ground_truth(cfg: SynthConfig) -> GroundTruth:
    """Generate a reproducible closed economy from ``cfg``.

    Pipeline: draw out-degrees from a floored power law, form intended firm
    sizes, attach customers proportionally to size, draw raw power-law edge
    weights and balance them once against the sizes, then derive accounts
    from the realized flows.  Value-added and final-demand shares are drawn
    once per sector, so sector ratios are exact aggregates of firm behaviour.
    """
    cfg.validate()
    n = cfg.n_firms
    streams = dict(zip(_PHASES, np.random.SeedSequence(cfg.seed).spawn(len(_PHASES))))
    rngs = {name: np.random.default_rng(ss) for name, ss in streams.items()}

    # Out-degrees: floored continuous power law, calibrated to the mean.
    base = rngs["degrees"].random(n) ** (-1.0 / cfg.degree_tail_exponent)
    k = _calibrate_degrees(base, cfg.mean_degree, n - 1)

    # Intended size: lognormal spread around the degree, sharpened so the
    # size tail is heavier than the degree tail.
    fitness = (k * np.exp(_FITNESS_SIGMA * rngs["fitness"].standard_normal(n))
               ) ** _SIZE_SHARPEN

    attach = (1.0 - _ATTACH_UNIFORM_MIX) * fitness
    attach += _ATTACH_UNIFORM_MIX * fitness.mean()
    src, dst = _draw_customers(k, attach, rngs["attachment"])

    # Raw draws are deliberately heavier than the configured law (survival
    # exponent gamma - 1): the balancing pass mixes raw within-row ratios
    # with size-driven scales, and this pairing is what lands the realized
    # weight tail on the configured exponent.
    w = rngs["weights"].random(src.size) ** (-1.0 / (cfg.weight_tail_exponent - 1.0))

    # One balancing pass against the intended sizes: firms sell and buy at
    # their size scale, and no raw draw can outgrow the largest firm.
    w *= (fitness / np.bincount(src, weights=w, minlength=n))[src]
    colsum = np.bincount(dst, weights=w, minlength=n)
    has_in = colsum > 0
    col_scale = np.where(has_in, fitness / np.where(has_in, colsum, 1.0), 1.0)
    w *= col_scale[dst]

    net = build_network(n, src, dst, w)
    s_out = np.bincount(net.src, weights=net.weight, minlength=n)
    s_in = np.bincount(net.dst, weights=net.weight, minlength=n)

    labels = rngs["sectors"].integers(0, cfg.n_sectors, size=n)
    ratio_rng = rngs["ratios"]
    va_share = _per_sector_ratio(ratio_rng, cfg.n_sectors, cfg.value_added_ratio_range)
    fd_share = _per_sector_ratio(ratio_rng, cfg.n_sectors, cfg.final_demand_ratio_range)

    # Value added as a share of total cost; firms without suppliers fall back
    # to fitness so value added stays strictly positive.
    in_base = np.where(s_in > 0, s_in, fitness)
    y = va_share[labels] / (1.0 - va_share[labels]) * in_base
    f = fd_share[labels] / (1.0 - fd_share[labels]) * s_out

    # Lift final demand where a sector's residual value added would dip below
    # the floor; the lift is multiplicative, so f stays proportional to sales
    # within the sector.
    x_s = np.bincount(labels, weights=s_in, minlength=cfg.n_sectors)
    d_s = np.bincount(labels, weights=s_out, minlength=cfg.n_sectors)
    f_s = np.bincount(labels, weights=f, minlength=cfg.n_sectors)
    needed = (1.0 + _SECTOR_VA_FLOOR) * x_s - d_s
    lift = np.ones(cfg.n_sectors)
    low = needed > f_s
    lift[low] = needed[low] / f_s[low]
    f *= lift[labels]

    accounts = NodeAccounts.from_components(s_in, s_out, y, f)
    return GroundTruth(net=net, accounts=accounts, labels=labels.astype(np.int64),
                       fitness=fitness, config=cfg)


def derive_sector_table(accounts: NodeAccounts, labels,
                        n_sectors: int | None = None,
                        proxy: int | None = None) -> SectorTable:
    """Aggregate firm accounts into a closed sector table.

    The proxy node, if any, carries no sector and is skipped; every other
    node needs a label in [0, n_sectors).  Sector value added is the residual
    between output and intermediate cost, so the table identities are exact.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != accounts.n_nodes:
        raise SizeMismatchError("labels must cover every node")
    active = np.ones(labels.shape[0], dtype=bool)
    if proxy is not None:
        active[proxy] = False
    if (labels[active] < 0).any():
        bad = int(np.flatnonzero(active & (labels < 0))[0])
        raise UnlabeledNodeError(f"node {bad} has no sector label")
    if n_sectors is None:
        n_sectors = int(labels[active].max()) + 1 if active.any() else 0
    lab = labels[active]
    if lab.size and lab.max() >= n_sectors:
        raise UnlabeledNodeError("sector label outside [0, n_sectors)")
    x = np.bincount(lab, weights=accounts.s_in[active], minlength=n_sectors)
    d = np.bincount(lab, weights=accounts.s_out[active], minlength=n_sectors)
    f = np.bincount(lab, weights=accounts.final_demand[active], minlength=n_sectors)
    return SectorTable.from_sides(x=x, d=d, f=f)
