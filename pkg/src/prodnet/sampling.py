"""Carving an observable test network out of a full economy.

Statistical offices see the whole economy; reconstruction methods see a
small, dense core.  This module builds that core in three moves: keep the
largest sellers, thin their internal links until a target density is hit,
and fold everything else (excluded firms plus the thinned-away flows) into
one remainder node whose links are fixed by strength conservation.  Firm
strengths survive all three moves to within a unit in the last place, and
the carved accounts are rebuilt from the carved network itself, so network
and accounts agree bitwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptySelectionError,
    SizeMismatchError,
    TargetExceedsEdgesError,
    UnlabeledNodeError,
    ZeroSectorDenominatorError,
)
from .network import (
    NodeAccounts,
    WeightedNetwork,
    build_network,
    induced_subgraph,
    strengths,
)
from .synth import SectorTable

__all__ = [
    "TrimPlan",
    "select_top_firms",
    "trim_links",
    "aggregate_proxy",
    "impute_from_sectors",
]

# Rounds of one-ulp corrections applied to remainder links so that carved
# strengths match the full accounts bitwise.
_NUDGE_ROUNDS = 3


@dataclass(frozen=True)
class TrimPlan:
    """A thinned network plus the links that were removed from it."""

    kept: WeightedNetwork
    deleted_src: np.ndarray
    deleted_dst: np.ndarray
    deleted_weight: np.ndarray

    @property
    def n_deleted(self) -> int:
        return int(self.deleted_src.size)

    @property
    def deleted_total(self) -> float:
        return float(self.deleted_weight.sum())


def select_top_firms(net: WeightedNetwork, n_keep: int) -> np.ndarray:
    """Ids of the ``n_keep`` largest sellers that also buy inside the core.

    Ranking is by out-strength, largest first, ties broken by lower id.
    Selected firms with no supplier among the selection are dropped again,
    so every returned firm has positive in-strength in the induced
    subgraph.  Returns ascending ids.
    """
    if n_keep <= 0:
        raise EmptySelectionError(f"n_keep must be positive, got {n_keep}")
    if n_keep > net.n_nodes:
        raise EmptySelectionError(
            f"asked for {n_keep} firms from a {net.n_nodes}-node economy")
    _, s_out = strengths(net)
    order = np.lexsort((np.arange(net.n_nodes), -s_out))
    top = np.sort(order[:n_keep])
    member = np.zeros(net.n_nodes, dtype=bool)
    member[top] = True
    internal = member[net.src] & member[net.dst]
    bought_inside = np.bincount(net.dst[internal],
                                weights=net.weight[internal],
                                minlength=net.n_nodes)
    kept = top[bought_inside[top] > 0]
    if kept.size == 0:
        raise EmptySelectionError(
            "no selected firm buys from another selected firm")
    return kept


def trim_links(net: WeightedNetwork, target_mean_degree: float,
               rng: np.random.Generator) -> TrimPlan:
    """Delete links until the mean degree drops to the target.

    Deletion is successive sampling without replacement with probability
    proportional to 1/weight, so cheap links vanish first, the way links
    under a reporting threshold would.  Implemented as an exponential
    race: each link draws Exp(1) * weight and the smallest keys lose.
    """
    if not target_mean_degree > 0:
        raise TargetExceedsEdgesError(
            f"target mean degree must be positive, got {target_mean_degree}")
    m_target = int(round(target_mean_degree * net.n_nodes))
    if m_target > net.n_edges:
        raise TargetExceedsEdgesError(
            f"target of {m_target} links exceeds the {net.n_edges} present")
    n_delete = net.n_edges - m_target
    if n_delete == 0:
        empty = np.empty(0, dtype=np.int64)
        return TrimPlan(net, empty, empty, np.empty(0, dtype=np.float64))
    keys = rng.exponential(size=net.n_edges) * net.weight
    order = np.argsort(keys, kind="stable")
    gone = np.zeros(net.n_edges, dtype=bool)
    gone[order[:n_delete]] = True
    kept = build_network(net.n_nodes, net.src[~gone], net.dst[~gone],
                         net.weight[~gone], proxy=net.proxy,
                         allow_self_loops=net.proxy is not None)
    return TrimPlan(kept, net.src[gone].copy(), net.dst[gone].copy(),
                    net.weight[gone].copy())


def _settle(partial: np.ndarray, link: np.ndarray,
            target: np.ndarray) -> np.ndarray:
    """Adjust remainder links until partial + link reproduces target bitwise.

    ``partial`` is the float sum of a firm's surviving own links, summed in
    storage order; the remainder link is accumulated after them, so the
    achieved strength is exactly fl(partial + link).  A few rounds of
    Newton steps absorb rounding drift.  Exactness has two unavoidable
    gaps: links that start at zero stay zero, and a target below the
    partial sum would need a negative link; both leave at most a unit in
    the last place.
    """
    live = link > 0
    for _ in range(_NUDGE_ROUNDS):
        achieved = partial + link
        if np.array_equal(achieved[live], target[live]):
            break
        link = np.where(live, np.maximum(link + (target - achieved), 0.0), link)
    return link


def aggregate_proxy(full_net: WeightedNetwork, full_acc: NodeAccounts,
                    kept_ids: np.ndarray,
                    kept: WeightedNetwork) -> tuple[WeightedNetwork, NodeAccounts]:
    """Fold everything outside the kept core into one remainder node.

    ``kept`` is the (possibly thinned) network on the kept firms, labelled
    0..k-1 in ascending order of ``kept_ids``.  The remainder node takes
    index k and absorbs excluded firms and deleted flows alike: the link
    firm->remainder carries exactly the firm's full out-strength minus what
    its surviving core links carry, and symmetrically on the inbound side.
    The remainder-to-remainder self-loop carries the flows among excluded
    firms, and the remainder's value added and final demand are the
    excluded firms' sums.  Kept firms keep their value added and final
    demand verbatim; the returned accounts carry the carved network's own
    strengths, which match the full economy's to a few units in the last
    place (exact equality is impossible whenever the mass a firm lost is
    smaller than the float spacing at its strength).
    """
    kept_ids = np.asarray(kept_ids, dtype=np.int64)
    k = kept_ids.size
    if kept.n_nodes != k:
        raise SizeMismatchError(
            f"kept network has {kept.n_nodes} nodes for {k} kept ids")
    if full_acc.n_nodes != full_net.n_nodes:
        raise SizeMismatchError("full accounts and network disagree on size")

    member = np.zeros(full_net.n_nodes, dtype=bool)
    member[kept_ids] = True
    excluded = ~member

    sub_in = np.bincount(kept.dst, weights=kept.weight, minlength=k)
    sub_out = np.bincount(kept.src, weights=kept.weight, minlength=k)
    target_out = full_acc.s_out[kept_ids]
    target_in = full_acc.s_in[kept_ids]
    up = np.maximum(target_out - sub_out, 0.0)
    down = np.maximum(target_in - sub_in, 0.0)
    up = _settle(sub_out, up, target_out)
    down = _settle(sub_in, down, target_in)

    outer = excluded[full_net.src] & excluded[full_net.dst]
    loop = float(full_net.weight[outer].sum())

    src = [kept.src, np.flatnonzero(up > 0)]
    dst = [kept.dst, np.full(int((up > 0).sum()), k, dtype=np.int64)]
    wgt = [kept.weight, up[up > 0]]
    live_down = np.flatnonzero(down > 0)
    src.append(np.full(live_down.size, k, dtype=np.int64))
    dst.append(live_down)
    wgt.append(down[live_down])
    if loop > 0:
        src.append(np.array([k], dtype=np.int64))
        dst.append(np.array([k], dtype=np.int64))
        wgt.append(np.array([loop]))
    net = build_network(k + 1, np.concatenate(src), np.concatenate(dst),
                        np.concatenate(wgt), proxy=k, allow_self_loops=True)

    net_in, net_out = strengths(net)
    y = np.append(full_acc.value_added[kept_ids],
                  full_acc.value_added[excluded].sum())
    f = np.append(full_acc.final_demand[kept_ids],
                  full_acc.final_demand[excluded].sum())
    return net, NodeAccounts.from_components(net_in, net_out, y, f)


def _sector_ratio(num: np.ndarray, den: np.ndarray, needed: np.ndarray,
                  what: str) -> np.ndarray:
    starved = (den <= 0) & needed
    if starved.any():
        sector = int(np.flatnonzero(starved)[0])
        raise ZeroSectorDenominatorError(
            f"sector {sector} has members needing {what} but a zero denominator")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, 0.0)
    if (ratio < 0).any():
        warnings.warn(f"negative sector {what} ratios clamped to zero",
                      stacklevel=3)
        ratio = np.maximum(ratio, 0.0)
    return ratio


def impute_from_sectors(acc: NodeAccounts, table: SectorTable,
                        labels) -> NodeAccounts:
    """Rebuild firm value added and final demand from sector aggregates.

    Value added scales with the firm's purchases at the sector's value
    added per unit of intermediate input; final demand scales with the
    firm's network sales at the sector's final demand per unit of
    intermediate sales.  Firms labelled -1 keep their current values,
    which is how the remainder node passes through untouched.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (acc.n_nodes,):
        raise SizeMismatchError("one sector label per firm required")
    if (labels < -1).any():
        raise UnlabeledNodeError("labels below -1 are not meaningful")
    n_sectors = table.q.size
    if (labels >= n_sectors).any():
        raise SizeMismatchError(
            f"label {int(labels.max())} outside the {n_sectors}-sector table")

    imputed = labels >= 0
    sector = np.where(imputed, labels, 0)
    needs_y = np.zeros(n_sectors, dtype=bool)
    np.logical_or.at(needs_y, sector[imputed], acc.s_in[imputed] > 0)
    needs_f = np.zeros(n_sectors, dtype=bool)
    np.logical_or.at(needs_f, sector[imputed], acc.s_out[imputed] > 0)

    y_rate = _sector_ratio(table.y, table.x, needs_y, "value added")
    f_rate = _sector_ratio(table.f, table.d, needs_f, "final demand")
    y = np.where(imputed, y_rate[sector] * acc.s_in, acc.value_added)
    f = np.where(imputed, f_rate[sector] * acc.s_out, acc.final_demand)
    return NodeAccounts.from_components(acc.s_in, acc.s_out, y, f)
