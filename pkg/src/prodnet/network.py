"""Sparse directed weighted networks with firm-level accounts.

The package represents an economy as a directed graph whose nodes are firms
and whose edge weights are money flows from supplier to customer over one
accounting period.  Edges are stored as flat arrays sorted row-major
(by source, then destination); a lazily built permutation gives the
column-major view, so both supplier-side and customer-side traversals are
O(edges) without ever materializing an n x n matrix.

Monetary quantities span many orders of magnitude, so everything is float64.
Networks are immutable after construction: all derived views may be cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DuplicateEdgeError,
    EdgeIndexError,
    NonPositiveWeightError,
    SelfLoopError,
    SizeMismatchError,
)

__all__ = [
    "Topology",
    "WeightedNetwork",
    "NodeAccounts",
    "AccountCheck",
    "build_topology",
    "build_network",
    "strengths",
    "degrees",
    "validate_accounts",
    "induced_subgraph",
    "without_node",
]


def _as_index_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise EdgeIndexError(f"{name} indices must be integers")
        arr = rounded
    return arr.astype(np.int64, copy=True)


def _validate_edges(n_nodes: int, src: np.ndarray, dst: np.ndarray,
                    proxy: int | None, allow_self_loops: bool) -> np.ndarray:
    """Check endpoint ranges, loops and duplicates; return the row-major order."""
    if n_nodes <= 0:
        raise EdgeIndexError(f"n_nodes must be positive, got {n_nodes}")
    if src.shape != dst.shape or src.ndim != 1:
        raise SizeMismatchError("src and dst must be 1-d arrays of equal length")
    if proxy is not None and not 0 <= proxy < n_nodes:
        raise EdgeIndexError(f"proxy index {proxy} outside [0, {n_nodes})")
    if src.size:
        lo = min(src.min(), dst.min())
        hi = max(src.max(), dst.max())
        if lo < 0 or hi >= n_nodes:
            raise EdgeIndexError(
                f"edge endpoints must lie in [0, {n_nodes}), found [{lo}, {hi}]")
        loops = src == dst
        if loops.any() and not allow_self_loops:
            bad = src[loops]
            if proxy is None or (bad != proxy).any():
                offender = int(bad[0] if proxy is None else bad[bad != proxy][0])
                raise SelfLoopError(f"self-loop on non-proxy node {offender}")
    order = np.lexsort((dst, src))
    s, d = src[order], dst[order]
    if s.size > 1:
        dup = (s[1:] == s[:-1]) & (d[1:] == d[:-1])
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEdgeError(f"duplicate edge ({s[k]}, {d[k]})")
    return order


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.flags.writeable = False


@dataclass(frozen=True)
class Topology:
    """Binary directed graph: which supply links exist, not how large they are.

    Edges are stored sorted by (src, dst).  ``proxy`` marks the optional
    rest-of-economy node; only that node may carry a self-loop.
    ``allow_self_loops`` is an explicit opt-out used for closure computations
    on complete supports and is off for ordinary firm networks.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    proxy: int | None = None

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    @cached_property
    def _col_order(self) -> np.ndarray:
        order = np.lexsort((self.src, self.dst))
        _freeze(order)
        return order

    def mean_degree(self) -> float:
        return self.n_edges / self.n_nodes


@dataclass(frozen=True)
class WeightedNetwork(Topology):
    """Topology plus strictly positive float64 edge weights."""

    weight: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def topology(self) -> Topology:
        return Topology(self.n_nodes, self.src, self.dst, self.proxy)

    def to_dense(self) -> np.ndarray:
        """Dense adjacency for small instances; test and oracle use only."""
        w = np.zeros((self.n_nodes, self.n_nodes))
        w[self.src, self.dst] = self.weight
        return w


def build_topology(n_nodes: int, src, dst, proxy: int | None = None,
                   allow_self_loops: bool = False) -> Topology:
    src = _as_index_array(src, "src")
    dst = _as_index_array(dst, "dst")
    order = _validate_edges(n_nodes, src, dst, proxy, allow_self_loops)
    src, dst = src[order], dst[order]
    _freeze(src, dst)
    return Topology(n_nodes, src, dst, proxy)


def build_network(n_nodes: int, src, dst, weight, proxy: int | None = None,
                  allow_self_loops: bool = False) -> WeightedNetwork:
    """Validate and index an edge list into an immutable weighted network.

    Args:
        n_nodes: number of nodes; ids are 0..n_nodes-1.
        src, dst: integer endpoint arrays, one entry per edge.
        weight: positive finite money flow per edge.
        proxy: index of the rest-of-economy node, if any.  Only this node
            may carry a self-loop.
        allow_self_loops: permit loops on every node (closure computations).

    Raises:
        EdgeIndexError, SelfLoopError, DuplicateEdgeError,
        NonPositiveWeightError, SizeMismatchError.
    """
    src = _as_index_array(src, "src")
    dst = _as_index_array(dst, "dst")
    w = np.asarray(weight, dtype=np.float64).copy()
    if w.shape != src.shape:
        raise SizeMismatchError("weight must match src/dst in length")
    if w.size and (not np.isfinite(w).all() or (w <= 0).any()):
        k = int(np.flatnonzero(~np.isfinite(w) | (w <= 0))[0])
        raise NonPositiveWeightError(f"edge {k} has non-positive weight {w[k]!r}")
    order = _validate_edges(n_nodes, src, dst, proxy, allow_self_loops)
    src, dst, w = src[order], dst[order], w[order]
    _freeze(src, dst, w)
    return WeightedNetwork(n_nodes, src, dst, proxy, w)


def strengths(net: WeightedNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Per-node in- and out-strength: money bought and sold on the network.

    Returns (s_in, s_out); both are zero for isolated nodes.
    """
    s_out = np.bincount(net.src, weights=net.weight, minlength=net.n_nodes)
    s_in = np.bincount(net.dst, weights=net.weight, minlength=net.n_nodes)
    return s_in, s_out


def degrees(topo: Topology) -> tuple[np.ndarray, np.ndarray]:
    """Per-node in- and out-degree as int64 arrays, returned as (k_in, k_out)."""
    k_out = np.bincount(topo.src, minlength=topo.n_nodes)
    k_in = np.bincount(topo.dst, minlength=topo.n_nodes)
    return k_in.astype(np.int64), k_out.astype(np.int64)


@dataclass(frozen=True)
class NodeAccounts:
    """Per-firm account vectors tied to one network.

    total_sales should equal s_out + final_demand and total_cost should equal
    s_in + value_added; they are stored explicitly so that inconsistent data
    can be represented and then caught by :func:`validate_accounts`.
    """

    s_in: np.ndarray
    s_out: np.ndarray
    value_added: np.ndarray
    final_demand: np.ndarray
    total_cost: np.ndarray
    total_sales: np.ndarray

    def __post_init__(self):
        n = self.s_in.shape[0]
        for name in ("s_out", "value_added", "final_demand",
                     "total_cost", "total_sales"):
            if getattr(self, name).shape != (n,):
                raise SizeMismatchError(f"accounts field {name} has wrong length")

    @classmethod
    def from_components(cls, s_in, s_out, value_added, final_demand) -> NodeAccounts:
        """Build accounts whose totals are derived, hence consistent."""
        s_in = np.asarray(s_in, dtype=np.float64).copy()
        s_out = np.asarray(s_out, dtype=np.float64).copy()
        y = np.asarray(value_added, dtype=np.float64).copy()
        f = np.asarray(final_demand, dtype=np.float64).copy()
        acc = cls(s_in, s_out, y, f, s_in + y, s_out + f)
        _freeze(s_in, s_out, y, f, acc.total_cost, acc.total_sales)
        return acc

    @property
    def n_nodes(self) -> int:
        return int(self.s_in.shape[0])

    def take(self, ids: np.ndarray) -> NodeAccounts:
        return NodeAccounts(self.s_in[ids], self.s_out[ids],
                            self.value_added[ids], self.final_demand[ids],
                            self.total_cost[ids], self.total_sales[ids])


@dataclass(frozen=True)
class AccountCheck:
    """Result of validate_accounts: which nodes break which identity."""

    violating_ids: np.ndarray
    max_rel_error: float

    @property
    def ok(self) -> bool:
        return self.violating_ids.size == 0


def _rel_err(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Relative with a floor of one currency unit so zero accounts compare sanely.
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return np.abs(a - b) / scale


def validate_accounts(acc: NodeAccounts, net: WeightedNetwork,
                      tol: float = 1e-9) -> AccountCheck:
    """Flag nodes whose accounts break the two balance identities.

    Checked per node, all at relative tolerance ``tol``:
    total_sales = s_out + final_demand, total_cost = s_in + value_added,
    and the account strengths against the network's realized strengths.
    """
    if acc.n_nodes != net.n_nodes:
        raise SizeMismatchError(
            f"accounts cover {acc.n_nodes} nodes, network has {net.n_nodes}")
    net_in, net_out = strengths(net)
    err = np.maximum.reduce([
        _rel_err(acc.total_sales, acc.s_out + acc.final_demand),
        _rel_err(acc.total_cost, acc.s_in + acc.value_added),
        _rel_err(acc.s_in, net_in),
        _rel_err(acc.s_out, net_out),
    ])
    bad = np.flatnonzero(err > tol).astype(np.int64)
    _freeze(bad)
    return AccountCheck(bad, float(err.max()) if err.size else 0.0)


def induced_subgraph(net: WeightedNetwork,
                     node_ids) -> tuple[WeightedNetwork, np.ndarray]:
    """Restrict to ``node_ids``, relabelled 0..k-1 in ascending original order.

    Returns the sub-network and the mapping array: mapping[new_id] = old_id.
    """
    ids = np.unique(np.asarray(node_ids, dtype=np.int64))
    if ids.size == 0:
        raise SizeMismatchError("cannot induce a subgraph on zero nodes")
    if ids[0] < 0 or ids[-1] >= net.n_nodes:
        raise EdgeIndexError("subgraph ids outside node range")
    new_id = np.full(net.n_nodes, -1, dtype=np.int64)
    new_id[ids] = np.arange(ids.size)
    keep = (new_id[net.src] >= 0) & (new_id[net.dst] >= 0)
    proxy = None
    if net.proxy is not None and new_id[net.proxy] >= 0:
        proxy = int(new_id[net.proxy])
    sub = build_network(ids.size, new_id[net.src[keep]], new_id[net.dst[keep]],
                        net.weight[keep], proxy=proxy,
                        allow_self_loops=proxy is not None)
    return sub, ids


def without_node(net: WeightedNetwork, node: int) -> WeightedNetwork:
    """Drop one node and all incident edges; remaining ids shift down."""
    keep = np.delete(np.arange(net.n_nodes), node)
    sub, _ = induced_subgraph(net, keep)
    return sub
