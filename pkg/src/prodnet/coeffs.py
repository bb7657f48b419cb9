"""Production-function coefficients and network centralities.

Technical coefficients divide each flow by the customer's total cost
(purchases plus value added); allocation coefficients divide by the
supplier's total sales (shipments plus final demand).  Output multipliers
and the influence vector are fixed points of sparse propagation along those
coefficients, solved iteratively so nothing quadratic in the node count is
ever built.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DivergentSeriesError,
    NonStochasticColumnsError,
    SizeMismatchError,
    ZeroTotalCostError,
    ZeroTotalSalesError,
)
from .network import NodeAccounts, Topology, WeightedNetwork, degrees

__all__ = [
    "CoefficientMatrix",
    "technical_coefficients",
    "allocation_coefficients",
    "input_shares",
    "uniform_shares",
    "output_multipliers",
    "influence_vector",
    "influence_from_shares",
    "uniform_influence",
]

# Labour share of the representative production function; the complement
# weights network propagation in the influence vector.
DEFAULT_ALPHA = 0.333

MULTIPLIER_TOL = 1e-10
INFLUENCE_TOL = 1e-12
DEFAULT_MAX_ITER = 200_000

# Column sums of share matrices may deviate this much from one.
_STOCHASTIC_RTOL = 1e-9


@dataclass(frozen=True)
class CoefficientMatrix:
    """Sparse per-edge coefficients on a fixed topology.

    ``kind`` names the normalization ("technical", "allocation",
    "input_share", "uniform_share").  Edges are sorted row-major like the
    networks they come from.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    value: np.ndarray
    kind: str

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.value, minlength=self.n_nodes)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.dst, weights=self.value, minlength=self.n_nodes)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes))
        out[self.src, self.dst] = self.value
        return out

    def drop(self, nodes) -> CoefficientMatrix:
        """Remove nodes and their rows/columns, keeping remaining values.

        Coefficient values are not recomputed: denominators still reflect
        the full system, which is exactly what excluding an aggregate node
        from propagation (but not from the accounts) means.  Remaining ids
        shift down compactly.
        """
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        gone = np.zeros(self.n_nodes, dtype=bool)
        gone[nodes] = True
        new_id = np.cumsum(~gone) - 1
        keep = ~(gone[self.src] | gone[self.dst])
        return replace(self, n_nodes=int((~gone).sum()),
                       src=new_id[self.src[keep]], dst=new_id[self.dst[keep]],
                       value=self.value[keep])


def _cost_denominator(net: WeightedNetwork, acc: NodeAccounts) -> np.ndarray:
    if acc.n_nodes != net.n_nodes:
        raise SizeMismatchError("accounts and network disagree on node count")
    bought = np.bincount(net.dst, weights=net.weight, minlength=net.n_nodes)
    return bought + acc.value_added, bought


def technical_coefficients(net: WeightedNetwork, acc: NodeAccounts) -> CoefficientMatrix:
    """Flow from i to j divided by j's total cost (inputs plus value added)."""
    cost, bought = _cost_denominator(net, acc)
    has_in = bought > 0
    if (has_in & (cost <= 0)).any():
        node = int(np.flatnonzero(has_in & (cost <= 0))[0])
        raise ZeroTotalCostError(f"node {node} buys inputs but has no total cost")
    return CoefficientMatrix(net.n_nodes, net.src, net.dst,
                             net.weight / cost[net.dst], "technical")


def allocation_coefficients(net: WeightedNetwork, acc: NodeAccounts) -> CoefficientMatrix:
    """Flow from i to j divided by i's total sales (shipments plus final demand)."""
    if acc.n_nodes != net.n_nodes:
        raise SizeMismatchError("accounts and network disagree on node count")
    sold = np.bincount(net.src, weights=net.weight, minlength=net.n_nodes)
    sales = sold + acc.final_demand
    has_out = sold > 0
    if (has_out & (sales <= 0)).any():
        node = int(np.flatnonzero(has_out & (sales <= 0))[0])
        raise ZeroTotalSalesError(f"node {node} ships goods but has no total sales")
    return CoefficientMatrix(net.n_nodes, net.src, net.dst,
                             net.weight / sales[net.src], "allocation")


def input_shares(net: WeightedNetwork) -> CoefficientMatrix:
    """Flow from i to j divided by j's network purchases.

    Columns of nodes with suppliers sum to one exactly; nodes without
    suppliers have empty columns.
    """
    bought = np.bincount(net.dst, weights=net.weight, minlength=net.n_nodes)
    return CoefficientMatrix(net.n_nodes, net.src, net.dst,
                             net.weight / bought[net.dst], "input_share")


def uniform_shares(topo: Topology) -> CoefficientMatrix:
    """Equal input shares: every supplier of j carries 1/k_in(j)."""
    k_in, _ = degrees(topo)
    return CoefficientMatrix(topo.n_nodes, topo.src, topo.dst,
                             1.0 / k_in[topo.dst].astype(np.float64),
                             "uniform_share")


def output_multipliers(coeffs: CoefficientMatrix, tol: float = MULTIPLIER_TOL,
                       max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Total output pulled per unit of a node's final demand.

    Solves o = 1 + T' o by forward propagation; every multiplier is at
    least one.  Raises DivergentSeriesError when the series grows or the
    iteration budget runs out before the residual drops to ``tol``.
    """
    o = np.ones(coeffs.n_nodes)
    residual_prev = np.inf
    growth_streak = 0
    for _ in range(int(max_iter)):
        pulled = np.bincount(coeffs.dst, weights=coeffs.value * o[coeffs.src],
                             minlength=coeffs.n_nodes)
        o_next = 1.0 + pulled
        residual = float(np.abs(o_next - o).max())
        o = o_next
        if residual <= tol:
            return o
        if not np.isfinite(residual):
            raise DivergentSeriesError("multiplier series diverged")
        growth_streak = growth_streak + 1 if residual >= residual_prev else 0
        if growth_streak >= 50:
            raise DivergentSeriesError(
                "multiplier residual keeps growing; spectral radius >= 1")
        residual_prev = residual
    raise DivergentSeriesError(
        f"multiplier series did not reach {tol} within {max_iter} sweeps")


def influence_from_shares(shares: CoefficientMatrix,
                          alpha: float = DEFAULT_ALPHA,
                          tol: float = INFLUENCE_TOL,
                          max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Fixed point v = alpha/n + (1 - alpha) * shares @ v.

    ``shares`` must have columns summing to one or empty.  The sum of v is
    one exactly when every column is stochastic, and every entry is at
    least alpha/n.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    cols = shares.col_sums()
    live = cols > 0
    off = np.abs(cols[live] - 1.0)
    if off.size and off.max() > _STOCHASTIC_RTOL:
        node = int(np.flatnonzero(live)[np.argmax(off)])
        raise NonStochasticColumnsError(
            f"column {node} sums to {cols[node]!r}, expected 1")
    n = shares.n_nodes
    v = np.full(n, 1.0 / n)
    damp = 1.0 - alpha
    load = alpha / n
    for _ in range(int(max_iter)):
        passed = np.bincount(shares.src, weights=shares.value * v[shares.dst],
                             minlength=n)
        v_next = load + damp * passed
        residual = float(np.abs(v_next - v).max())
        v = v_next
        if residual <= tol:
            return v
    raise DivergentSeriesError(
        f"influence iteration did not reach {tol} within {max_iter} sweeps")


def influence_vector(net: WeightedNetwork, acc: NodeAccounts,
                     alpha: float = DEFAULT_ALPHA, tol: float = INFLUENCE_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Influence of each firm on aggregate output under input shares.

    The share matrix divides flows by network purchases; the accounts'
    purchases must agree with those edge sums, otherwise the columns are
    not the claimed input shares and NonStochasticColumnsError is raised.
    """
    if acc.n_nodes != net.n_nodes:
        raise SizeMismatchError("accounts and network disagree on node count")
    bought = np.bincount(net.dst, weights=net.weight, minlength=net.n_nodes)
    scale = np.maximum(np.maximum(np.abs(bought), np.abs(acc.s_in)), 1.0)
    off = np.abs(bought - acc.s_in) / scale
    if off.size and off.max() > _STOCHASTIC_RTOL:
        node = int(np.argmax(off))
        raise NonStochasticColumnsError(
            f"node {node}: account purchases {acc.s_in[node]!r} do not match "
            f"edge sums {bought[node]!r}")
    return influence_from_shares(input_shares(net), alpha, tol, max_iter)


def uniform_influence(topo: Topology, alpha: float = DEFAULT_ALPHA,
                      tol: float = INFLUENCE_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Influence vector when every supplier of a firm matters equally."""
    return influence_from_shares(uniform_shares(topo), alpha, tol, max_iter)
