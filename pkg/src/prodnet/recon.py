"""Weight reconstruction on a known topology from strength constraints.

Given which supply links exist and every firm's total purchases and sales,
the reconstruction fills in expected link weights.  Two prescriptions matter:

* the dense closed form, expected weight proportional to the product of the
  endpoints' strengths over the economy total, exact when every pair of
  nodes may trade (self-loops included);
* iterative proportional fitting on the actual sparse support, which is the
  maximum-entropy update of an initial guess subject to the strength
  constraints and reduces to the closed form on complete support.

Edge weights conditional on a link existing are modelled as exponential with
rate 1/expected-weight, which puts closed-form confidence intervals and exact
ensemble sampling within reach without ever materializing an n x n matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    InfeasibleSupportError,
    InvalidConfidenceLevelError,
    NonPositiveWeightError,
    SizeMismatchError,
    UnbalancedTotalsError,
)
from .network import NodeAccounts, Topology, WeightedNetwork, build_network

__all__ = [
    "MaxEntPrescription",
    "IPFResult",
    "ReconstructionResult",
    "maxent_prescription",
    "ipf_balance",
    "fit_crem",
    "weight_confidence_interval",
    "sample_ensemble",
]

# Totals of sales and purchases must agree this tightly before fitting.
TOTALS_RTOL = 1e-9

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000

# Interval mass below and above the expected weight; 0.25/0.25 gives the
# 50 percent band used throughout.
DEFAULT_CI_MASS = (0.25, 0.25)

# Plain scaling sweeps stall on sparse supports whose targets nearly split
# into blocking sets.  Every _REFINE_WINDOW sweeps the mismatch must have
# shrunk by _REFINE_MIN_GAIN, otherwise a second-order refinement takes over.
_REFINE_WINDOW = 64
_REFINE_MIN_GAIN = 4.0
_REFINE_MAX_STEPS = 64
# Largest dual-potential move allowed in a single refinement step; keeps the
# exponential map well inside double range.
_REFINE_STEP_CAP = 40.0


def _check_totals(s_out: np.ndarray, s_in: np.ndarray) -> float:
    total_out = float(s_out.sum())
    total_in = float(s_in.sum())
    scale = max(abs(total_out), abs(total_in), 1.0)
    if abs(total_out - total_in) > TOTALS_RTOL * scale:
        raise UnbalancedTotalsError(
            f"total sales {total_out!r} and purchases {total_in!r} disagree")
    return total_out


def _target_arrays(s_out, s_in, n_nodes: int | None = None):
    s_out = np.asarray(s_out, dtype=np.float64)
    s_in = np.asarray(s_in, dtype=np.float64)
    if s_out.shape != s_in.shape or s_out.ndim != 1:
        raise SizeMismatchError("strength targets must be 1-d and equally long")
    if n_nodes is not None and s_out.shape[0] != n_nodes:
        raise SizeMismatchError(
            f"targets cover {s_out.shape[0]} nodes, topology has {n_nodes}")
    if not (np.isfinite(s_out).all() and np.isfinite(s_in).all()):
        raise NonPositiveWeightError("strength targets must be finite")
    if (s_out < 0).any() or (s_in < 0).any():
        raise NonPositiveWeightError("strength targets must be non-negative")
    return s_out, s_in


@dataclass(frozen=True)
class MaxEntPrescription:
    """Lazy dense prescription w[i, j] = s_out[i] * s_in[j] / total.

    Evaluates on demand for single pairs or edge arrays; nothing quadratic
    in the node count is ever stored.
    """

    s_out: np.ndarray
    s_in: np.ndarray
    total: float

    def pair(self, i: int, j: int) -> float:
        return float(self.s_out[i] * self.s_in[j] / self.total)

    def on_edges(self, src, dst) -> np.ndarray:
        return self.s_out[np.asarray(src)] * self.s_in[np.asarray(dst)] / self.total

    def rates(self, src, dst) -> np.ndarray:
        """Exponential rates of the closed-form ensemble on given edges."""
        return self.total / (self.s_out[np.asarray(src)] * self.s_in[np.asarray(dst)])


def maxent_prescription(s_out, s_in) -> MaxEntPrescription:
    """Closed-form expected weights from strengths alone.

    Requires total sales equal to total purchases within TOTALS_RTOL.
    """
    s_out, s_in = _target_arrays(s_out, s_in)
    total = _check_totals(s_out, s_in)
    if total <= 0:
        raise NonPositiveWeightError("economy total must be positive")
    return MaxEntPrescription(s_out, s_in, total)


@dataclass(frozen=True)
class IPFResult:
    """Balanced edge weights aligned with the input topology's edge order.

    Edges incident to a zero-target node carry weight zero.  ``l1`` is the
    achieved absolute strength mismatch summed over both sides; ``rel_l1``
    divides it by the target total.  ``converged`` is False when the
    iteration budget ran out, in which case the best iterate seen is kept.
    ``iterations`` counts scaling sweeps plus any refinement steps.
    """

    weights: np.ndarray
    iterations: int
    l1: float
    rel_l1: float
    converged: bool


def _newton_refine(src, dst, rt, ct, w, n, budget, max_steps):
    """Second-order polish of a scaling iterate via its dual potentials.

    The balanced weights have the form w_e * exp(u_i + v_j) with the current
    iterate as base measure, and the potentials solve an unconstrained convex
    problem whose gradient is the strength mismatch.  Damped Newton steps on
    that problem converge quadratically where alternating scaling crawls;
    each step costs one sparse factorization of the bordered Hessian.

    Returns the refined weights, steps taken, the two-sided absolute
    mismatch, and whether it dropped to ``budget``.  Bails out (returning
    the best iterate seen) if the linear solve degrades or a step cannot
    reduce the objective.

    Each system is solved by diagonally preconditioned conjugate gradients,
    which is fast on all but the sparsest supports; those make the Hessian
    nearly singular, so on the first CG failure the stage switches to a
    direct factorization, cheap there because fill-in tracks density.
    """
    u = np.zeros(n)
    v = np.zeros(n)
    # Objective value: sum of weights minus the linear target terms.
    g = float(w.sum())
    best_w, best_l1 = w, math.inf
    use_direct = False
    steps = 0
    for steps in range(1, max_steps + 1):
        row = np.bincount(src, weights=w, minlength=n)
        col = np.bincount(dst, weights=w, minlength=n)
        grad = np.concatenate([row - rt, col - ct])
        l1 = float(np.abs(grad).sum())
        if l1 < best_l1:
            best_w, best_l1 = w, l1
        if l1 <= budget:
            return w, steps, l1, True
        mat = sp.coo_matrix((w, (src, dst)), shape=(n, n)).tocsr()
        hess = sp.bmat([[sp.diags(row), mat], [mat.T, sp.diags(col)]],
                       format="csr")
        # The potentials are defined up to a constant shift per connected
        # component; a tiny ridge keeps the system nonsingular and the
        # gradient is orthogonal to those null directions anyway.
        ridge = 1e-12 * max(float(row.max()), float(col.max()), 1.0)
        hess += sp.identity(2 * n, format="csr") * ridge
        step = None
        if not use_direct:
            cond = sp.diags(1.0 / np.maximum(hess.diagonal(), ridge))
            step, info = spla.cg(hess, -grad, rtol=1e-10, maxiter=4000,
                                 M=cond)
            if info != 0:
                use_direct = True
                step = None
        if step is None:
            step = spla.spsolve(hess.tocsc(), -grad)
        if not np.isfinite(step).all():
            break
        slope = float(grad @ step)
        if slope >= 0.0:
            break
        cap = float(np.abs(step).max())
        t = 1.0 if cap <= _REFINE_STEP_CAP else _REFINE_STEP_CAP / cap
        du, dv = step[:n], step[n:]
        shift = du[src] + dv[dst]
        accepted = False
        for _ in range(30):
            w_t = w * np.exp(t * shift)
            g_t = float(w_t.sum()) - float(rt @ (u + t * du)) \
                - float(ct @ (v + t * dv))
            if g_t <= g + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        u += t * du
        v += t * dv
        w, g = w_t, g_t
    return best_w, steps, best_l1, best_l1 <= budget


def ipf_balance(topo: Topology, s_out_target, s_in_target, init=None,
                tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> IPFResult:
    """Alternating row and column scaling on a fixed sparse support.

    Each sweep rescales supplier-side sums to ``s_out_target`` and then
    customer-side sums to ``s_in_target``; convergence is declared when the
    total absolute mismatch of both sides drops to ``tol`` relative to the
    economy total.  Starting from ``init`` (default: all ones), the fixed
    point is the entropy projection of the start onto the constraint set.
    When sweeps stop making headway a damped Newton stage on the dual
    potentials finishes the job; sparse hub-free supports otherwise need
    hundreds of thousands of sweeps.

    Raises InfeasibleSupportError when a node has a positive target but no
    edge left to carry it, and UnbalancedTotalsError when the two target
    totals disagree.
    """
    rt, ct = _target_arrays(s_out_target, s_in_target, topo.n_nodes)
    total = _check_totals(rt, ct)
    m = topo.n_edges
    if init is None:
        w0 = np.ones(m)
    else:
        w0 = np.asarray(init, dtype=np.float64).copy()
        if w0.shape != (m,):
            raise SizeMismatchError("init must carry one weight per edge")
        if m and (not np.isfinite(w0).all() or (w0 <= 0).any()):
            raise NonPositiveWeightError("init weights must be positive")

    # Edges touching a zero-target node can only carry zero; drop them from
    # the scaling loop and from feasibility bookkeeping.
    live = (rt[topo.src] > 0) & (ct[topo.dst] > 0)
    src, dst = topo.src[live], topo.dst[live]
    has_out = np.bincount(src, minlength=topo.n_nodes) > 0
    has_in = np.bincount(dst, minlength=topo.n_nodes) > 0
    starved = ((rt > 0) & ~has_out) | ((ct > 0) & ~has_in)
    if starved.any():
        node = int(np.flatnonzero(starved)[0])
        raise InfeasibleSupportError(
            f"node {node} has a positive target but no usable edge")

    weights = np.zeros(m)
    if total == 0 or src.size == 0:
        return IPFResult(weights, 0, 0.0, 0.0, True)

    w = w0[live]
    n = topo.n_nodes
    budget = tol * total
    best_w, best_l1 = w.copy(), math.inf
    row = np.bincount(src, weights=w, minlength=n)
    iterations = 0
    converged = False
    window_l1 = math.inf
    refine_allowed = True
    while iterations < int(max_iter):
        iterations += 1
        np.divide(rt, row, out=row, where=row > 0)
        w *= row[src]
        col = np.bincount(dst, weights=w, minlength=n)
        np.divide(ct, col, out=col, where=col > 0)
        w *= col[dst]
        row = np.bincount(src, weights=w, minlength=n)
        l1 = float(np.abs(row - rt).sum())
        if l1 < best_l1:
            best_l1 = l1
            np.copyto(best_w, w)
        if l1 <= budget:
            converged = True
            break
        if iterations % _REFINE_WINDOW == 0 and l1 > 0.0:
            stalled = window_l1 < _REFINE_MIN_GAIN * l1
            window_l1 = l1
            if not (stalled and refine_allowed):
                continue
            steps_left = min(_REFINE_MAX_STEPS, int(max_iter) - iterations)
            if steps_left <= 0:
                continue
            w_r, steps, l1_r, ok = _newton_refine(
                src, dst, rt, ct, w.copy(), n, budget, steps_left)
            iterations += steps
            if l1_r < best_l1:
                best_l1 = l1_r
                best_w = w_r.copy()
            if ok:
                converged = True
                break
            # A stage that at least matched the sweep gain may be retried
            # later; one that went nowhere is not attempted again.
            if l1_r < l1 / _REFINE_MIN_GAIN:
                w = w_r.copy()
                row = np.bincount(src, weights=w, minlength=n)
                window_l1 = l1_r
            else:
                refine_allowed = False

    w = best_w
    # Report the honest two-sided mismatch of the returned iterate.
    row = np.bincount(src, weights=w, minlength=n)
    col = np.bincount(dst, weights=w, minlength=n)
    l1 = float(np.abs(row - rt).sum() + np.abs(col - ct).sum())
    weights[live] = w
    return IPFResult(weights, iterations, l1, l1 / total, converged)


def weight_confidence_interval(rate, q_minus: float = DEFAULT_CI_MASS[0],
                               q_plus: float = DEFAULT_CI_MASS[1]):
    """Closed-form band around the expected weight of an exponential edge.

    For rate lam the expected weight 1/lam sits at survival level 1/e; the
    band spans the weights whose survival levels are 1/e + q_minus and
    1/e - q_plus, so it holds probability mass q_minus + q_plus exactly and
    always brackets the expected weight.  Accepts scalars or arrays.
    """
    inv_e = math.exp(-1.0)
    if not 0.0 <= q_minus <= 1.0 - inv_e:
        raise InvalidConfidenceLevelError(
            f"q_minus must lie in [0, 1 - 1/e], got {q_minus}")
    if not 0.0 <= q_plus < inv_e:
        raise InvalidConfidenceLevelError(
            f"q_plus must lie in [0, 1/e), got {q_plus}")
    lam = np.asarray(rate, dtype=np.float64)
    if (lam <= 0).any():
        raise NonPositiveWeightError("rates must be positive")
    lower = -np.log(inv_e + q_minus) / lam
    upper = -np.log(inv_e - q_plus) / lam
    if np.ndim(rate) == 0:
        return float(lower), float(upper)
    return lower, upper


@dataclass(frozen=True)
class ReconstructionResult:
    """Fitted conditional ensemble on one topology.

    Every edge listed exists with certainty (conditional model); its weight
    is exponential with rate ``lam`` and mean ``expected``.  Edges whose
    endpoints had zero targets are dropped.  ``l1``/``rel_l1`` report the
    achieved strength mismatch of the expected weights.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    expected: np.ndarray
    lam: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    l1: float
    rel_l1: float
    iterations: int
    converged: bool
    proxy: int | None = None

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def network(self) -> WeightedNetwork:
        """Expected weights as a weighted network."""
        return build_network(self.n_nodes, self.src, self.dst, self.expected,
                             proxy=self.proxy,
                             allow_self_loops=True)


def fit_crem(topo: Topology, acc: NodeAccounts,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             ci_mass: tuple[float, float] = DEFAULT_CI_MASS,
             lambda_source: str = "ipf") -> ReconstructionResult:
    """Fit the conditional exponential ensemble on a known topology.

    The expected weights start from the closed-form prescription restricted
    to the support and are balanced by :func:`ipf_balance` until firm-level
    purchases and sales match the accounts.  Rates come from the balanced
    expected weights (``lambda_source="ipf"``, the default) or from the
    closed-form strengths product (``"maxent"``), which ignores the support
    restriction.
    """
    if lambda_source not in ("ipf", "maxent"):
        raise ValueError(
            f"lambda_source must be 'ipf' or 'maxent', got {lambda_source!r}")
    rt, ct = _target_arrays(acc.s_out, acc.s_in, topo.n_nodes)
    prescription = maxent_prescription(rt, ct)
    live = (rt[topo.src] > 0) & (ct[topo.dst] > 0)
    init = np.ones(topo.n_edges)
    init[live] = prescription.on_edges(topo.src[live], topo.dst[live])
    balanced = ipf_balance(topo, rt, ct, init=init, tol=tol, max_iter=max_iter)

    src, dst = topo.src[live], topo.dst[live]
    expected = balanced.weights[live]
    if lambda_source == "ipf":
        lam = 1.0 / expected
    else:
        lam = prescription.rates(src, dst)
    ci_low, ci_high = weight_confidence_interval(lam, *ci_mass)
    return ReconstructionResult(
        n_nodes=topo.n_nodes, src=src, dst=dst, expected=expected, lam=lam,
        ci_low=ci_low, ci_high=ci_high, l1=balanced.l1, rel_l1=balanced.rel_l1,
        iterations=balanced.iterations, converged=balanced.converged,
        proxy=topo.proxy)


def sample_ensemble(result: ReconstructionResult, n_samples: int,
                    seed: int) -> list[WeightedNetwork]:
    """Draw independent weight configurations from the fitted ensemble.

    Each sample redraws every edge weight from its exponential law; the
    topology never changes.  Reproducible: sample k of a given seed is the
    same regardless of n_samples >= k+1.
    """
    streams = np.random.SeedSequence(seed).spawn(n_samples)
    nets = []
    for stream in streams:
        rng = np.random.default_rng(stream)
        w = rng.exponential(scale=result.expected)
        # An exponential draw is almost surely positive; clip defensively so
        # the network constructor's positivity rule can never trip.
        np.maximum(w, 1e-300, out=w)
        nets.append(build_network(result.n_nodes, result.src, result.dst, w,
                                  proxy=result.proxy, allow_self_loops=True))
    return nets
