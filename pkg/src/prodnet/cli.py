"""Command-line front end composing the protocol stages.

Subcommands: ``gen`` writes a synthetic economy, ``trim`` carves trimmed
test networks from one, ``reconstruct`` fits expected weights on a fixed
support, ``multipliers`` scores a system's output multipliers or
influence vector, ``shock`` propagates a productivity panel and reports
volatilities, ``eval`` compares a reconstruction against observations,
``run`` drives the full sweep, and ``report`` re-reduces an existing run
directory.  Global flags ``--seed``, ``--config``, ``--out`` and
``--jobs`` may appear before or after the subcommand.

Exit codes: 0 success, 1 runtime failure (replicate failures included),
2 invalid configuration or arguments, 3 unreadable input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from .coeffs import (
    DEFAULT_ALPHA,
    allocation_coefficients,
    influence_from_shares,
    input_shares,
    output_multipliers,
    technical_coefficients,
    uniform_influence,
)
from .errors import (
    ConfigError,
    ConfigRangeError,
    EdgeSetMismatchError,
    InputUnreadableError,
    InsufficientTailError,
    ProdnetError,
    ReplicateFailureError,
)
from .io import (
    load_economy,
    read_accounts,
    read_csv,
    read_topology,
    write_accounts,
    write_edges,
    write_nodes,
    write_sectors,
)
from .metrics import align_union, ci_coverage, cosine_similarity, normalized_errors, powerlaw_fit
from .network import build_network, induced_subgraph
from .pipeline import (
    _KEY_PANEL,
    _KEY_TRIM,
    _load_or_generate,
    RunConfig,
    child_sequence,
    parse_config,
    reduce_reports,
    run_pipeline,
    write_summary_files,
)
from .recon import DEFAULT_MAX_ITER, DEFAULT_TOL, fit_crem
from .sampling import aggregate_proxy, impute_from_sectors, select_top_firms, trim_links
from .shocks import (
    DEFAULT_PERIODS,
    DEFAULT_SHOCK_SD,
    aggregate_volatility,
    draw_shock_panel,
    firm_variances,
    variance_shares,
)
from .synth import derive_sector_table

__all__ = ["main"]


# --- argument plumbing ------------------------------------------------------

def _global_parent() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand-position flags from clobbering values the
    # root parser already set
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="root seed; every random stream derives from it")
    p.add_argument("--config", default=argparse.SUPPRESS,
                   help="JSON run configuration file")
    p.add_argument("--out", default=argparse.SUPPRESS,
                   help="output directory or file, subcommand-dependent")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                   help="worker processes for the sweep (run only)")
    return p


def _opt(ns: argparse.Namespace, name: str, fallback=None):
    return getattr(ns, name, fallback)


def _run_config(ns: argparse.Namespace) -> RunConfig:
    """Config file plus command-line overrides, validated."""
    path = _opt(ns, "config")
    cfg = parse_config(path) if path is not None else RunConfig()
    seed = _opt(ns, "seed")
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    cfg.validate()
    return cfg


def _out_path(ns: argparse.Namespace, default: str) -> Path:
    return Path(_opt(ns, "out", default) or default)


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _read_weighted(path, n_nodes, proxy, weight_col: str = "weight"):
    df = read_csv(path, ("src", "dst", weight_col))
    return build_network(n_nodes, df["src"].to_numpy(), df["dst"].to_numpy(),
                         df[weight_col].to_numpy(float), proxy=proxy,
                         allow_self_loops=proxy is not None)


def _system(ns: argparse.Namespace):
    """Load the (network, accounts, proxy) triple named by --edges/--accounts."""
    acc, proxy = read_accounts(ns.accounts)
    net = _read_weighted(ns.edges, acc.n_nodes, proxy, ns.weight_col)
    return net, acc, proxy


# --- subcommand handlers ----------------------------------------------------

def _cmd_gen(ns: argparse.Namespace) -> int:
    cfg = _run_config(ns)
    net, acc, labels = _load_or_generate(cfg)
    table = derive_sector_table(acc, labels)
    out = _out_path(ns, "economy")
    out.mkdir(parents=True, exist_ok=True)
    write_edges(net, out / "edges.csv")
    write_nodes(out / "nodes.csv", labels, acc.value_added, acc.final_demand)
    write_sectors(table, out / "sectors.csv")
    print(f"wrote economy with {net.n_nodes} firms and {net.n_edges} links to {out}")
    return 0


def _cmd_trim(ns: argparse.Namespace) -> int:
    cfg = _run_config(ns)
    net, acc, labels, proxy = load_economy(ns.input)
    if proxy is not None:
        raise ConfigRangeError("trim expects a full economy, not a proxied system")
    n_keep = ns.n_keep if ns.n_keep is not None else cfg.n_keep
    replicates = ns.replicates if ns.replicates is not None else cfg.replicates
    kept = select_top_firms(net, n_keep)
    table = derive_sector_table(acc, labels)
    sub, _ = induced_subgraph(net, kept)
    if ns.fraction is not None:
        target = (1.0 - ns.fraction) * sub.n_edges / kept.size
    elif ns.degree is not None:
        target = ns.degree
    else:
        target = cfg.match_mean_degree
    out = _out_path(ns, "trimmed")
    out.mkdir(parents=True, exist_ok=True)
    labels_p = np.append(labels[kept], -1)
    for r in range(replicates):
        seq = child_sequence(cfg.seed, _KEY_TRIM, 0, r)
        plan = trim_links(sub, target, np.random.default_rng(seq))
        net_p, acc_p = aggregate_proxy(net, acc, kept, plan.kept)
        acc_imp = impute_from_sectors(acc_p, table, labels_p)
        rep_dir = out / f"rep{r:03d}"
        rep_dir.mkdir(exist_ok=True)
        write_edges(net_p, rep_dir / "topology.csv")
        write_accounts(acc_imp, rep_dir / "accounts.csv", proxy=kept.size)
        pd.DataFrame({"src": plan.deleted_src, "dst": plan.deleted_dst,
                      "weight": plan.deleted_weight}) \
            .to_csv(rep_dir / "deleted.csv", index=False)
    print(f"wrote {replicates} trimmed replicates ({kept.size} firms, "
          f"target degree {target:g}) to {out}")
    return 0


def _cmd_reconstruct(ns: argparse.Namespace) -> int:
    acc, proxy = read_accounts(ns.accounts)
    topo = read_topology(ns.topology, acc.n_nodes, proxy)
    result = fit_crem(topo, acc, tol=ns.tol, max_iter=ns.max_iter,
                      lambda_source=ns.lambda_source)
    out = _out_path(ns, "recon.csv")
    pd.DataFrame({
        "src": result.src, "dst": result.dst, "expected": result.expected,
        "lambda": result.lam, "ci_low": result.ci_low, "ci_high": result.ci_high,
    }).to_csv(out, index=False)
    print(json.dumps({"l1": result.l1, "rel_l1": result.rel_l1,
                      "iterations": result.iterations,
                      "converged": result.converged,
                      "n_edges": result.n_edges}, sort_keys=True))
    if not result.converged:
        print("balancing did not reach tolerance", file=sys.stderr)
        return 1
    return 0


def _cmd_multipliers(ns: argparse.Namespace) -> int:
    net, acc, proxy = _system(ns)
    if ns.kind == "output":
        values = output_multipliers(technical_coefficients(net, acc))
    else:
        values = influence_from_shares(input_shares(net), ns.alpha)
    node = np.arange(net.n_nodes)
    if ns.exclude_proxy and proxy is not None:
        mask = node != proxy
        node, values = node[mask], values[mask]
    out = _out_path(ns, f"{ns.kind}.csv")
    pd.DataFrame({"node": node, "value": values}).to_csv(out, index=False)
    print(f"wrote {values.size} {ns.kind} values to {out}")
    return 0


def _cmd_shock(ns: argparse.Namespace) -> int:
    net, acc, proxy = _system(ns)
    recon = _read_weighted(ns.recon, acc.n_nodes, proxy, "expected")
    seed = _opt(ns, "seed", 0) or 0
    panel = draw_shock_panel(
        net.n_nodes, ns.periods, ns.sigma,
        seed=np.random.default_rng(child_sequence(seed, _KEY_PANEL)))
    var = firm_variances(panel)
    infl_emp = influence_from_shares(input_shares(net), ns.alpha)
    infl_rec = influence_from_shares(input_shares(recon), ns.alpha)
    unif = uniform_influence(recon, ns.alpha)
    firms = np.arange(net.n_nodes) if proxy is None else \
        np.delete(np.arange(net.n_nodes), proxy)
    record = {
        "empirical_vol": aggregate_volatility(var, infl_emp),
        "recon_vol_with_proxy": aggregate_volatility(var, infl_rec),
        "recon_vol_no_proxy": aggregate_volatility(var[firms], infl_rec[firms]),
        "benchmark_vol_with_proxy": aggregate_volatility(var, unif),
        "benchmark_vol_no_proxy": aggregate_volatility(var[firms], unif[firms]),
        "shares": {k: float(v) for k, v in variance_shares(
            var, infl_rec,
            {"firms": firms} if proxy is None else
            {"proxy": np.array([proxy]), "firms": firms}).items()},
    }
    _emit(record, _opt(ns, "out"))
    return 0


def _comparison_block(rec: np.ndarray, emp: np.ndarray) -> dict:
    err = normalized_errors(emp, rec)
    return {"rmse": err.rmse, "mae": err.mae, "medae": err.medae,
            "cosine": cosine_similarity(rec, emp)}


def _cmd_eval(ns: argparse.Namespace) -> int:
    acc, proxy = read_accounts(ns.accounts)
    net = _read_weighted(ns.topology, acc.n_nodes, proxy)
    # canonical (src, dst) order so auxiliary columns align with the network
    df = read_csv(ns.recon, ("src", "dst", "expected")) \
        .sort_values(["src", "dst"], ignore_index=True)
    recon = build_network(acc.n_nodes, df["src"].to_numpy(),
                          df["dst"].to_numpy(), df["expected"].to_numpy(float),
                          proxy=proxy, allow_self_loops=proxy is not None)
    if not (np.array_equal(net.src, recon.src)
            and np.array_equal(net.dst, recon.dst)):
        raise EdgeSetMismatchError(
            "reconstruction support differs from the observed topology")

    firm_edge = np.ones(net.n_edges, dtype=bool) if proxy is None else \
        (net.src != proxy) & (net.dst != proxy)
    w_emp, w_rec = net.weight[firm_edge], recon.weight[firm_edge]
    weights: dict = {"cosine": cosine_similarity(w_rec, w_emp)}
    if "ci_low" in df.columns and "ci_high" in df.columns:
        weights["ci_coverage"] = ci_coverage(
            w_emp, df["ci_low"].to_numpy(float)[firm_edge],
            df["ci_high"].to_numpy(float)[firm_edge])
    if ns.weight_errors:
        err = normalized_errors(w_emp, w_rec)
        weights.update(rmse=err.rmse, mae=err.mae, medae=err.medae)
    for name, values in (("empirical", w_emp), ("reconstructed", w_rec)):
        try:
            fit = powerlaw_fit(values)
        except InsufficientTailError:
            continue
        weights[f"powerlaw_{name}"] = {"gamma": fit.gamma, "xmin": fit.xmin,
                                       "n_tail": fit.n_tail,
                                       "ks_distance": fit.ks_distance}

    drop = [] if proxy is None else [proxy]
    tech_emp = technical_coefficients(net, acc).drop(drop)
    tech_rec = technical_coefficients(recon, acc).drop(drop)
    alloc_emp = allocation_coefficients(net, acc).drop(drop)
    alloc_rec = allocation_coefficients(recon, acc).drop(drop)
    t_rec, t_emp = align_union(tech_rec.src, tech_rec.dst, tech_rec.value,
                               tech_emp.src, tech_emp.dst, tech_emp.value)
    a_rec, a_emp = align_union(alloc_rec.src, alloc_rec.dst, alloc_rec.value,
                               alloc_emp.src, alloc_emp.dst, alloc_emp.value)

    firms = np.arange(net.n_nodes) if proxy is None else \
        np.delete(np.arange(net.n_nodes), proxy)
    mult_emp = output_multipliers(technical_coefficients(net, acc))[firms]
    mult_rec = output_multipliers(technical_coefficients(recon, acc))[firms]
    infl_emp = influence_from_shares(input_shares(net), ns.alpha)[firms]
    infl_rec = influence_from_shares(input_shares(recon), ns.alpha)[firms]

    _emit({
        "schema": "prodnet-eval/1",
        "weights": weights,
        "technical": _comparison_block(t_rec, t_emp),
        "allocation": _comparison_block(a_rec, a_emp),
        "multipliers": _comparison_block(mult_rec, mult_emp),
        "influence": _comparison_block(infl_rec, infl_emp),
    }, _opt(ns, "out"))
    return 0


def _cmd_run(ns: argparse.Namespace) -> int:
    cfg = _run_config(ns)
    out = _opt(ns, "out")
    result = run_pipeline(cfg, out_dir=out, jobs=_opt(ns, "jobs", 1) or 1)
    match = [p for p in result.summary["sweep"] if p["fraction_label"] == "match"]
    n_pts = len(result.summary["sweep"])
    print(f"completed {n_pts} sweep points x {cfg.replicates} replicates "
          f"in {result.out_dir}" + (" (match point included)" if match else ""))
    return 0


def _cmd_report(ns: argparse.Namespace) -> int:
    run_dir = Path(ns.run if ns.run is not None else _opt(ns, "out", "prodnet-out"))
    summary = reduce_reports(run_dir)
    write_summary_files(run_dir, summary)
    n_rep = sum(p["n_replicates"] for p in summary["sweep"])
    print(f"reduced {n_rep} reports across {len(summary['sweep'])} sweep points "
          f"in {run_dir}")
    if summary["failures"]:
        print(f"{len(summary['failures'])} invalid reports skipped", file=sys.stderr)
        return 1
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parent = _global_parent()
    parser = argparse.ArgumentParser(
        prog="prodnet", parents=[parent],
        description="Reconstruction and shock analysis of production networks "
                    "from partial firm-level data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[parent],
                       help="generate a synthetic economy as CSV files")
    p.set_defaults(handler=_cmd_gen)

    p = sub.add_parser("trim", parents=[parent],
                       help="carve trimmed test networks from an economy")
    p.add_argument("--input", required=True, help="economy directory from gen")
    p.add_argument("--n-keep", type=int, default=None,
                   help="largest sellers to keep (default from config)")
    p.add_argument("--replicates", type=int, default=None,
                   help="independent trims to draw (default from config)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--degree", type=float, default=None,
                       help="target mean degree after deletion")
    group.add_argument("--fraction", type=float, default=None,
                       help="fraction of test-network links to delete")
    p.set_defaults(handler=_cmd_trim)

    p = sub.add_parser("reconstruct", parents=[parent],
                       help="fit expected weights on a fixed support")
    p.add_argument("--topology", required=True, help="edge list CSV (src,dst)")
    p.add_argument("--accounts", required=True,
                   help="accounts CSV with strength targets")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL,
                   help="relative L1 stopping tolerance")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--lambda-source", choices=("ipf", "maxent"), default="ipf",
                   help="rate parameter source for the confidence bounds")
    p.set_defaults(handler=_cmd_reconstruct)

    p = sub.add_parser("multipliers", parents=[parent],
                       help="output multipliers or influence vector of a system")
    p.add_argument("--edges", required=True, help="weighted edge CSV")
    p.add_argument("--accounts", required=True, help="accounts CSV")
    p.add_argument("--kind", choices=("output", "influence"), default="output")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                   help="reset mass of the influence fixed point")
    p.add_argument("--exclude-proxy", action="store_true",
                   help="omit the remainder node from the output")
    p.add_argument("--weight-col", default="weight",
                   help="edge CSV column holding the weights")
    p.set_defaults(handler=_cmd_multipliers)

    p = sub.add_parser("shock", parents=[parent],
                       help="propagate a productivity panel and report volatility")
    p.add_argument("--edges", required=True, help="observed weighted edge CSV")
    p.add_argument("--recon", required=True, help="reconstruction CSV from reconstruct")
    p.add_argument("--accounts", required=True, help="accounts CSV")
    p.add_argument("--periods", type=int, default=DEFAULT_PERIODS)
    p.add_argument("--sigma", type=float, default=DEFAULT_SHOCK_SD,
                   help="per-period shock standard deviation")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--weight-col", default="weight",
                   help="edge CSV column holding the weights")
    p.set_defaults(handler=_cmd_shock)

    p = sub.add_parser("eval", parents=[parent],
                       help="score a reconstruction against the observed system")
    p.add_argument("--topology", required=True,
                   help="observed weighted edge CSV from trim")
    p.add_argument("--accounts", required=True, help="accounts CSV")
    p.add_argument("--recon", required=True, help="reconstruction CSV")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    # weight errors stay opt-in; the heavy tail makes them hard to read
    p.add_argument("--weight-errors", action="store_true",
                   help="include normalized weight errors in the report")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("run", parents=[parent],
                       help="run the full sweep and write its artifact directory")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("report", parents=[parent],
                       help="re-reduce an existing run directory")
    p.add_argument("--run", default=None, help="run directory (default: --out)")
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.handler(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InputUnreadableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ReplicateFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProdnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
