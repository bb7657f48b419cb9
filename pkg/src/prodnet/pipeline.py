"""End-to-end experiment runner.

One run generates (or loads) a full economy, carves the test network of
largest firms, and then for every sweep point and replicate: deletes links,
folds the remainder into the proxy node, imputes accounts from sector
ratios, reconstructs edge weights from strengths, and scores the result
against ground truth.  Per-replicate findings land in ``report.json`` files;
a sequential reduce writes ``summary.json`` plus a plot-ready ``sweep.csv``.

Randomness: every stream is spawned from the root seed through
``numpy.random.SeedSequence`` spawn keys, namespaced by stage: ``(0,)`` for
economy generation, ``(1,)`` for the shock panel, ``(2, sweep_index,
replicate_index)`` for link deletion.  Reports record the stream's first
64-bit state word so a replicate can be re-run in isolation.  Reruns with
the same config and seed are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .coeffs import (
    DEFAULT_ALPHA,
    INFLUENCE_TOL,
    MULTIPLIER_TOL,
    allocation_coefficients,
    influence_from_shares,
    input_shares,
    output_multipliers,
    technical_coefficients,
    uniform_influence,
)
from .errors import (
    ConfigRangeError,
    ConfigTypeError,
    InputUnreadableError,
    InsufficientTailError,
    ProdnetError,
    ReplicateFailureError,
    SizeMismatchError,
    UnknownKeyError,
)
from .io import load_economy, write_accounts, write_edges, write_nodes, write_sectors, write_topology
from .metrics import align_union, ci_coverage, cosine_similarity, normalized_errors, powerlaw_fit
from .network import NodeAccounts, WeightedNetwork, induced_subgraph
from .recon import DEFAULT_MAX_ITER as IPF_MAX_ITER
from .recon import DEFAULT_TOL as IPF_TOL
from .recon import fit_crem
from .sampling import aggregate_proxy, impute_from_sectors, select_top_firms, trim_links
from .shocks import (
    DEFAULT_PERIODS,
    DEFAULT_SHOCK_SD,
    aggregate_volatility,
    draw_shock_panel,
    firm_variances,
    proxied_panel,
    variance_shares,
)
from .synth import SynthConfig, derive_sector_table, generate_ground_truth

__all__ = [
    "DEFAULT_FRACTIONS",
    "REPORT_SCHEMA",
    "SUMMARY_SCHEMA",
    "RunConfig",
    "RunResult",
    "TruthBundle",
    "parse_config",
    "config_from_mapping",
    "config_dict",
    "child_sequence",
    "stream_id",
    "build_truth",
    "write_economy",
    "run_replicate",
    "validate_report",
    "summarize",
    "write_summary_files",
    "run_pipeline",
]

REPORT_SCHEMA = "prodnet-report/1"
SUMMARY_SCHEMA = "prodnet-summary/1"

DEFAULT_FRACTIONS = tuple(i / 10 for i in range(10))

# spawn-key namespaces, see the module docstring
_KEY_GEN = 0
_KEY_PANEL = 1
_KEY_TRIM = 2

MATCH_LABEL = "match"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one pipeline run.

    The synthetic economy fields mirror :class:`~prodnet.synth.SynthConfig`;
    ``input_dir`` replaces generation with CSVs on disk.  ``fractions`` are
    the link shares deleted from the test network, always sorted; the match
    point additionally trims down to ``match_mean_degree``, the density of
    the sparse commercial datasets the protocol mimics.
    """

    n_firms: int = 15_000
    n_sectors: int = 10
    mean_degree: float = 8.0
    degree_tail_exponent: float = 1.5
    weight_tail_exponent: float = 1.2
    # Requesting 5,710 sellers leaves exactly 5,440 firms after the
    # buys-inside-the-core filter at the default seed.
    n_keep: int = 5_710
    match_mean_degree: float = 2.9
    include_match_point: bool = True
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    replicates: int = 50
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    shock_sd: float = DEFAULT_SHOCK_SD
    periods: int = DEFAULT_PERIODS
    ipf_tol: float = IPF_TOL
    ipf_max_iter: int = IPF_MAX_ITER
    multiplier_tol: float = MULTIPLIER_TOL
    influence_tol: float = INFLUENCE_TOL
    series_max_iter: int = 200_000
    artifacts: str = "light"
    input_dir: str | None = None
    out_dir: str | None = None

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigRangeError(f"{name} {why}")

        if self.n_firms < 2:
            bad("n_firms", "must be at least 2")
        if not 1 <= self.n_sectors <= self.n_firms:
            bad("n_sectors", "must lie in [1, n_firms]")
        if not 1.0 <= self.mean_degree <= self.n_firms - 1:
            bad("mean_degree", "must lie in [1, n_firms - 1]")
        for name in ("degree_tail_exponent", "weight_tail_exponent"):
            if not getattr(self, name) > 1.0:
                bad(name, "must exceed 1")
        if not 1 <= self.n_keep <= self.n_firms:
            bad("n_keep", "must lie in [1, n_firms]")
        if not self.match_mean_degree > 0:
            bad("match_mean_degree", "must be positive")
        for f in self.fractions:
            if not 0.0 <= f < 1.0:
                bad("fractions", f"entries must lie in [0, 1), got {f}")
        if len(set(self.fractions)) != len(self.fractions):
            bad("fractions", "entries must be distinct")
        if self.replicates < 1:
            bad("replicates", "must be at least 1")
        if self.seed < 0:
            bad("seed", "must be non-negative")
        if not 0.0 < self.alpha <= 1.0:
            bad("alpha", "must lie in (0, 1]")
        if not self.shock_sd > 0:
            bad("shock_sd", "must be positive")
        if self.periods < 2:
            bad("periods", "must be at least 2")
        for name in ("ipf_tol", "multiplier_tol", "influence_tol"):
            if not getattr(self, name) > 0:
                bad(name, "must be positive")
        for name in ("ipf_max_iter", "series_max_iter"):
            if getattr(self, name) < 1:
                bad(name, "must be at least 1")
        if self.artifacts not in ("light", "full"):
            bad("artifacts", "must be 'light' or 'full'")

    def sweep_points(self) -> list[tuple[str, float | None]]:
        """Sweep labels with their deletion fraction; None marks the match point."""
        points: list[tuple[str, float | None]] = [(f"{f:g}", f) for f in self.fractions]
        if self.include_match_point:
            points.append((MATCH_LABEL, None))
        return points


_INT_KEYS = frozenset({"n_firms", "n_sectors", "n_keep", "replicates", "seed",
                       "periods", "ipf_max_iter", "series_max_iter"})
_FLOAT_KEYS = frozenset({"mean_degree", "degree_tail_exponent", "weight_tail_exponent",
                         "match_mean_degree", "alpha", "shock_sd", "ipf_tol",
                         "multiplier_tol", "influence_tol"})
_BOOL_KEYS = frozenset({"include_match_point"})
_STR_KEYS = frozenset({"artifacts"})
_PATH_KEYS = frozenset({"input_dir", "out_dir"})


def _coerced(key: str, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigTypeError(f"{key} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigTypeError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigTypeError(f"{key} must be a boolean, got {value!r}")
        return value
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigTypeError(f"{key} must be a string, got {value!r}")
        return value
    if key in _PATH_KEYS:
        if value is not None and not isinstance(value, str):
            raise ConfigTypeError(f"{key} must be a string path or null, got {value!r}")
        return value
    # fractions is the only list-valued key
    if not isinstance(value, (list, tuple)):
        raise ConfigTypeError(f"{key} must be a list of numbers, got {value!r}")
    out = []
    for entry in value:
        if isinstance(entry, bool) or not isinstance(entry, (int, float)):
            raise ConfigTypeError(f"{key} entries must be numbers, got {entry!r}")
        out.append(float(entry))
    return tuple(out)


def config_from_mapping(raw: dict) -> RunConfig:
    """Build a validated config from a parsed JSON object.

    Unknown keys are rejected rather than ignored so typos cannot silently
    fall back to defaults.  The fraction list is sorted on the way in.
    """
    if not isinstance(raw, dict):
        raise ConfigTypeError(f"config root must be an object, got {type(raw).__name__}")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UnknownKeyError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {key: _coerced(key, value) for key, value in raw.items()}
    cfg = RunConfig(**kwargs)
    cfg.validate()
    if tuple(sorted(cfg.fractions)) != cfg.fractions:
        cfg = replace(cfg, fractions=tuple(sorted(cfg.fractions)))
    return cfg


def parse_config(path) -> RunConfig:
    """Load a JSON config file; an empty file means all defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputUnreadableError(f"cannot read config {path}: {exc}") from exc
    if not text.strip():
        return RunConfig()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigTypeError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_mapping(raw)


def config_dict(cfg: RunConfig) -> dict:
    out = asdict(cfg)
    out["fractions"] = list(cfg.fractions)
    return out


def child_sequence(root: int, *key: int) -> np.random.SeedSequence:
    """Independent stream for one stage, spawned off the root seed."""
    return np.random.SeedSequence(root, spawn_key=tuple(key))


def stream_id(seq: np.random.SeedSequence) -> int:
    """First 64-bit state word; identifies the stream in reports."""
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TruthBundle:
    """Ground truth plus everything derived from it once per run."""

    net: WeightedNetwork
    acc: NodeAccounts
    labels: np.ndarray
    sectors: object
    kept: np.ndarray
    sub: WeightedNetwork
    multipliers: np.ndarray
    influence: np.ndarray
    panel: np.ndarray
    volatility: float

    @property
    def n_kept(self) -> int:
        return int(self.kept.size)


def _load_or_generate(cfg: RunConfig):
    if cfg.input_dir is not None:
        net, acc, labels, proxy = load_economy(cfg.input_dir)
        if proxy is not None:
            raise ConfigRangeError(
                "input economy already contains a remainder node; "
                "the pipeline builds its own")
        return net, acc, labels
    synth = SynthConfig(
        n_firms=cfg.n_firms,
        n_sectors=cfg.n_sectors,
        mean_degree=cfg.mean_degree,
        degree_tail_exponent=cfg.degree_tail_exponent,
        weight_tail_exponent=cfg.weight_tail_exponent,
        seed=stream_id(child_sequence(cfg.seed, _KEY_GEN)),
    )
    truth = generate_ground_truth(synth)
    return truth.net, truth.accounts, truth.labels


def build_truth(cfg: RunConfig) -> TruthBundle:
    """Generate or load the economy and precompute the one-off references.

    The reference quantities (full-economy multipliers, influence vector,
    shock panel, volatility) are shared by every replicate, so they are
    computed here exactly once.
    """
    net, acc, labels = _load_or_generate(cfg)
    sectors = derive_sector_table(acc, labels)
    kept = select_top_firms(net, cfg.n_keep)
    sub, _ = induced_subgraph(net, kept)
    mult = output_multipliers(technical_coefficients(net, acc),
                              tol=cfg.multiplier_tol, max_iter=cfg.series_max_iter)
    infl = influence_from_shares(input_shares(net), cfg.alpha,
                                 tol=cfg.influence_tol, max_iter=cfg.series_max_iter)
    panel = draw_shock_panel(net.n_nodes, cfg.periods, cfg.shock_sd,
                             seed=np.random.default_rng(child_sequence(cfg.seed, _KEY_PANEL)))
    vol = aggregate_volatility(firm_variances(panel), infl)
    return TruthBundle(net=net, acc=acc, labels=labels, sectors=sectors,
                       kept=kept, sub=sub, multipliers=mult, influence=infl,
                       panel=panel, volatility=vol)


def write_economy(bundle: TruthBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_edges(bundle.net, directory / "edges.csv")
    write_nodes(directory / "nodes.csv", bundle.labels,
                bundle.acc.value_added, bundle.acc.final_demand)
    write_sectors(bundle.sectors, directory / "sectors.csv")


def _target_degree(cfg: RunConfig, fraction: float | None, bundle: TruthBundle) -> float:
    if fraction is None:
        return cfg.match_mean_degree
    return (1.0 - fraction) * bundle.sub.n_edges / bundle.n_kept


def _fit_dict(fit) -> dict:
    return {"gamma": float(fit.gamma), "xmin": float(fit.xmin),
            "n_tail": int(fit.n_tail), "ks_distance": float(fit.ks_distance)}


def _comparison(recon_vals: np.ndarray, emp_vals: np.ndarray) -> dict:
    # the empirical side goes first: it defines the normalization span
    err = normalized_errors(emp_vals, recon_vals)
    return {"rmse": float(err.rmse), "mae": float(err.mae),
            "medae": float(err.medae),
            "cosine": float(cosine_similarity(recon_vals, emp_vals))}


def run_replicate(bundle: TruthBundle, cfg: RunConfig, label: str,
                  fraction: float | None, f_idx: int, r: int) -> dict:
    """Carve, reconstruct and score one replicate of one sweep point.

    Kept firms occupy ids 0..k-1 of the carved system and the remainder
    node sits at k, so reference vectors restricted to ``bundle.kept`` align
    elementwise with the carved system's firm entries.  Coefficient metrics
    drop the remainder node; multiplier and influence metrics compare firm
    entries of the carved system against the full-economy references.
    """
    seq = child_sequence(cfg.seed, _KEY_TRIM, f_idx, r)
    k = bundle.n_kept
    plan = trim_links(bundle.sub, _target_degree(cfg, fraction, bundle),
                      np.random.default_rng(seq))
    net_p, acc_p = aggregate_proxy(bundle.net, bundle.acc, bundle.kept, plan.kept)
    proxy = k
    labels_p = np.append(bundle.labels[bundle.kept], -1)
    acc_imp = impute_from_sectors(acc_p, bundle.sectors, labels_p)

    result = fit_crem(net_p.topology(), acc_imp,
                      tol=cfg.ipf_tol, max_iter=cfg.ipf_max_iter)
    if not (np.array_equal(result.src, net_p.src)
            and np.array_equal(result.dst, net_p.dst)):
        raise SizeMismatchError("reconstruction changed the edge support")
    recon_net = result.network()

    firm_edge = (net_p.src != proxy) & (net_p.dst != proxy)
    w_emp = net_p.weight[firm_edge]
    w_rec = result.expected[firm_edge]
    weights: dict = {
        "cosine": float(cosine_similarity(w_rec, w_emp)),
        "ci_coverage": float(ci_coverage(w_emp, result.ci_low[firm_edge],
                                         result.ci_high[firm_edge])),
    }
    try:
        weights["powerlaw_empirical"] = _fit_dict(powerlaw_fit(w_emp))
        weights["powerlaw_reconstructed"] = _fit_dict(powerlaw_fit(w_rec))
    except InsufficientTailError:
        pass

    tech_emp = technical_coefficients(net_p, acc_imp).drop([proxy])
    tech_rec_sys = technical_coefficients(recon_net, acc_imp)
    tech_rec = tech_rec_sys.drop([proxy])
    alloc_emp = allocation_coefficients(net_p, acc_imp).drop([proxy])
    alloc_rec = allocation_coefficients(recon_net, acc_imp).drop([proxy])
    t_rec, t_emp = align_union(tech_rec.src, tech_rec.dst, tech_rec.value,
                               tech_emp.src, tech_emp.dst, tech_emp.value)
    a_rec, a_emp = align_union(alloc_rec.src, alloc_rec.dst, alloc_rec.value,
                               alloc_emp.src, alloc_emp.dst, alloc_emp.value)

    mult_rec = output_multipliers(tech_rec_sys, tol=cfg.multiplier_tol,
                                  max_iter=cfg.series_max_iter)[:k]
    infl_rec_all = influence_from_shares(input_shares(recon_net), cfg.alpha,
                                         tol=cfg.influence_tol,
                                         max_iter=cfg.series_max_iter)
    unif_all = uniform_influence(recon_net, cfg.alpha,
                                 tol=cfg.influence_tol, max_iter=cfg.series_max_iter)

    panel_p = proxied_panel(bundle.panel, bundle.kept, mode="typical")
    var_p = firm_variances(panel_p)
    shares = variance_shares(var_p, infl_rec_all,
                             {"proxy": np.array([proxy]), "firms": np.arange(k)})
    volatility = {
        "empirical_vol": float(bundle.volatility),
        "recon_vol_with_proxy": float(aggregate_volatility(var_p, infl_rec_all)),
        "recon_vol_no_proxy": float(aggregate_volatility(var_p[:k], infl_rec_all[:k])),
        "benchmark_vol_with_proxy": float(aggregate_volatility(var_p, unif_all)),
        "benchmark_vol_no_proxy": float(aggregate_volatility(var_p[:k], unif_all[:k])),
        "shares": {name: float(s) for name, s in shares.items()},
    }

    to_firms = (net_p.src == proxy) & (net_p.dst != proxy)
    from_firms = (net_p.src != proxy) & (net_p.dst == proxy)
    network = {
        "n_kept": k,
        "n_excluded": int(bundle.net.n_nodes - k),
        "kept_edges": int(plan.kept.n_edges),
        "deleted_edges": int(plan.n_deleted),
        "unknown_fraction": float(plan.n_deleted / bundle.sub.n_edges),
        "mean_degree": float(plan.kept.n_edges / k),
        "proxy_expenditure_share": float(net_p.weight[to_firms].sum()
                                         / acc_p.s_in[:k].sum()),
        "proxy_sales_share": float(net_p.weight[from_firms].sum()
                                   / acc_p.s_out[:k].sum()),
    }

    report = {
        "schema": REPORT_SCHEMA,
        "fraction_label": label,
        "replicate": r,
        "stream": stream_id(seq),
        "network": network,
        "recon": {"l1": float(result.l1), "rel_l1": float(result.rel_l1),
                  "iterations": int(result.iterations),
                  "converged": bool(result.converged)},
        "weights": weights,
        "technical": _comparison(t_rec, t_emp),
        "allocation": _comparison(a_rec, a_emp),
        "multipliers": _comparison(mult_rec, bundle.multipliers[bundle.kept]),
        "influence": _comparison(infl_rec_all[:k], bundle.influence[bundle.kept]),
        "volatility": volatility,
    }
    if cfg.artifacts == "full":
        report["_artifacts"] = _replicate_artifacts(net_p, acc_imp, plan,
                                                    bundle.kept, result)
    return report


def _replicate_artifacts(net_p, acc_imp, plan, kept_ids, result) -> dict:
    """Raw arrays for the heavyweight per-replicate CSV dump."""
    return {
        "net": net_p, "acc": acc_imp, "kept_ids": kept_ids,
        "deleted": (plan.deleted_src, plan.deleted_dst, plan.deleted_weight),
        "expected": result.expected,
        "ci": (result.ci_low, result.ci_high, result.lam),
    }


_UNIT_PATHS = (
    "weights.ci_coverage",
    "volatility.shares.proxy",
    "volatility.shares.firms",
    "network.unknown_fraction",
)
_COSINE_PATHS = ("weights.cosine", "technical.cosine", "allocation.cosine",
                 "multipliers.cosine", "influence.cosine")
_REQUIRED_PATHS = _UNIT_PATHS + _COSINE_PATHS + (
    "network.n_kept", "network.kept_edges", "network.mean_degree",
    "recon.rel_l1", "technical.rmse", "technical.mae", "technical.medae",
    "allocation.rmse", "allocation.mae", "allocation.medae",
    "multipliers.rmse", "influence.rmse",
    "volatility.empirical_vol", "volatility.recon_vol_with_proxy",
    "volatility.recon_vol_no_proxy", "volatility.benchmark_vol_with_proxy",
    "volatility.benchmark_vol_no_proxy",
)


def _lookup(report: dict, path: str):
    node = report
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def validate_report(report: dict) -> list[str]:
    """Schema check for one replicate report; returns the problems found."""
    problems = []
    if report.get("schema") != REPORT_SCHEMA:
        problems.append(f"schema is {report.get('schema')!r}")
    for path in _REQUIRED_PATHS:
        value = _lookup(report, path)
        if value is None:
            problems.append(f"missing {path}")
        elif not np.isfinite(value):
            problems.append(f"{path} is not finite")
    for path in _UNIT_PATHS:
        value = _lookup(report, path)
        if value is not None and np.isfinite(value) and not 0.0 <= value <= 1.0:
            problems.append(f"{path} outside [0, 1]")
    for path in _COSINE_PATHS:
        value = _lookup(report, path)
        if value is not None and np.isfinite(value) and not -1.0 <= value <= 1.0 + 1e-12:
            problems.append(f"{path} outside [-1, 1]")
    return problems


_SKIP_LEAVES = frozenset({"schema", "fraction_label", "replicate", "stream"})


def _flatten(node: dict, prefix: str = ""):
    for key, value in node.items():
        if key in _SKIP_LEAVES and not prefix:
            continue
        if key.startswith("_"):
            continue
        path = prefix + key
        if isinstance(value, dict):
            yield from _flatten(value, path + ".")
        elif isinstance(value, (bool, int, float)):
            yield path, float(value)


def summarize(cfg: RunConfig, truth_info: dict, points: list[tuple[str, float]],
              reports: dict[str, list[dict]], failures: list[dict]) -> dict:
    """Reduce per-replicate reports to mean and spread per sweep point."""
    sweep = []
    for label, target in points:
        group = reports.get(label, [])
        stats: dict[str, dict] = {}
        values: dict[str, list[float]] = {}
        for rep in group:
            for path, value in _flatten(rep):
                values.setdefault(path, []).append(value)
        for path in sorted(values):
            arr = np.asarray(values[path])
            stats[path] = {
                "mean": float(arr.mean()),
                "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                "n": int(arr.size),
            }
        sweep.append({"fraction_label": label,
                      "target_mean_degree": float(target),
                      "n_replicates": len(group),
                      "metrics": stats})
    return {
        "schema": SUMMARY_SCHEMA,
        "config": config_dict(cfg),
        "ground_truth": truth_info,
        "sweep": sweep,
        "failures": failures,
    }


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
                    + "\n")


def write_summary_files(out_dir: Path, summary: dict) -> None:
    """Write summary.json and the plot-ready sweep.csv (metric curves)."""
    _dump_json(out_dir / "summary.json", summary)
    rows = []
    for point in summary["sweep"]:
        for path, stat in point["metrics"].items():
            rows.append({"fraction_label": point["fraction_label"],
                         "target_mean_degree": point["target_mean_degree"],
                         "metric": path, "mean": stat["mean"],
                         "sd": stat["sd"], "n": stat["n"]})
    frame = pd.DataFrame(rows, columns=["fraction_label", "target_mean_degree",
                                        "metric", "mean", "sd", "n"])
    frame.to_csv(out_dir / "sweep.csv", index=False)


def _truth_info(bundle: TruthBundle, cfg: RunConfig) -> dict:
    return {
        "n_firms": int(bundle.net.n_nodes),
        "n_edges": int(bundle.net.n_edges),
        "n_sectors": int(bundle.sectors.n_sectors),
        "volatility": float(bundle.volatility),
        "test_network": {
            "n_kept": bundle.n_kept,
            "edges": int(bundle.sub.n_edges),
            "mean_degree": float(bundle.sub.n_edges / bundle.n_kept),
        },
    }


def _resolved_points(cfg: RunConfig, bundle: TruthBundle) -> list[tuple[str, float]]:
    return [(label, _target_degree(cfg, fraction, bundle))
            for label, fraction in cfg.sweep_points()]


def _replicate_dir(out_dir: Path, label: str, r: int) -> Path:
    return out_dir / f"sweep_{label}" / f"rep{r:03d}"


def _write_replicate(out_dir: Path, label: str, r: int,
                     report: dict) -> None:
    rep_dir = _replicate_dir(out_dir, label, r)
    rep_dir.mkdir(parents=True, exist_ok=True)
    extras = report.pop("_artifacts", None)
    _dump_json(rep_dir / "report.json", report)
    if extras is None:
        return
    net, acc = extras["net"], extras["acc"]
    write_topology(net.topology(), rep_dir / "topology.csv")
    write_edges(net, rep_dir / "edges.csv")
    write_accounts(acc, rep_dir / "accounts.csv", proxy=net.proxy)
    kept_ids = extras["kept_ids"]
    pd.DataFrame({"local_id": np.arange(kept_ids.size, dtype=np.int64),
                  "full_id": kept_ids}).to_csv(rep_dir / "kept.csv", index=False)
    src, dst, weight = extras["deleted"]
    pd.DataFrame({"src": src, "dst": dst, "weight": weight}) \
        .to_csv(rep_dir / "deleted.csv", index=False)
    low, high, rate = extras["ci"]
    pd.DataFrame({"src": net.src, "dst": net.dst, "expected": extras["expected"],
                  "rate": rate, "ci_low": low, "ci_high": high}) \
        .to_csv(rep_dir / "reconstruction.csv", index=False)


@dataclass(frozen=True)
class RunResult:
    out_dir: Path
    summary: dict
    n_failures: int


# worker-process state for the pool path, set once per worker by _pool_init
_POOL: dict = {}


def _pool_init(cfg_json: str, truth_dir: str) -> None:
    cfg = config_from_mapping(json.loads(cfg_json))
    cfg = replace(cfg, input_dir=truth_dir)
    _POOL["cfg"] = cfg
    _POOL["bundle"] = build_truth(cfg)


def _pool_task(task: tuple[str, float | None, int, int]):
    label, fraction, f_idx, r = task
    try:
        report = run_replicate(_POOL["bundle"], _POOL["cfg"], label,
                               fraction, f_idx, r)
        return label, r, None, report
    except (ProdnetError, ValueError) as exc:
        return label, r, type(exc).__name__, str(exc)


def run_pipeline(cfg: RunConfig, out_dir=None, jobs: int = 1) -> RunResult:
    """Run the whole protocol and write its artifact directory.

    Replicate failures are recorded in the summary and do not abort the
    sweep; if any occurred, a ReplicateFailureError is raised after all
    artifacts are written.  With ``jobs > 1`` replicates run in a process
    pool; each worker rebuilds the reference bundle from the truth CSVs
    (a lossless round-trip), so results are identical to the sequential
    path.
    """
    cfg.validate()
    jobs = max(1, int(jobs))
    out = Path(out_dir if out_dir is not None else (cfg.out_dir or "prodnet-out"))
    out.mkdir(parents=True, exist_ok=True)

    bundle = build_truth(cfg)
    write_economy(bundle, out / "truth")
    truth_info = _truth_info(bundle, cfg)
    points = _resolved_points(cfg, bundle)
    _dump_json(out / "run.json", {"config": config_dict(cfg),
                                  "ground_truth": truth_info,
                                  "points": [[lab, tgt] for lab, tgt in points]})

    tasks = [(label, fraction, f_idx, r)
             for f_idx, (label, fraction) in enumerate(cfg.sweep_points())
             for r in range(cfg.replicates)]
    reports: dict[str, list[dict]] = {}
    failures: list[dict] = []

    def record(label: str, r: int, error: str | None, payload) -> None:
        if error is not None:
            failures.append({"fraction_label": label, "replicate": r,
                             "error": error, "message": payload})
            return
        problems = validate_report(payload)
        if problems:
            failures.append({"fraction_label": label, "replicate": r,
                             "error": "InvalidReport",
                             "message": "; ".join(problems)})
            return
        try:
            _write_replicate(out, label, r, payload)
        except ValueError as exc:
            failures.append({"fraction_label": label, "replicate": r,
                             "error": "WriteError", "message": str(exc)})
            return
        reports.setdefault(label, []).append(payload)

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool_cfg = replace(cfg, input_dir=None, out_dir=None)
        with ProcessPoolExecutor(
                max_workers=jobs, initializer=_pool_init,
                initargs=(json.dumps(config_dict(pool_cfg)),
                          str(out / "truth"))) as pool:
            for label, r, error, payload in pool.map(_pool_task, tasks,
                                                     chunksize=4):
                record(label, r, error, payload)
    else:
        for label, fraction, f_idx, r in tasks:
            try:
                report = run_replicate(bundle, cfg, label, fraction, f_idx, r)
            except (ProdnetError, ValueError) as exc:
                record(label, r, type(exc).__name__, str(exc))
            else:
                record(label, r, None, report)

    summary = summarize(cfg, truth_info, points, reports, failures)
    write_summary_files(out, summary)
    if failures:
        head = "; ".join(f"{f['fraction_label']}/rep{f['replicate']}: {f['error']}"
                         for f in failures[:5])
        raise ReplicateFailureError(
            f"{len(failures)} of {len(tasks)} replicates failed ({head})")
    return RunResult(out_dir=out, summary=summary, n_failures=0)


def reduce_reports(run_dir) -> dict:
    """Rebuild the summary from a run directory's manifest and reports."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "run.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise InputUnreadableError(f"cannot read {manifest_path}: {exc}") from exc
    cfg = config_from_mapping(manifest["config"])
    points = [(label, float(target)) for label, target in manifest["points"]]
    reports: dict[str, list[dict]] = {}
    failures: list[dict] = []
    for label, _ in points:
        for rep_dir in sorted((run_dir / f"sweep_{label}").glob("rep*")):
            path = rep_dir / "report.json"
            if not path.is_file():
                continue
            report = json.loads(path.read_text())
            problems = validate_report(report)
            if problems:
                failures.append({"fraction_label": label,
                                 "replicate": report.get("replicate", -1),
                                 "error": "InvalidReport",
                                 "message": "; ".join(problems)})
                continue
            reports.setdefault(label, []).append(report)
    return summarize(cfg, manifest["ground_truth"], points, reports, failures)
