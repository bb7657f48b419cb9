"""CSV interfaces shared by the CLI subcommands.

All files are plain headed CSV.  Floats are written with shortest-round-trip
formatting, so a write/read cycle is lossless and reruns with the same seed
produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InputUnreadableError
from .network import NodeAccounts, Topology, WeightedNetwork, build_network, build_topology, strengths
from .synth import SectorTable

__all__ = [
    "read_csv",
    "write_edges",
    "read_edges",
    "write_nodes",
    "read_nodes",
    "write_sectors",
    "read_sectors",
    "write_topology",
    "read_topology",
    "write_accounts",
    "read_accounts",
    "load_economy",
]


def read_csv(path, columns: tuple[str, ...]) -> pd.DataFrame:
    """Read a CSV and insist on the expected columns.

    Floats are parsed with the slow exact converter so that write/read
    round-trips are bit-identical; reruns from on-disk economies must
    reproduce in-memory runs byte for byte.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise InputUnreadableError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise InputUnreadableError(f"{path} lacks columns {missing}")
    return df


def write_edges(net: WeightedNetwork, path) -> None:
    pd.DataFrame({"src": net.src, "dst": net.dst, "weight": net.weight}) \
        .to_csv(path, index=False)


def read_edges(path, n_nodes: int | None = None,
               proxy: int | None = None) -> WeightedNetwork:
    df = read_csv(path, ("src", "dst", "weight"))
    if n_nodes is None:
        n_nodes = int(max(df["src"].max(), df["dst"].max())) + 1 if len(df) else 0
    return build_network(n_nodes, df["src"].to_numpy(), df["dst"].to_numpy(),
                         df["weight"].to_numpy(), proxy=proxy,
                         allow_self_loops=proxy is not None)


def write_nodes(path, sector: np.ndarray, value_added: np.ndarray,
                final_demand: np.ndarray, proxy: int | None = None) -> None:
    n = sector.shape[0]
    is_proxy = np.zeros(n, dtype=np.int64)
    if proxy is not None:
        is_proxy[proxy] = 1
    pd.DataFrame({
        "id": np.arange(n, dtype=np.int64),
        "sector": sector,
        "value_added": value_added,
        "final_demand": final_demand,
        "is_proxy": is_proxy,
    }).to_csv(path, index=False)


def read_nodes(path) -> pd.DataFrame:
    df = read_csv(path, ("id", "sector", "value_added", "final_demand", "is_proxy"))
    return df.sort_values("id", ignore_index=True)


def write_sectors(table: SectorTable, path) -> None:
    pd.DataFrame({
        "sector": np.arange(table.n_sectors, dtype=np.int64),
        "q": table.q, "x": table.x, "d": table.d, "y": table.y, "f": table.f,
    }).to_csv(path, index=False)


def read_sectors(path) -> SectorTable:
    df = read_csv(path, ("sector", "q", "x", "d", "y", "f")).sort_values("sector")
    return SectorTable(q=df["q"].to_numpy(float), x=df["x"].to_numpy(float),
                       d=df["d"].to_numpy(float), y=df["y"].to_numpy(float),
                       f=df["f"].to_numpy(float))


def write_topology(topo: Topology, path) -> None:
    pd.DataFrame({"src": topo.src, "dst": topo.dst}).to_csv(path, index=False)


def read_topology(path, n_nodes: int, proxy: int | None = None) -> Topology:
    df = read_csv(path, ("src", "dst"))
    return build_topology(n_nodes, df["src"].to_numpy(), df["dst"].to_numpy(),
                          proxy=proxy, allow_self_loops=proxy is not None)


def write_accounts(acc: NodeAccounts, path, proxy: int | None = None) -> None:
    n = acc.n_nodes
    is_proxy = np.zeros(n, dtype=np.int64)
    if proxy is not None:
        is_proxy[proxy] = 1
    pd.DataFrame({
        "id": np.arange(n, dtype=np.int64),
        "s_in": acc.s_in, "s_out": acc.s_out,
        "value_added": acc.value_added, "final_demand": acc.final_demand,
        "is_proxy": is_proxy,
    }).to_csv(path, index=False)


def read_accounts(path) -> tuple[NodeAccounts, int | None]:
    df = read_csv(path, ("id", "s_in", "s_out", "value_added",
                         "final_demand", "is_proxy")).sort_values("id")
    acc = NodeAccounts.from_components(
        df["s_in"].to_numpy(float), df["s_out"].to_numpy(float),
        df["value_added"].to_numpy(float), df["final_demand"].to_numpy(float))
    flagged = np.flatnonzero(df["is_proxy"].to_numpy() != 0)
    proxy = int(flagged[0]) if flagged.size else None
    return acc, proxy


def load_economy(directory) -> tuple[WeightedNetwork, NodeAccounts, np.ndarray, int | None]:
    """Load edges.csv + nodes.csv from ``directory``.

    Strengths come from the edge list; value added, final demand, sector
    labels and the proxy marker from the node table.
    Returns (network, accounts, labels, proxy).
    """
    directory = Path(directory)
    nodes = read_nodes(directory / "nodes.csv")
    n = len(nodes)
    flagged = np.flatnonzero(nodes["is_proxy"].to_numpy() != 0)
    proxy = int(flagged[0]) if flagged.size else None
    net = read_edges(directory / "edges.csv", n_nodes=n, proxy=proxy)
    s_in, s_out = strengths(net)
    acc = NodeAccounts.from_components(
        s_in, s_out, nodes["value_added"].to_numpy(float),
        nodes["final_demand"].to_numpy(float))
    return net, acc, nodes["sector"].to_numpy(np.int64), proxy
