from __future__ import annotations

import numpy as np
import pytest

from prodnet.network import build_network


def random_edge_list(rng: np.random.Generator, n_nodes: int, n_edges: int):
    """Distinct directed edges without self-loops, weights in (0, 10]."""
    pool = rng.permutation(n_nodes * n_nodes)
    src, dst = pool // n_nodes, pool % n_nodes
    keep = src != dst
    src, dst = src[keep][:n_edges], dst[keep][:n_edges]
    w = 10.0 * rng.random(src.size) + 1e-3
    return src, dst, w


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture
def diamond():
    """0 sells to 1 and 2, both sell to 3."""
    return build_network(4, [0, 0, 1, 2], [1, 2, 3, 3], [6.0, 2.0, 5.0, 3.0])
