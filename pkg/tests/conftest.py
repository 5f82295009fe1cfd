import numpy as np
import pytest

from grfgp.graphs import Graph


def random_graph(seed: int, n: int = 12, density: float = 0.35, weighted: bool = True) -> Graph:
    """Random weighted graph; may contain isolated nodes."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < density
    if not keep.any():
        keep[0] = True
    w = rng.uniform(0.5, 1.5, keep.sum()) if weighted else None
    return Graph.from_edges(n, iu[keep], ju[keep], w)


def connected_graph(seed: int, n: int = 12, density: float = 0.3) -> Graph:
    """Random weighted graph with a ring backbone (no isolated nodes)."""
    rng = np.random.default_rng(seed)
    ring_u = np.arange(n)
    ring_v = (ring_u + 1) % n
    iu, ju = np.triu_indices(n, k=2)
    mask = (ju - iu) != n - 1  # avoid duplicating the wrap-around ring edge
    iu, ju = iu[mask], ju[mask]
    keep = rng.random(len(iu)) < density
    u = np.concatenate([np.minimum(ring_u, ring_v), iu[keep]])
    v = np.concatenate([np.maximum(ring_u, ring_v), ju[keep]])
    w = rng.uniform(0.5, 1.5, len(u))
    return Graph.from_edges(n, u, v, w)


@pytest.fixture
def path3() -> Graph:
    return Graph.from_edges(3, [0, 1], [1, 2])
