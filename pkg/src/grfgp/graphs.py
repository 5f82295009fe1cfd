"""Weighted undirected graphs: representation, Laplacians, generators, IO.

Nodes are dense 0-based integers.  The adjacency is stored in compressed
row form with both directions of every edge present, which is what the
walk sampler consumes directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "WalkMatrix",
    "Objective",
    "IsolatedNodeError",
    "laplacian",
    "normalized_laplacian",
    "normalized_adjacency",
    "generate",
    "load_edge_list",
    "save_edge_list",
    "approx_diameter",
]

GENERATOR_KINDS = ("ring", "grid", "sbm", "unimodal", "multimodal")


class IsolatedNodeError(ValueError):
    """A node with zero weighted degree where positive degree is required."""


@dataclass(frozen=True)
class Graph:
    """Symmetric weighted adjacency in CSR layout.

    Attributes
    ----------
    indptr, indices : int64 arrays
        CSR structure; neighbours of ``i`` are
        ``indices[indptr[i]:indptr[i+1]]``, sorted ascending.
    weights : float64 array
        Edge weights aligned with ``indices``; strictly positive.
    degrees : int64 array
        Unweighted degree (neighbour count) per node.
    weighted_degrees : float64 array
        Row sums of the adjacency.
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    degrees: np.ndarray = field(repr=False)
    weighted_degrees: np.ndarray = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    @staticmethod
    def from_edges(num_nodes: int, u, v, weights=None) -> "Graph":
        """Build a graph from unique undirected edges (u[k], v[k]).

        Edges must not repeat (in either orientation) and must not be
        self-loops; weights default to 1 and must be strictly positive.
        """
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if weights is None:
            w = np.ones(len(u), dtype=np.float64)
        else:
            w = np.asarray(weights, dtype=np.float64)
        if not (len(u) == len(v) == len(w)):
            raise ValueError("edge arrays must have equal length")
        if num_nodes < 1:
            raise ValueError("graph must have at least one node")
        if len(u) and (u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= num_nodes):
            raise ValueError("node id out of range")
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("edge weights must be finite and strictly positive")

        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        if len(lo) > 1:
            key = lo * num_nodes + hi
            if len(np.unique(key)) != len(key):
                raise ValueError("duplicate edges in input")

        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        dat = np.concatenate([w, w])
        order = np.lexsort((cols, rows))
        rows, cols, dat = rows[order], cols[order], dat[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        degrees = np.diff(indptr)
        wdeg = np.zeros(num_nodes, dtype=np.float64)
        np.add.at(wdeg, rows, dat)
        return Graph(indptr, cols, dat, degrees, wdeg)

    def to_scipy(self) -> sp.csr_matrix:
        n = self.num_nodes
        return sp.csr_matrix(
            (self.weights.copy(), self.indices.copy(), self.indptr.copy()), shape=(n, n)
        )

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]


@dataclass(frozen=True)
class WalkMatrix:
    """Symmetric matrix the walk sampler estimates power series of.

    Entries are stored aligned with the owning graph's CSR structure
    (``data[k]`` is the value at the edge slot ``k``); zeros encode
    positions absent from the walk matrix but present in the adjacency.
    """

    graph: Graph
    data: np.ndarray

    def __post_init__(self):
        if len(self.data) != len(self.graph.indices):
            raise ValueError("walk data must align with the graph's CSR slots")

    @staticmethod
    def from_adjacency(g: Graph) -> "WalkMatrix":
        """Walk matrix equal to the weighted adjacency itself."""
        return WalkMatrix(g, g.weights.copy())

    @staticmethod
    def from_scipy(g: Graph, mat) -> "WalkMatrix":
        """Align an explicit sparse symmetric matrix onto ``g``'s support."""
        m = sp.csr_matrix(mat)
        if m.shape != (g.num_nodes, g.num_nodes):
            raise ValueError("shape mismatch with graph")
        asym = abs(m - m.T)
        if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(m).max()):
            raise ValueError("walk matrix must be symmetric")
        data = np.zeros(len(g.indices), dtype=np.float64)
        m = m.tocsr()
        for i in range(g.num_nodes):
            cols = g.indices[g.indptr[i] : g.indptr[i + 1]]
            row = m[i].toarray().ravel()
            picked = row[cols]
            row[cols] = 0.0
            if np.any(row):
                raise ValueError("walk matrix support must be a subset of the adjacency")
            data[g.indptr[i] : g.indptr[i + 1]] = picked
        return WalkMatrix(g, data)

    def to_scipy(self) -> sp.csr_matrix:
        n = self.graph.num_nodes
        out = sp.csr_matrix(
            (self.data.copy(), self.graph.indices.copy(), self.graph.indptr.copy()),
            shape=(n, n),
        )
        return out

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


def laplacian(g: Graph) -> sp.csr_matrix:
    """Combinatorial Laplacian: diag(weighted degrees) minus adjacency."""
    n = g.num_nodes
    return (sp.diags(g.weighted_degrees, format="csr") - g.to_scipy()).tocsr()


def _require_positive_degrees(g: Graph):
    bad = np.flatnonzero(g.weighted_degrees <= 0)
    if len(bad):
        raise IsolatedNodeError(f"node {int(bad[0])} has zero weighted degree")


def normalized_laplacian(g: Graph) -> sp.csr_matrix:
    """Degree-normalised Laplacian; spectrum lies in [0, 2]."""
    _require_positive_degrees(g)
    inv_sqrt = 1.0 / np.sqrt(g.weighted_degrees)
    d = sp.diags(inv_sqrt, format="csr")
    return (d @ laplacian(g) @ d).tocsr()


def normalized_adjacency(g: Graph) -> WalkMatrix:
    """Degree-normalised adjacency; spectrum lies in [-1, 1].

    This is the default walk matrix: power series in it re-express
    kernels of the normalised Laplacian while keeping walks on the graph.
    """
    _require_positive_degrees(g)
    s = np.sqrt(g.weighted_degrees)
    rows = np.repeat(np.arange(g.num_nodes), g.degrees)
    data = g.weights / (s[rows] * s[g.indices])
    return WalkMatrix(g, data)


@dataclass(frozen=True)
class Objective:
    """Ground-truth function on nodes plus a noisy-observation accessor.

    Values are stored pre-noise; ``observe`` adds seeded Gaussian noise
    derived from ``(seed, node)`` so observations are deterministic and
    independent of query order.
    """

    values: np.ndarray
    noise_var: float = 0.0
    seed: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.values)

    @property
    def best_node(self) -> int:
        return int(np.argmax(self.values))  # ties broken by lowest id

    @property
    def best_value(self) -> float:
        return float(self.values[self.best_node])

    def observe(self, node: int) -> float:
        value = float(self.values[node])
        if self.noise_var == 0.0:
            return value
        rng = np.random.default_rng([self.seed, int(node)])
        return value + np.sqrt(self.noise_var) * rng.standard_normal()

    def observe_many(self, nodes) -> np.ndarray:
        return np.array([self.observe(v) for v in nodes], dtype=np.float64)


def _grid_edges(rows: int, cols: int):
    ids = np.arange(rows * cols).reshape(rows, cols)
    right = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
    down = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
    e = np.concatenate([right, down])
    return e[:, 0], e[:, 1]


def _gen_ring(seed, num_nodes, k=2, waves=1, noise_var=0.1):
    if num_nodes < 3:
        raise ValueError("ring size must be >= 3")
    if k < 2 or k % 2:
        raise ValueError("k must be an even number of nearest neighbours")
    if k // 2 >= (num_nodes + 1) // 2:
        raise ValueError("too many chords for the ring size")
    idx = np.arange(num_nodes, dtype=np.int64)
    us, vs = [], []
    for j in range(1, k // 2 + 1):
        us.append(idx)
        vs.append((idx + j) % num_nodes)
    g = Graph.from_edges(num_nodes, np.concatenate(us), np.concatenate(vs))
    values = np.sin(2.0 * np.pi * waves * idx / num_nodes)
    return g, values, noise_var


def _gen_grid(seed, rows, cols, noise_var=0.1):
    if rows < 2 or cols < 2:
        raise ValueError("grid side lengths must be >= 2")
    u, v = _grid_edges(rows, cols)
    g = Graph.from_edges(rows * cols, u, v)
    return g, np.zeros(rows * cols), noise_var


def _bump(rows, cols, center, width):
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    d2 = (r - center[0]) ** 2 + (c - center[1]) ** 2
    return np.exp(-d2 / (2.0 * width**2)).ravel()


def _gen_unimodal(seed, rows, cols, width=None, noise_var=0.1):
    g, _, _ = _gen_grid(seed, rows, cols, noise_var)
    width = width or max(rows, cols) / 4.0
    values = _bump(rows, cols, ((rows - 1) / 2.0, (cols - 1) / 2.0), width)
    return g, values, noise_var


def _gen_multimodal(seed, rows, cols, peaks=5, width=None, noise_var=0.1):
    if peaks < 1:
        raise ValueError("need at least one peak")
    g, _, _ = _gen_grid(seed, rows, cols, noise_var)
    width = width or max(rows, cols) / 8.0
    rng = np.random.default_rng(seed)
    centers = rng.uniform([0, 0], [rows - 1, cols - 1], size=(peaks, 2))
    heights = rng.uniform(0.5, 1.0, size=peaks)
    values = np.zeros(rows * cols)
    for h, ctr in zip(heights, centers):
        values += h * _bump(rows, cols, ctr, width)
    return g, values, noise_var


def _gen_sbm(seed, block_sizes, p_in, p_out, means=None, stds=None, noise_var=0.1):
    block_sizes = list(block_sizes)
    if not block_sizes or any(s < 1 for s in block_sizes):
        raise ValueError("block sizes must be >= 1")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    num_blocks = len(block_sizes)
    n = int(sum(block_sizes))
    starts = np.cumsum([0] + block_sizes)
    block_of = np.zeros(n, dtype=np.int64)
    for b in range(num_blocks):
        block_of[starts[b] : starts[b + 1]] = b

    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block_of[iu] == block_of[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    g = Graph.from_edges(n, iu[keep], ju[keep])

    if means is None:
        means = rng.standard_normal(num_blocks)
    if stds is None:
        stds = np.full(num_blocks, 0.1)
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    values = rng.normal(means[block_of], stds[block_of])
    return g, values, noise_var


_GENERATORS = {
    "ring": _gen_ring,
    "grid": _gen_grid,
    "sbm": _gen_sbm,
    "unimodal": _gen_unimodal,
    "multimodal": _gen_multimodal,
}


def generate(kind: str, params: dict, seed: int) -> tuple[Graph, Objective]:
    """Build a synthetic benchmark graph and its node objective.

    Supported kinds: ``ring`` (cycle, optionally with k-nearest chords;
    sinusoidal objective), ``grid`` (4-connected mesh, zero objective),
    ``sbm`` (community graph with per-community Gaussian scores),
    ``unimodal`` / ``multimodal`` (Gaussian bumps on a mesh).
    Deterministic given ``seed``.
    """
    if kind not in _GENERATORS:
        raise ValueError(f"unknown generator kind {kind!r}; expected one of {GENERATOR_KINDS}")
    try:
        g, values, noise_var = _GENERATORS[kind](seed, **params)
    except TypeError as exc:
        raise ValueError(f"invalid params for {kind!r}: {exc}") from None
    return g, Objective(values=values, noise_var=noise_var, seed=seed)


def load_edge_list(path, weighted: bool = False) -> tuple[Graph, np.ndarray]:
    """Read a whitespace-separated ``src dst [weight]`` edge list.

    Lines starting with ``#`` (and blank lines) are ignored.  Node ids are
    compacted to 0..N-1; the returned array maps new id -> original id.
    Self-loops are dropped.  Duplicate edges sum their weights when
    ``weighted``, otherwise collapse to a single unit edge.
    """
    us, vs, ws = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}: line {lineno}: expected 'src dst [weight]'")
            try:
                a, b = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed entry") from None
            if a < 0 or b < 0:
                raise ValueError(f"{path}: line {lineno}: node ids must be nonnegative")
            if not np.isfinite(w) or w <= 0:
                raise ValueError(f"{path}: line {lineno}: weight must be positive")
            if a == b:
                continue
            us.append(a)
            vs.append(b)
            ws.append(w)
    if not us:
        raise ValueError(f"{path}: no edges found")

    u = np.asarray(us, dtype=np.int64)
    v = np.asarray(vs, dtype=np.int64)
    w = np.asarray(ws, dtype=np.float64)
    original_ids = np.unique(np.concatenate([u, v]))
    u = np.searchsorted(original_ids, u)
    v = np.searchsorted(original_ids, v)
    n = len(original_ids)

    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    key = lo * n + hi
    uniq, inverse = np.unique(key, return_inverse=True)
    if weighted:
        merged_w = np.zeros(len(uniq))
        np.add.at(merged_w, inverse, w)
    else:
        merged_w = np.ones(len(uniq))
    g = Graph.from_edges(n, uniq // n, uniq % n, merged_w)
    return g, original_ids


def save_edge_list(g: Graph, path):
    """Write one undirected edge per line, ordered by (i, j) with i < j."""
    with open(path, "w") as fh:
        for i in range(g.num_nodes):
            for k in range(g.indptr[i], g.indptr[i + 1]):
                j = g.indices[k]
                if i < j:
                    fh.write(f"{i} {j} {g.weights[k]:.17g}\n")


def _bfs_eccentricity(g: Graph, src: int) -> tuple[int, int]:
    """(eccentricity, farthest node) from src over the reachable component."""
    dist = np.full(g.num_nodes, -1, dtype=np.int64)
    dist[src] = 0
    frontier = np.array([src], dtype=np.int64)
    level = 0
    far = src
    while len(frontier):
        nxt = []
        for node in frontier:
            nbrs = g.indices[g.indptr[node] : g.indptr[node + 1]]
            fresh = nbrs[dist[nbrs] < 0]
            dist[fresh] = level + 1
            nxt.append(fresh)
        frontier = np.unique(np.concatenate(nxt)) if nxt else np.array([], dtype=np.int64)
        if len(frontier):
            level += 1
            far = int(frontier[0])
    return level, far


def approx_diameter(g: Graph, seed: int = 0) -> int:
    """Double-sweep BFS lower bound on the diameter (exact on trees)."""
    rng = np.random.default_rng(seed)
    start = int(rng.integers(g.num_nodes))
    _, far = _bfs_eccentricity(g, start)
    ecc, _ = _bfs_eccentricity(g, far)
    return ecc
