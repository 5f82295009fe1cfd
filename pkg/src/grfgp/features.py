"""Random-walk node features: sparse unbiased estimators of graph kernels.

Each node gets a sparse feature row built from importance-weighted random
walks; the implied kernel estimate is the (never materialised) product of
the feature matrix with its transpose.  For a modulation sequence ``f`` and
walk matrix ``M``, the estimator is unbiased for the truncated series
``Psi = sum_l f_l M^l`` in the sense that off-diagonal entries of the
estimated kernel have expectation ``(Psi^T Psi)_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .backends import get_backend
from .graphs import Graph, WalkMatrix, approx_diameter

__all__ = [
    "ModulationSpec",
    "WalkConfig",
    "FeatureMatrix",
    "FeatureBasis",
    "sample_features",
    "sample_features_adhoc",
    "sample_feature_basis",
    "kernel_matvec",
    "kernel_entry",
    "dense_kernel",
    "bound_constant_c",
    "sparsity_bound",
    "concentration_bound",
]

DENSE_KERNEL_CAP = 4096


@dataclass(frozen=True)
class ModulationSpec:
    """Per-walk-length coefficients defining the estimated kernel.

    ``diffusion_shape`` evaluates ``f_l = sigma_f * exp(-beta/2) *
    (beta/2)**l / l!`` for ``l <= l_max`` (zero beyond), which makes the
    squared series equal the heat kernel of the normalised Laplacian when
    walks run on the degree-normalised adjacency.  ``free`` uses the given
    coefficient vector directly.
    """

    kind: str
    l_max: int
    beta: float = 1.0
    sigma_f: float = 1.0
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("diffusion_shape", "free"):
            raise ValueError(f"unknown modulation kind {self.kind!r}")
        if self.l_max < 0:
            raise ValueError("l_max must be nonnegative")
        if self.kind == "diffusion_shape":
            if self.beta <= 0 or self.sigma_f <= 0:
                raise ValueError("beta and sigma_f must be positive")
        else:
            if self.coeffs is None:
                raise ValueError("free modulation needs a coefficient vector")
            c = np.asarray(self.coeffs, dtype=np.float64)
            if len(c) != self.l_max + 1:
                raise ValueError("coeffs must have length l_max + 1")
            object.__setattr__(self, "coeffs", c)

    @staticmethod
    def diffusion(beta: float, sigma_f: float = 1.0, l_max: int = 10) -> "ModulationSpec":
        return ModulationSpec(kind="diffusion_shape", l_max=l_max, beta=beta, sigma_f=sigma_f)

    @staticmethod
    def free(coeffs) -> "ModulationSpec":
        c = np.asarray(coeffs, dtype=np.float64)
        return ModulationSpec(kind="free", l_max=len(c) - 1, coeffs=c)

    @staticmethod
    def free_random(l_max: int, seed: int = 0) -> "ModulationSpec":
        """Random initialisation with decaying scale, coeffs[l] ~ N(0, 0.5**l)."""
        rng = np.random.default_rng(seed)
        scale = np.sqrt(0.5 ** np.arange(l_max + 1))
        return ModulationSpec.free(rng.standard_normal(l_max + 1) * scale)

    def coefficients(self, length: int | None = None) -> np.ndarray:
        """Evaluate f_0..f_{length-1} (default: up to own l_max)."""
        length = self.l_max + 1 if length is None else length
        out = np.zeros(length, dtype=np.float64)
        upto = min(length, self.l_max + 1)
        if self.kind == "free":
            out[:upto] = self.coeffs[:upto]
        else:
            term = self.sigma_f * math.exp(-self.beta / 2.0)
            for l in range(upto):
                out[l] = term
                term *= (self.beta / 2.0) / (l + 1)
        return out

    def d_coeffs_d_log_beta(self, length: int | None = None) -> np.ndarray:
        """d f_l / d log(beta) for the diffusion shape."""
        if self.kind != "diffusion_shape":
            raise ValueError("only defined for diffusion_shape")
        f = self.coefficients(length)
        ls = np.arange(len(f))
        return f * (ls - self.beta / 2.0)

    def with_params(self, **kwargs) -> "ModulationSpec":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class WalkConfig:
    """Sampler settings: walkers per node, halting probability, truncation."""

    num_walkers: int
    p_halt: float = 0.1
    l_max: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.num_walkers < 1:
            raise ValueError("num_walkers must be >= 1")
        if not 0.0 < self.p_halt < 1.0:
            raise ValueError("p_halt must lie in (0, 1)")
        if self.l_max < 0:
            raise ValueError("l_max must be nonnegative")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @staticmethod
    def defaults_for(graph: Graph, seed: int = 0) -> "WalkConfig":
        """Heuristic defaults: a small multiple of the average degree for
        the walker count, and a truncation length tied to the diameter."""
        avg_deg = float(graph.degrees.mean()) if graph.num_nodes else 1.0
        n = max(1, math.ceil(4.0 * avg_deg))
        l_max = min(10, max(3, math.ceil(approx_diameter(graph, seed) / 10)))
        return WalkConfig(num_walkers=n, p_halt=0.1, l_max=l_max, seed=seed)


class FeatureMatrix:
    """Sparse feature rows; row ``i`` is the feature vector of node ``i``."""

    def __init__(self, matrix: sp.csr_matrix, config: WalkConfig, variant: str = "unbiased"):
        self.matrix = matrix
        self.config = config
        self.variant = variant

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def row_l1_norms(self) -> np.ndarray:
        out = np.zeros(self.num_nodes)
        np.add.at(
            out,
            np.repeat(np.arange(self.num_nodes), self.row_nnz()),
            np.abs(self.matrix.data),
        )
        return out

    def save(self, path):
        """Text triplet serialisation; round-trips bit-exactly."""
        m = self.matrix
        cfg = self.config
        rows = np.repeat(np.arange(self.num_nodes), self.row_nnz())
        with open(path, "w") as fh:
            fh.write(
                f"{self.num_nodes} {cfg.num_walkers} {cfg.p_halt:.17g} "
                f"{cfg.l_max} {cfg.seed}\n"
            )
            for r, c, v in zip(rows, m.indices, m.data):
                fh.write(f"{r} {c} {v:.17g}\n")

    @staticmethod
    def load(path) -> "FeatureMatrix":
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 5:
                raise ValueError(f"{path}: bad header")
            n, walkers, p_halt, l_max, seed = header
            n = int(n)
            cfg = WalkConfig(
                num_walkers=int(walkers), p_halt=float(p_halt), l_max=int(l_max), seed=int(seed)
            )
            rows, cols, vals = [], [], []
            for line in fh:
                r, c, v = line.split()
                rows.append(int(r))
                cols.append(int(c))
                vals.append(float(v))
        mat = sp.csr_matrix(
            (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
            shape=(n, n),
        )
        return FeatureMatrix(mat, cfg)


@dataclass(frozen=True)
class FeatureBasis:
    """Per-length deposit matrices sharing one sparsity pattern.

    Walk trajectories depend only on the graph and the seed, never on the
    modulation, so the deposits can be split by walk length and recombined
    for any coefficient vector without re-simulating: ``combine(f)`` returns
    the feature matrix with data ``f @ table``, and row ``l`` of ``table``
    is exactly the derivative of the feature data w.r.t. ``f_l``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    table: np.ndarray  # (l_max + 1, nnz)
    num_nodes: int
    config: WalkConfig
    variant: str = "unbiased"

    @property
    def l_max(self) -> int:
        return self.table.shape[0] - 1

    def combine(self, coeffs) -> FeatureMatrix:
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if len(coeffs) != self.table.shape[0]:
            raise ValueError("coefficient length must be l_max + 1")
        data = coeffs @ self.table
        mat = sp.csr_matrix(
            (data, self.indices.copy(), self.indptr.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )
        return FeatureMatrix(mat, self.config, self.variant)

    def weighted_matrix(self, weights) -> sp.csr_matrix:
        """CSR with data ``weights @ table`` (chain-rule derivatives)."""
        weights = np.asarray(weights, dtype=np.float64)
        data = weights @ self.table
        return sp.csr_matrix(
            (data, self.indices.copy(), self.indptr.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )

    def length_matrix(self, l: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.table[l].copy(), self.indices.copy(), self.indptr.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )


def _run_kernel(walk: WalkMatrix, cfg: WalkConfig, coeffs, reweight: bool, backend):
    g = walk.graph
    impl = get_backend(backend)
    indptr, cols, vals = impl.walk_deposits(
        g.indptr,
        g.indices,
        walk.data,
        cfg.num_walkers,
        cfg.p_halt,
        cfg.l_max,
        cfg.seed,
        coeffs,
        reweight,
    )
    # kernel emits columns in first-touch order; sort within rows
    n = g.num_nodes
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    order = np.argsort(rows * n + cols, kind="stable")
    return indptr, cols[order], vals[:, order]


def _sample(walk, mod, cfg, reweight, backend, variant):
    coeffs = mod.coefficients(cfg.l_max + 1)
    indptr, cols, vals = _run_kernel(walk, cfg, coeffs, reweight, backend)
    mat = sp.csr_matrix(
        (vals[0], cols, indptr), shape=(walk.graph.num_nodes,) * 2
    )
    return FeatureMatrix(mat, cfg, variant)


def sample_features(
    g: Graph,
    walk: WalkMatrix,
    mod: ModulationSpec,
    cfg: WalkConfig,
    backend: str | None = None,
) -> FeatureMatrix:
    """Sample importance-weighted walk features for every node.

    Deterministic given ``cfg.seed`` and independent of execution order;
    per-(node, walker) RNG streams are derived by hashing the seed.
    """
    if walk.graph is not g:
        raise ValueError("walk matrix must belong to the given graph")
    return _sample(walk, mod, cfg, True, backend, "unbiased")


def sample_features_adhoc(
    g: Graph,
    walk: WalkMatrix,
    mod: ModulationSpec,
    cfg: WalkConfig,
    backend: str | None = None,
) -> FeatureMatrix:
    """Ablation variant: same walks, but loads skip the inverse-probability
    factor.  Still yields a positive-semidefinite kernel estimate, biased
    for the power series."""
    if walk.graph is not g:
        raise ValueError("walk matrix must belong to the given graph")
    return _sample(walk, mod, cfg, False, backend, "adhoc")


def sample_feature_basis(
    g: Graph,
    walk: WalkMatrix,
    cfg: WalkConfig,
    reweight: bool = True,
    backend: str | None = None,
) -> FeatureBasis:
    """Sample the per-length deposit basis (see FeatureBasis)."""
    if walk.graph is not g:
        raise ValueError("walk matrix must belong to the given graph")
    indptr, cols, vals = _run_kernel(walk, cfg, None, reweight, backend)
    return FeatureBasis(
        indptr=indptr,
        indices=cols,
        table=vals,
        num_nodes=g.num_nodes,
        config=cfg,
        variant="unbiased" if reweight else "adhoc",
    )


def kernel_matvec(phi: FeatureMatrix, v: np.ndarray) -> np.ndarray:
    """Kernel-estimate matvec as two sparse products, never materialised."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != phi.num_nodes:
        raise ValueError(f"vector length {v.shape[0]} != {phi.num_nodes}")
    return phi.matrix @ (phi.matrix.T @ v)


def kernel_entry(phi: FeatureMatrix, i: int, j: int) -> float:
    n = phi.num_nodes
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError("node index out of range")
    return float((phi.matrix[i] @ phi.matrix[j].T)[0, 0])


def dense_kernel(phi: FeatureMatrix, cap: int = DENSE_KERNEL_CAP) -> np.ndarray:
    """Materialised kernel estimate for small graphs (tests, oracles)."""
    if phi.num_nodes > cap:
        raise ValueError(f"dense kernel capped at {cap} nodes (got {phi.num_nodes})")
    k = (phi.matrix @ phi.matrix.T).toarray()
    return 0.5 * (k + k.T)


def bound_constant_c(
    g: Graph,
    walk: WalkMatrix,
    mod: ModulationSpec,
    p_halt: float,
    l_max: int | None = None,
) -> float:
    """Series constant controlling concentration and the row L1 norms.

    Sums |f_r| * rho**r over the truncated range, with rho the largest
    stored walk entry times the unweighted degree of its row node, scaled
    by 1 / (1 - p_halt).
    """
    f = mod.coefficients(None if l_max is None else l_max + 1)
    if len(walk.data):
        row_deg = np.repeat(g.degrees, g.degrees).astype(np.float64)
        rho = float(np.max(np.abs(walk.data) * row_deg)) / (1.0 - p_halt)
    else:
        rho = 0.0
    powers = rho ** np.arange(len(f))
    return float(np.abs(f) @ powers)


def sparsity_bound(n: int, p_halt: float, delta: float) -> float:
    """High-probability cap on the nonzero count of a feature row."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < p_halt < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("p_halt and delta must lie in (0, 1)")
    return n * math.log(1.0 - (1.0 - delta) ** (1.0 / n)) / math.log(1.0 - p_halt)


def concentration_bound(n: int, c: float, t: float) -> float:
    """Tail probability bound for a kernel-entry deviation of size t.

    Returns ``2 exp(-t^2 n^3 / (2 (2n-1)^2 c^4))`` clamped to [0, 1].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if c <= 0:
        raise ValueError("c must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    raw = 2.0 * math.exp(-(t**2) * n**3 / (2.0 * (2 * n - 1) ** 2 * c**4))
    return min(1.0, raw)
