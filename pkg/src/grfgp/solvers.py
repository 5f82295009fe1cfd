"""Linear solvers against the implicit regularised kernel, plus dense oracles.

The central object is the operator ``v -> Phi (Phi^T v) + noise_var * v``
restricted to a node subset; conjugate gradients against it is what keeps
training and inference subcubic.  Dense kernels, direct solves and
eigendecompositions live here as test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .features import FeatureMatrix
from .graphs import Graph, laplacian, normalized_laplacian

__all__ = [
    "CgSettings",
    "JltSettings",
    "CgResult",
    "KernelOperator",
    "MatrixOperator",
    "NotPositiveDefiniteError",
    "cg_solve",
    "cg_solve_batch",
    "hutchinson_probes",
    "estimate_trace_term",
    "woodbury_jlt_solve",
    "exact_kernel",
    "matrix_power_series",
    "condition_number_report",
]


class NotPositiveDefiniteError(RuntimeError):
    """Raised when CG detects loss of positive definiteness."""


@dataclass(frozen=True)
class CgSettings:
    tol: float = 1e-6
    max_iters: int | None = None  # default: 2 ceil(sqrt(dim)) + 50

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def iters_for(self, dim: int) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return 2 * math.ceil(math.sqrt(dim)) + 50


@dataclass(frozen=True)
class JltSettings:
    m: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("projection dimension must be >= 1")


class KernelOperator:
    """Symmetric positive-definite operator (Phi_x Phi_x^T + noise_var I)."""

    def __init__(self, phi, noise_var: float, rows=None):
        mat = phi.matrix if isinstance(phi, FeatureMatrix) else sp.csr_matrix(phi)
        if noise_var <= 0:
            raise ValueError("noise variance must be positive")
        self.rows = None if rows is None else np.asarray(rows, dtype=np.int64)
        self.phi_rows = mat if self.rows is None else mat[self.rows]
        self.noise_var = float(noise_var)
        self.dim = self.phi_rows.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if v.shape[0] != self.dim:
            raise ValueError("dimension mismatch")
        return self.phi_rows @ (self.phi_rows.T @ v) + self.noise_var * v

    def to_dense(self) -> np.ndarray:
        k = (self.phi_rows @ self.phi_rows.T).toarray()
        k = 0.5 * (k + k.T)
        return k + self.noise_var * np.eye(self.dim)


class MatrixOperator:
    """Adapter exposing a dense or sparse matrix as an operator."""

    def __init__(self, mat):
        self.mat = mat
        self.dim = mat.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.mat @ v


@dataclass(frozen=True)
class CgResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def cg_solve(A, b: np.ndarray, settings: CgSettings | None = None) -> CgResult:
    """Unpreconditioned conjugate gradients on a symmetric PD operator.

    Stops when the residual norm falls below ``tol * ||b||``; hitting the
    iteration cap yields a flagged (not raised) result.  NaNs raise, and a
    nonpositive curvature raises NotPositiveDefiniteError.
    """
    settings = settings or CgSettings()
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise ValueError("right-hand side must be finite")
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return CgResult(x, 0, 0.0, True)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    threshold = settings.tol * bnorm
    max_iters = settings.iters_for(len(b))
    for it in range(1, max_iters + 1):
        Ap = A.matvec(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp):
            raise RuntimeError(f"NaN encountered in CG at iteration {it}")
        if pAp <= 0.0:
            raise NotPositiveDefiniteError(
                "operator is not positive definite; consider raising the noise variance"
            )
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise RuntimeError(f"NaN encountered in CG at iteration {it}")
        resid = math.sqrt(rs_new)
        if resid <= threshold:
            return CgResult(x, it, resid, True)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CgResult(x, max_iters, math.sqrt(rs), False)


def cg_solve_batch(A, B: np.ndarray, settings: CgSettings | None = None):
    """Column-wise CG on a block of right-hand sides.

    Returns (X, iterations, residuals, converged) with one entry per
    column; each column matches a standalone cg_solve exactly.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise ValueError("B must be 2-D (one right-hand side per column)")
    cols = B.shape[1]
    X = np.empty_like(B)
    iters = np.zeros(cols, dtype=np.int64)
    resids = np.zeros(cols)
    flags = np.zeros(cols, dtype=bool)
    for j in range(cols):
        res = cg_solve(A, B[:, j], settings)
        X[:, j] = res.x
        iters[j] = res.iterations
        resids[j] = res.residual
        flags[j] = res.converged
    return X, iters, resids, flags


def hutchinson_probes(num_probes: int, dim: int, kind: str = "rademacher", seed: int = 0):
    """IID probe vectors with identity second moment, one per row."""
    if num_probes < 1:
        raise ValueError("need at least one probe")
    rng = np.random.default_rng(seed)
    if kind == "rademacher":
        return (2.0 * rng.integers(0, 2, size=(num_probes, dim)) - 1.0).astype(np.float64)
    if kind == "gaussian":
        return rng.standard_normal((num_probes, dim))
    raise ValueError(f"unknown probe kind {kind!r}")


@dataclass(frozen=True)
class TraceEstimate:
    value: float
    converged: bool


def estimate_trace_term(A, dA, probes: np.ndarray, settings: CgSettings | None = None):
    """Probe-averaged estimate of tr(A^{-1} dA); solves use CG."""
    probes = np.asarray(probes, dtype=np.float64)
    total = 0.0
    ok = True
    for z in probes:
        res = cg_solve(A, z, settings)
        ok = ok and res.converged
        total += float(res.x @ dA.matvec(z))
    return TraceEstimate(total / len(probes), ok)


def woodbury_jlt_solve(
    phi: FeatureMatrix, noise_var: float, b: np.ndarray, settings: JltSettings
) -> np.ndarray:
    """Approximate solve of (Phi Phi^T + noise_var I) v = b via a Gaussian
    feature projection and the low-rank inversion identity.

    Only the identity itself is exact; approximation quality improves with
    the projection dimension.
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    b = np.asarray(b, dtype=np.float64)
    n = phi.num_nodes
    if b.shape[0] != n:
        raise ValueError("dimension mismatch")
    rng = np.random.default_rng(settings.seed)
    G = rng.standard_normal((n, settings.m))
    K1 = (phi.matrix @ G) / math.sqrt(settings.m)
    U = K1 / math.sqrt(noise_var)
    M = np.eye(settings.m) + U.T @ U
    try:
        cho = scipy.linalg.cho_factor(M)
        x = scipy.linalg.cho_solve(cho, U.T @ b)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError(
            "projected system is numerically singular; try a larger jitter"
        ) from exc
    return (b - U @ x) / noise_var


def matrix_power_series(M: np.ndarray, coeffs) -> np.ndarray:
    """Horner evaluation of sum_r coeffs[r] M^r for a dense matrix."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    n = M.shape[0]
    out = coeffs[-1] * np.eye(n)
    for a in coeffs[-2::-1]:
        out = out @ M + a * np.eye(n)
    return out


def exact_kernel(g: Graph, kind: str, params: dict, cap: int = 4096) -> np.ndarray:
    """Dense reference kernels via eigendecomposition (test oracles).

    Kinds: ``diffusion`` (heat kernel of the Laplacian, normalised by
    default to match the default walk matrix), ``matern``, and
    ``power_series`` over an explicit coefficient list.
    """
    if g.num_nodes > cap:
        raise ValueError(f"dense kernel capped at {cap} nodes")
    params = dict(params)
    if kind == "diffusion":
        beta = params.pop("beta")
        sigma_f = params.pop("sigma_f", 1.0)
        normalized = params.pop("normalized", True)
        if params:
            raise ValueError(f"unknown params {sorted(params)}")
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        lap = normalized_laplacian(g) if normalized else laplacian(g)
        lam, vec = np.linalg.eigh(lap.toarray())
        k = (vec * np.exp(-beta * lam)) @ vec.T
        return sigma_f**2 * 0.5 * (k + k.T)
    if kind == "matern":
        nu = params.pop("nu")
        kappa = params.pop("kappa")
        if params:
            raise ValueError(f"unknown params {sorted(params)}")
        if nu <= 0 or kappa <= 0:
            raise ValueError("nu and kappa must be positive")
        lam, vec = np.linalg.eigh(normalized_laplacian(g).toarray())
        k = (vec * (2.0 * nu / kappa**2 + lam) ** (-nu)) @ vec.T
        return 0.5 * (k + k.T)
    if kind == "power_series":
        coeffs = params.pop("coeffs")
        matrix = params.pop("matrix", "normalized_adjacency")
        if params:
            raise ValueError(f"unknown params {sorted(params)}")
        if isinstance(matrix, str):
            if matrix == "normalized_adjacency":
                from .graphs import normalized_adjacency

                m = normalized_adjacency(g).to_dense()
            elif matrix == "adjacency":
                m = g.to_scipy().toarray()
            else:
                raise ValueError(f"unknown matrix choice {matrix!r}")
        else:
            m = np.asarray(matrix, dtype=np.float64)
        return matrix_power_series(m, coeffs)
    raise ValueError(f"unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class ConditionReport:
    kappa: float
    bound: float


def condition_number_report(kernel, noise_var: float, c: float) -> ConditionReport:
    """Exact condition number of the regularised kernel and its linear-in-N
    bound ``1 + N c^2 / noise_var``; raises if the bound is violated."""
    if isinstance(kernel, FeatureMatrix):
        from .features import dense_kernel

        k = dense_kernel(kernel)
    else:
        k = np.asarray(kernel, dtype=np.float64)
    n = k.shape[0]
    eig = np.linalg.eigvalsh(k + noise_var * np.eye(n))
    kappa = float(eig[-1] / eig[0])
    bound = 1.0 + n * c**2 / noise_var
    if kappa > bound * (1.0 + 1e-9):
        raise RuntimeError(f"condition number {kappa} exceeds bound {bound}")
    return ConditionReport(kappa=kappa, bound=bound)
