"""Gaussian-process regression on graph nodes with walk-feature kernels.

Hyperparameters are learned by ascending the log marginal likelihood with
Adam; the gradient uses one linear solve for the data fit term and a
probe-averaged trace estimate, all through conjugate gradients so nothing
dense is ever formed on the training path.  Posterior samples come from
pathwise conditioning: a prior sample plus a solve-based correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .features import (
    FeatureBasis,
    ModulationSpec,
    WalkConfig,
    sample_feature_basis,
    sample_features,
    sample_features_adhoc,
)
from .graphs import Graph, WalkMatrix, laplacian, normalized_adjacency, normalized_laplacian
from .seeding import seed_for
from .solvers import CgSettings, KernelOperator, cg_solve, cg_solve_batch, hutchinson_probes

__all__ = [
    "Dataset",
    "TrainSettings",
    "TrainResult",
    "GradientResult",
    "GpModel",
    "ModelTemplate",
    "ExactDiffusionGp",
    "log_marginal_likelihood",
    "lml_gradient",
    "train",
    "posterior_mean_cov",
    "sample_prior",
    "sample_posterior_pathwise",
    "metrics",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Dataset:
    """Observed nodes and values; observation noise is part of the model."""

    nodes: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.float64)
        if nodes.ndim != 1 or y.shape != nodes.shape:
            raise ValueError("nodes and y must be equal-length vectors")
        if len(nodes) < 1:
            raise ValueError("need at least one observation")
        if nodes.min() < 0:
            raise ValueError("node ids must be nonnegative")
        if len(np.unique(nodes)) != len(nodes):
            raise ValueError("training nodes must be distinct")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 0.01
    iterations: int = 1000
    probes: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    probe_kind: str = "rademacher"
    trace_mode: str = "hutchinson"  # or "exact" (dense, small T only)
    seed: int = 0
    frozen: tuple = ()
    track_lml: bool = False
    lml_cap: int = 2048

    def __post_init__(self):
        if self.learning_rate <= 0 or self.iterations < 0 or self.probes < 1:
            raise ValueError("invalid training settings")


@dataclass
class TrainResult:
    loss_trace: np.ndarray
    loss_kind: str  # "exact_lml" or "quadratic_term"
    converged_fraction: float


@dataclass
class GradientResult:
    values: dict
    converged: bool
    quad_objective: float  # -(1/2) r^T H^{-1} r - (T/2) log 2pi


class GpModel:
    """Kernel hyperparameters, features and solver settings for one graph.

    Features are rebuilt lazily whenever the modulation or its parameters
    change; during training the walk trajectories are sampled once and the
    per-length deposit basis is reused, so parameter updates never
    re-simulate walks.
    """

    def __init__(
        self,
        graph: Graph,
        walk: WalkMatrix,
        modulation: ModulationSpec,
        noise_var: float,
        walk_cfg: WalkConfig,
        mean: float = 0.0,
        cg: CgSettings | None = None,
        variant: str = "unbiased",
    ):
        if noise_var <= 0:
            raise ValueError("noise variance must be positive")
        self.graph = graph
        self.walk = walk
        self.modulation = modulation
        self.noise_var = float(noise_var)
        self.walk_cfg = walk_cfg
        self.mean = float(mean)
        self.cg = cg or CgSettings()
        self.variant = variant
        self._basis: FeatureBasis | None = None
        self._features = None

    @property
    def features(self):
        if self._features is None:
            coeffs = self.modulation.coefficients(self.walk_cfg.l_max + 1)
            if self._basis is not None:
                self._features = self._basis.combine(coeffs)
            else:
                sampler = sample_features if self.variant == "unbiased" else sample_features_adhoc
                self._features = sampler(self.graph, self.walk, self.modulation, self.walk_cfg)
        return self._features

    @property
    def features_stale(self) -> bool:
        return self._features is None

    def invalidate_features(self):
        self._features = None

    def ensure_basis(self) -> FeatureBasis:
        if self._basis is None:
            self._basis = sample_feature_basis(
                self.graph, self.walk, self.walk_cfg, reweight=self.variant == "unbiased"
            )
            self._features = None
        return self._basis

    # -- parameter vector in optimisation coordinates (log for positive) --

    def param_names(self) -> list[str]:
        if self.modulation.kind == "diffusion_shape":
            return ["log_beta", "log_sigma_f", "log_noise"]
        return [f"f{l}" for l in range(self.modulation.l_max + 1)] + ["log_noise"]

    def get_params(self) -> np.ndarray:
        if self.modulation.kind == "diffusion_shape":
            return np.array(
                [math.log(self.modulation.beta), math.log(self.modulation.sigma_f),
                 math.log(self.noise_var)]
            )
        return np.concatenate([self.modulation.coeffs, [math.log(self.noise_var)]])

    def set_params(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        if self.modulation.kind == "diffusion_shape":
            self.modulation = replace(
                self.modulation, beta=math.exp(vec[0]), sigma_f=math.exp(vec[1])
            )
            self.noise_var = math.exp(vec[2])
        else:
            self.modulation = ModulationSpec.free(vec[:-1])
            self.noise_var = math.exp(vec[-1])
        self._features = None

    # -- snapshotting --

    def snapshot(self) -> dict:
        mod = self.modulation
        out = {
            "modulation": {
                "kind": mod.kind,
                "l_max": mod.l_max,
                "beta": mod.beta,
                "sigma_f": mod.sigma_f,
                "coeffs": None if mod.coeffs is None else list(map(float, mod.coeffs)),
            },
            "noise_var": self.noise_var,
            "mean": self.mean,
            "walk_cfg": {
                "num_walkers": self.walk_cfg.num_walkers,
                "p_halt": self.walk_cfg.p_halt,
                "l_max": self.walk_cfg.l_max,
                "seed": self.walk_cfg.seed,
            },
            "variant": self.variant,
        }
        return out

    def save(self, path, history: dict | None = None):
        payload = self.snapshot()
        if history:
            payload["history"] = history
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)

    @staticmethod
    def load(path, graph: Graph, walk: WalkMatrix) -> "GpModel":
        with open(path) as fh:
            payload = json.load(fh)
        m = payload["modulation"]
        if m["kind"] == "free":
            mod = ModulationSpec.free(np.array(m["coeffs"]))
        else:
            mod = ModulationSpec(
                kind=m["kind"], l_max=m["l_max"], beta=m["beta"], sigma_f=m["sigma_f"]
            )
        cfg = WalkConfig(**payload["walk_cfg"])
        return GpModel(
            graph,
            walk,
            mod,
            payload["noise_var"],
            cfg,
            mean=payload["mean"],
            variant=payload["variant"],
        )


@dataclass
class ModelTemplate:
    """Graph-independent recipe for building GP models (used by the BO loop)."""

    modulation: ModulationSpec
    walk_cfg: WalkConfig | None = None
    walk_kind: str = "normalized_adjacency"  # or "adjacency"
    noise_var: float = 0.1
    train: TrainSettings = field(default_factory=TrainSettings)
    cg: CgSettings = field(default_factory=CgSettings)
    retrain_every: int = 1

    def build(self, graph: Graph, seed: int) -> GpModel:
        if self.walk_kind == "normalized_adjacency":
            walk = normalized_adjacency(graph)
        elif self.walk_kind == "adjacency":
            walk = WalkMatrix.from_adjacency(graph)
        else:
            raise ValueError(f"unknown walk kind {self.walk_kind!r}")
        cfg = self.walk_cfg or WalkConfig.defaults_for(graph, seed)
        cfg = replace(cfg, seed=seed)
        return GpModel(graph, walk, self.modulation, self.noise_var, cfg, cg=self.cg)


def _check_nodes(model: GpModel, nodes: np.ndarray):
    if len(nodes) and nodes.max() >= model.graph.num_nodes:
        raise ValueError("node id out of range for this graph")


def log_marginal_likelihood(model: GpModel, data: Dataset, dense_cap: int = 4096) -> float:
    """Exact log marginal likelihood on the training block (dense; oracle
    grade, capped training size)."""
    _check_nodes(model, data.nodes)
    t = len(data)
    if t > dense_cap:
        raise ValueError(f"exact marginal likelihood capped at {dense_cap} points")
    H = KernelOperator(model.features, model.noise_var, rows=data.nodes).to_dense()
    r = data.y - model.mean
    try:
        cho = scipy.linalg.cho_factor(H, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError("training covariance is not positive definite") from exc
    quad = float(r @ scipy.linalg.cho_solve(cho, r))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return -0.5 * quad - 0.5 * logdet - 0.5 * t * LOG_2PI


def _gradient_components(model: GpModel):
    """(name, kind, length-weights) triplets; kind is 'phi' or 'noise'.

    A 'phi' component has feature derivative dPhi = basis.weighted_matrix(w),
    giving dK = dPhi Phi^T + Phi dPhi^T.
    """
    mod = model.modulation
    length = model.walk_cfg.l_max + 1
    comps = []
    if mod.kind == "diffusion_shape":
        comps.append(("log_beta", "phi", mod.d_coeffs_d_log_beta(length)))
        comps.append(("log_sigma_f", "phi", mod.coefficients(length)))
    else:
        eye = np.eye(length)
        for l in range(length):
            comps.append((f"f{l}", "phi", eye[l]))
    comps.append(("log_noise", "noise", None))
    return comps


def lml_gradient(
    model: GpModel,
    data: Dataset,
    probes: np.ndarray | None = None,
    trace_mode: str | None = None,
    probe_seed=0,
    num_probes: int = 10,
    frozen: tuple = (),
) -> GradientResult:
    """Gradient of the log marginal likelihood in optimisation coordinates.

    The data-fit term uses one CG solve; the trace term uses either probe
    vectors (batched CG solves, one per probe) or, for small training sets,
    an exact dense trace.
    """
    _check_nodes(model, data.nodes)
    basis = model.ensure_basis()
    trace_mode = trace_mode or "hutchinson"
    x = data.nodes
    t = len(data)
    phi_x = model.features.matrix[x]
    H = KernelOperator(model.features, model.noise_var, rows=x)
    r = data.y - model.mean
    res_y = cg_solve(H, r, model.cg)
    v_y = res_y.x
    converged = res_y.converged
    quad_objective = -0.5 * float(r @ v_y) - 0.5 * t * LOG_2PI

    comps = _gradient_components(model)
    values = {}

    if trace_mode == "exact":
        Hd = H.to_dense()
        Hinv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hd, lower=True), np.eye(t))
        pv = phi_x.T @ v_y
        for name, kind, w in comps:
            if name in frozen:
                values[name] = 0.0
                continue
            if kind == "noise":
                quad = model.noise_var * float(v_y @ v_y)
                tr = model.noise_var * float(np.trace(Hinv))
            else:
                A_x = basis.weighted_matrix(w)[x]
                av = A_x.T @ v_y
                quad = 2.0 * float(av @ pv)
                m = (A_x @ phi_x.T).toarray()
                dk = m + m.T
                tr = float(np.sum(Hinv * dk))
            values[name] = 0.5 * quad - 0.5 * tr
        return GradientResult(values, converged, quad_objective)

    if trace_mode != "hutchinson":
        raise ValueError(f"unknown trace mode {trace_mode!r}")
    if probes is None:
        probes = hutchinson_probes(num_probes, t, kind="rademacher", seed=probe_seed)
    S = probes.shape[0]
    V, _, _, flags = cg_solve_batch(H, probes.T, model.cg)  # columns solve H v = z
    converged = converged and bool(flags.all())
    Z = probes.T  # (t, S)
    pv = phi_x.T @ v_y
    PZ = phi_x.T @ Z  # (N, S)
    PV = phi_x.T @ V
    for name, kind, w in comps:
        if name in frozen:
            values[name] = 0.0
            continue
        if kind == "noise":
            quad = model.noise_var * float(v_y @ v_y)
            tr = model.noise_var * float(np.mean(np.sum(V * Z, axis=0)))
        else:
            A_x = basis.weighted_matrix(w)[x]
            av = A_x.T @ v_y
            quad = 2.0 * float(av @ pv)
            AZ = A_x.T @ Z
            AV = A_x.T @ V
            tr = float(np.mean(np.sum(AV * PZ + PV * AZ, axis=0)))
        values[name] = 0.5 * quad - 0.5 * tr
    return GradientResult(values, converged, quad_objective)


def train(model: GpModel, data: Dataset, settings: TrainSettings | None = None) -> TrainResult:
    """Ascend the marginal likelihood with Adam; positive parameters are
    optimised in log space.  Walks are fixed for the whole run."""
    settings = settings or TrainSettings()
    model.ensure_basis()
    names = model.param_names()
    x = model.get_params()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = []
    track_exact = settings.track_lml and len(data) <= settings.lml_cap
    n_ok = 0
    for it in range(1, settings.iterations + 1):
        grad = lml_gradient(
            model,
            data,
            trace_mode=settings.trace_mode,
            probe_seed=[settings.seed, it],
            num_probes=settings.probes,
            frozen=settings.frozen,
        )
        g = np.array([grad.values[name] for name in names])
        if not (np.all(np.isfinite(g)) and math.isfinite(grad.quad_objective)):
            raise RuntimeError(f"training diverged at iteration {it}")
        n_ok += grad.converged
        trace.append(log_marginal_likelihood(model, data) if track_exact else grad.quad_objective)
        with np.errstate(over="ignore", invalid="ignore"):
            m = settings.beta1 * m + (1.0 - settings.beta1) * g
            v = settings.beta2 * v + (1.0 - settings.beta2) * g * g
            mhat = m / (1.0 - settings.beta1**it)
            vhat = v / (1.0 - settings.beta2**it)
            x = x + settings.learning_rate * mhat / (np.sqrt(vhat) + settings.eps)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise RuntimeError(f"training diverged at iteration {it}")
        model.set_params(x)
    return TrainResult(
        loss_trace=np.array(trace),
        loss_kind="exact_lml" if track_exact else "quadratic_term",
        converged_fraction=n_ok / max(1, settings.iterations),
    )


def posterior_mean_cov(
    model: GpModel,
    data: Dataset,
    query_nodes,
    full_cov: bool = False,
    dense_cap: int = 4096,
):
    """Posterior mean and (co)variance at the query nodes.

    Cross-covariances are applied lazily through the feature rows; the
    training solve and the per-query-column solves all run through CG.
    Returns (mean, cov) with a full matrix when ``full_cov`` else marginal
    variances.
    """
    _check_nodes(model, data.nodes)
    q = np.asarray(query_nodes, dtype=np.int64)
    _check_nodes(model, q)
    if full_cov and len(q) > dense_cap:
        raise ValueError(f"full covariance capped at {dense_cap} query nodes")
    phi = model.features.matrix
    phi_x = phi[data.nodes]
    phi_q = phi[q]
    H = KernelOperator(model.features, model.noise_var, rows=data.nodes)
    r = data.y - model.mean
    v = cg_solve(H, r, model.cg).x
    mean_q = model.mean + phi_q @ (phi_x.T @ v)

    kxq = np.asarray((phi_x @ phi_q.T).todense())
    W, _, _, _ = cg_solve_batch(H, kxq, model.cg)
    if full_cov:
        kqq = np.asarray((phi_q @ phi_q.T).todense())
        cov = kqq - kxq.T @ W
        return mean_q, 0.5 * (cov + cov.T)
    kqq_diag = np.asarray(phi_q.multiply(phi_q).sum(axis=1)).ravel()
    var = kqq_diag - np.einsum("tq,tq->q", kxq, W)
    return mean_q, np.maximum(var, 0.0)


def sample_prior(model: GpModel, num_samples: int, seed: int = 0) -> np.ndarray:
    """Prior draws over all nodes via the feature map; cost is one sparse
    product per sample."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((model.graph.num_nodes, num_samples))
    return model.mean + (model.features.matrix @ w).T


def sample_posterior_pathwise(model: GpModel, data: Dataset, seed: int = 0) -> np.ndarray:
    """One posterior draw over all nodes by pathwise conditioning: prior
    sample plus a correction through a single training-block solve."""
    _check_nodes(model, data.nodes)
    rng = np.random.default_rng(seed)
    phi = model.features.matrix
    w = rng.standard_normal(model.graph.num_nodes)
    g = model.mean + phi @ w
    eps = math.sqrt(model.noise_var) * rng.standard_normal(len(data))
    phi_x = phi[data.nodes]
    H = KernelOperator(model.features, model.noise_var, rows=data.nodes)
    resid = data.y - (g[data.nodes] + eps)
    u = cg_solve(H, resid, model.cg).x
    return g + phi @ (phi_x.T @ u)


def metrics(pred_mean, pred_var, y_test, noise_var: float) -> tuple[float, float]:
    """(RMSE, NLPD) of Gaussian predictions in observation space."""
    mu = np.asarray(pred_mean, dtype=np.float64)
    var = np.asarray(pred_var, dtype=np.float64)
    y = np.asarray(y_test, dtype=np.float64)
    if not (mu.shape == var.shape == y.shape):
        raise ValueError("inputs must have matching shapes")
    if np.any(var < 0):
        raise ValueError("predictive variances must be nonnegative")
    total = var + noise_var
    rmse = float(np.sqrt(np.mean((mu - y) ** 2)))
    nlpd = float(np.mean(0.5 * (np.log(2.0 * np.pi * total) + (y - mu) ** 2 / total)))
    return rmse, nlpd


class ExactDiffusionGp:
    """Dense heat-kernel GP in the Laplacian eigenbasis.

    Serves as the exact-kernel baseline and as a ground-truth sampler for
    synthetic tasks.  All operations are parameterised by the cached
    eigendecomposition, so training iterations cost O(T^2 N) at most.
    """

    def __init__(
        self,
        graph: Graph,
        beta: float = 1.0,
        sigma_f: float = 1.0,
        noise_var: float = 0.1,
        mean: float = 0.0,
        normalized: bool = True,
        cap: int = 4096,
    ):
        if graph.num_nodes > cap:
            raise ValueError(f"exact kernel capped at {cap} nodes")
        self.graph = graph
        self.beta = float(beta)
        self.sigma_f = float(sigma_f)
        self.noise_var = float(noise_var)
        self.mean = float(mean)
        lap = normalized_laplacian(graph) if normalized else laplacian(graph)
        self.lam, self.vec = np.linalg.eigh(lap.toarray())

    def _spectrum(self) -> np.ndarray:
        return self.sigma_f**2 * np.exp(-self.beta * self.lam)

    def kernel_block(self, rows, cols) -> np.ndarray:
        e = self._spectrum()
        return (self.vec[rows] * e) @ self.vec[cols].T

    def sample_truth(self, seed: int = 0) -> np.ndarray:
        """Draw one function from the zero-mean prior over all nodes."""
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(self.graph.num_nodes)
        return self.vec @ (np.sqrt(self._spectrum()) * z)

    def lml(self, data: Dataset) -> float:
        x = data.nodes
        H = self.kernel_block(x, x) + self.noise_var * np.eye(len(x))
        cho = scipy.linalg.cho_factor(H, lower=True)
        r = data.y - self.mean
        quad = float(r @ scipy.linalg.cho_solve(cho, r))
        logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        return -0.5 * quad - 0.5 * logdet - 0.5 * len(x) * LOG_2PI

    def _gradient(self, data: Dataset) -> np.ndarray:
        x = data.nodes
        t = len(x)
        e = self._spectrum()
        vx = self.vec[x]
        kxx = (vx * e) @ vx.T
        H = kxx + self.noise_var * np.eye(t)
        cho = scipy.linalg.cho_factor(H, lower=True)
        r = data.y - self.mean
        alpha = scipy.linalg.cho_solve(cho, r)
        Hinv = scipy.linalg.cho_solve(cho, np.eye(t))
        grad = np.empty(3)
        d_beta = (vx * (e * (-self.beta * self.lam))) @ vx.T
        for i, P in enumerate((d_beta, 2.0 * kxx, self.noise_var * np.eye(t))):
            grad[i] = 0.5 * float(alpha @ P @ alpha) - 0.5 * float(np.sum(Hinv * P))
        return grad

    def fit(self, data: Dataset, settings: TrainSettings | None = None) -> np.ndarray:
        """Adam ascent on (log beta, log sigma_f, log noise); returns the
        per-iteration exact marginal likelihood."""
        settings = settings or TrainSettings()
        x = np.array([math.log(self.beta), math.log(self.sigma_f), math.log(self.noise_var)])
        m = np.zeros(3)
        v = np.zeros(3)
        trace = np.empty(settings.iterations)
        for it in range(1, settings.iterations + 1):
            g = self._gradient(data)
            if not np.all(np.isfinite(g)):
                raise RuntimeError(f"training diverged at iteration {it}")
            trace[it - 1] = self.lml(data)
            m = settings.beta1 * m + (1.0 - settings.beta1) * g
            v = settings.beta2 * v + (1.0 - settings.beta2) * g * g
            mhat = m / (1.0 - settings.beta1**it)
            vhat = v / (1.0 - settings.beta2**it)
            x = x + settings.learning_rate * mhat / (np.sqrt(vhat) + settings.eps)
            self.beta, self.sigma_f, self.noise_var = map(math.exp, x)
        return trace

    def predict(self, data: Dataset, query_nodes) -> tuple[np.ndarray, np.ndarray]:
        x = data.nodes
        q = np.asarray(query_nodes, dtype=np.int64)
        t = len(x)
        H = self.kernel_block(x, x) + self.noise_var * np.eye(t)
        cho = scipy.linalg.cho_factor(H, lower=True)
        r = data.y - self.mean
        alpha = scipy.linalg.cho_solve(cho, r)
        kxq = self.kernel_block(x, q)
        mean_q = self.mean + kxq.T @ alpha
        W = scipy.linalg.cho_solve(cho, kxq)
        kqq_diag = (self.vec[q] ** 2) @ self._spectrum()
        var = kqq_diag - np.einsum("tq,tq->q", kxq, W)
        return mean_q, np.maximum(var, 0.0)
