"""Experiment runners: scaling ladders, power-law fits, ablation, sweeps.

Two implementations are benchmarked against each other on ring graphs: the
sparse path (walk features + conjugate gradients throughout) and a dense
baseline that materialises the full kernel estimate and factorises it.
Memory is storage-accounted (array sizes), never process RSS; timings are
wall-clock with a discarded warm-up, and any assertion on timings should
use medians over seeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.stats

from .features import ModulationSpec, WalkConfig
from .gp import (
    Dataset,
    ExactDiffusionGp,
    GpModel,
    TrainSettings,
    metrics,
    posterior_mean_cov,
    sample_posterior_pathwise,
    train,
)
from .graphs import Objective, generate, normalized_adjacency
from .seeding import seed_for
from .solvers import KernelOperator, cg_solve, hutchinson_probes

__all__ = [
    "ScalingRecord",
    "PowerLawFit",
    "ScalingConfig",
    "fit_power_law",
    "run_scaling",
    "scaling_fits",
    "records_to_csv",
    "run_ablation",
    "regression_experiment",
    "standardize",
]

SPARSE_LADDER = tuple(2**k for k in range(5, 17))
DENSE_LADDER = tuple(2**k for k in range(5, 13))


@dataclass(frozen=True)
class ScalingRecord:
    N: int
    impl: str  # "sparse" | "dense"
    seed: int
    memory_bytes: float
    init_s: float
    train_s: float
    infer_s: float
    skipped: bool = False


@dataclass(frozen=True)
class PowerLawFit:
    a: float
    b: float
    b_ci95: tuple
    r2: float
    min_n: int
    n_points: int


@dataclass(frozen=True)
class ScalingConfig:
    walkers: int = 100
    p_halt: float = 0.1
    l_max: int = 3
    epochs: int = 50
    probes: int = 4
    learning_rate: float = 0.01
    train_fraction: float = 0.8
    noise_var: float = 0.1
    dense_cap: int = 2**13


def fit_power_law(points, min_n: int = 0) -> PowerLawFit:
    """Least squares in log-log space with a t-distribution CI on the slope."""
    pts = [(n, y) for n, y in points if n >= min_n]
    if len(pts) < 3:
        raise ValueError("need at least three points to fit")
    if any(y <= 0 for _, y in pts):
        raise ValueError("power-law fit requires positive values")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    b = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - b * xm
    resid = y - (intercept + b * x)
    ssr = float(resid @ resid)
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if sst == 0.0 else 1.0 - ssr / sst
    sigma2 = ssr / (n - 2)
    se = math.sqrt(sigma2 / sxx)
    half = scipy.stats.t.ppf(0.975, n - 2) * se
    return PowerLawFit(
        a=math.exp(intercept),
        b=b,
        b_ci95=(b - half, b + half),
        r2=r2,
        min_n=min_n,
        n_points=n,
    )


def _ring_task(n: int, seed: int, cfg: ScalingConfig):
    waves = 1 + seed_for(seed, f"waves-{n}") % 5
    g, obj = generate("ring", {"num_nodes": n, "waves": int(waves)}, seed=seed)
    obj = replace(obj, noise_var=cfg.noise_var)
    rng = np.random.default_rng(seed_for(seed, f"split-{n}"))
    perm = rng.permutation(n)
    n_train = max(1, int(cfg.train_fraction * n))
    train_nodes = np.sort(perm[:n_train])
    test_nodes = np.sort(perm[n_train:])
    y_train = obj.observe_many(train_nodes)
    return g, obj, train_nodes, test_nodes, y_train


def _build_model(g, n: int, seed: int, cfg: ScalingConfig) -> GpModel:
    walk = normalized_adjacency(g)
    wcfg = WalkConfig(cfg.walkers, cfg.p_halt, cfg.l_max, seed=seed_for(seed, f"walks-{n}"))
    mod = ModulationSpec.diffusion(beta=1.0, sigma_f=1.0, l_max=cfg.l_max)
    return GpModel(g, walk, mod, noise_var=cfg.noise_var, walk_cfg=wcfg)


def _feature_storage_bytes(model: GpModel) -> float:
    m = model.features.matrix
    return m.data.nbytes + m.indices.nbytes + m.indptr.nbytes


def _sparse_point(n: int, seed: int, cfg: ScalingConfig) -> ScalingRecord:
    g, obj, train_nodes, test_nodes, y_train = _ring_task(n, seed, cfg)
    data = Dataset(train_nodes, y_train)

    t0 = time.perf_counter()
    model = _build_model(g, n, seed, cfg)
    model.ensure_basis()
    _ = model.features
    init_s = time.perf_counter() - t0
    memory = _feature_storage_bytes(model)

    settings = TrainSettings(
        learning_rate=cfg.learning_rate,
        iterations=cfg.epochs,
        probes=cfg.probes,
        seed=seed_for(seed, f"train-{n}"),
    )
    t0 = time.perf_counter()
    train(model, data, settings)
    train_s = time.perf_counter() - t0

    # inference = posterior mean on the test split + one pathwise draw;
    # per-node variances would cost a solve per test node and are not part
    # of the scalable path
    t0 = time.perf_counter()
    phi = model.features.matrix
    phi_x = phi[train_nodes]
    H = KernelOperator(model.features, model.noise_var, rows=train_nodes)
    v = cg_solve(H, data.y - model.mean, model.cg).x
    _ = model.mean + phi[test_nodes] @ (phi_x.T @ v)
    _ = sample_posterior_pathwise(model, data, seed=seed_for(seed, f"infer-{n}"))
    infer_s = time.perf_counter() - t0
    return ScalingRecord(n, "sparse", seed, memory, init_s, train_s, infer_s)


def _dense_train(model: GpModel, data: Dataset, cfg: ScalingConfig, seed: int):
    """Adam with the same stochastic gradient estimator but dense solves."""
    from .gp import _gradient_components

    basis = model.ensure_basis()
    x_param = model.get_params()
    names = model.param_names()
    m = np.zeros_like(x_param)
    v = np.zeros_like(x_param)
    nodes = data.nodes
    t = len(nodes)
    r = data.y - model.mean
    b1, b2, eps = 0.9, 0.999, 1e-8
    for it in range(1, cfg.epochs + 1):
        phi_x = model.features.matrix[nodes]
        kxx = np.asarray((phi_x @ phi_x.T).todense())
        H = kxx + model.noise_var * np.eye(t)
        cho = scipy.linalg.cho_factor(H, lower=True)
        v_y = scipy.linalg.cho_solve(cho, r)
        Z = hutchinson_probes(cfg.probes, t, seed=[seed, it]).T
        V = scipy.linalg.cho_solve(cho, Z)
        pv = phi_x.T @ v_y
        PZ = phi_x.T @ Z
        PV = phi_x.T @ V
        grad = np.empty(len(names))
        for j, (name, kind, w) in enumerate(_gradient_components(model)):
            if kind == "noise":
                quad = model.noise_var * float(v_y @ v_y)
                tr = model.noise_var * float(np.mean(np.sum(V * Z, axis=0)))
            else:
                A_x = basis.weighted_matrix(w)[nodes]
                av = A_x.T @ v_y
                quad = 2.0 * float(av @ pv)
                AZ = A_x.T @ Z
                AV = A_x.T @ V
                tr = float(np.mean(np.sum(AV * PZ + PV * AZ, axis=0)))
            grad[j] = 0.5 * quad - 0.5 * tr
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1**it)
        vhat = v / (1 - b2**it)
        x_param = x_param + cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        model.set_params(x_param)


def _dense_point(n: int, seed: int, cfg: ScalingConfig) -> ScalingRecord:
    if n > cfg.dense_cap:
        return ScalingRecord(n, "dense", seed, 0.0, 0.0, 0.0, 0.0, skipped=True)
    g, obj, train_nodes, test_nodes, y_train = _ring_task(n, seed, cfg)
    data = Dataset(train_nodes, y_train)

    t0 = time.perf_counter()
    model = _build_model(g, n, seed, cfg)
    model.ensure_basis()
    kernel_dense = np.asarray((model.features.matrix @ model.features.matrix.T).todense())
    init_s = time.perf_counter() - t0
    memory = float(n) * n * 8.0
    del kernel_dense

    t0 = time.perf_counter()
    _dense_train(model, data, cfg, seed_for(seed, f"train-{n}"))
    train_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    phi_x = model.features.matrix[train_nodes]
    phi_q = model.features.matrix[test_nodes]
    kxx = np.asarray((phi_x @ phi_x.T).todense())
    H = kxx + model.noise_var * np.eye(len(train_nodes))
    cho = scipy.linalg.cho_factor(H, lower=True)
    alpha = scipy.linalg.cho_solve(cho, data.y - model.mean)
    kxq = np.asarray((phi_x @ phi_q.T).todense())
    _ = model.mean + kxq.T @ alpha
    kqq = np.asarray((phi_q @ phi_q.T).todense())
    _ = kqq - kxq.T @ scipy.linalg.cho_solve(cho, kxq)  # full posterior covariance
    infer_s = time.perf_counter() - t0
    return ScalingRecord(n, "dense", seed, memory, init_s, train_s, infer_s)


def run_scaling(
    sparse_ns=SPARSE_LADDER,
    dense_ns=DENSE_LADDER,
    seeds=(0, 1, 2),
    config: ScalingConfig | None = None,
    warmup: bool = True,
) -> list:
    config = config or ScalingConfig()
    records = []
    if warmup and len(sparse_ns):
        _sparse_point(min(sparse_ns), max(seeds) + 1, config)
    if warmup and len(dense_ns):
        _dense_point(min(dense_ns), max(seeds) + 1, config)
    for n in sparse_ns:
        for seed in seeds:
            records.append(_sparse_point(n, seed, config))
    for n in dense_ns:
        for seed in seeds:
            records.append(_dense_point(n, seed, config))
    return records


_METRIC_FIELDS = {
    "memory": "memory_bytes",
    "init": "init_s",
    "train": "train_s",
    "infer": "infer_s",
}


def scaling_fits(records, sparse_min_n: int = 2**12, dense_min_n: int = 2**9) -> dict:
    """Power-law fits per (impl, metric); keys like ('sparse', 'memory')."""
    fits = {}
    for impl, min_n in (("sparse", sparse_min_n), ("dense", dense_min_n)):
        sub = [r for r in records if r.impl == impl and not r.skipped]
        for metric, fld in _METRIC_FIELDS.items():
            pts = [(r.N, getattr(r, fld)) for r in sub]
            if len([p for p in pts if p[0] >= min_n]) >= 3:
                fits[(impl, metric)] = fit_power_law(pts, min_n=min_n)
    return fits


def records_to_csv(records, path):
    with open(path, "w") as fh:
        fh.write("N,impl,seed,memory_bytes,init_s,train_s,infer_s\n")
        for r in records:
            if r.skipped:
                continue
            fh.write(
                f"{r.N},{r.impl},{r.seed},{r.memory_bytes:.17g},"
                f"{r.init_s:.17g},{r.train_s:.17g},{r.infer_s:.17g}\n"
            )


def fits_to_text(fits) -> str:
    lines = ["series a b ci95_low ci95_high r2"]
    for (impl, metric), f in sorted(fits.items()):
        lines.append(
            f"{impl}/{metric} {f.a:.6g} {f.b:.4f} {f.b_ci95[0]:.4f} "
            f"{f.b_ci95[1]:.4f} {f.r2:.4f}"
        )
    return "\n".join(lines) + "\n"


def standardize(y: np.ndarray):
    """Zero-mean unit-variance transform; returns (standardised, mean, scale)."""
    y = np.asarray(y, dtype=np.float64)
    mu = float(y.mean())
    scale = float(y.std())
    if scale < 1e-12:
        scale = 1.0
    return (y - mu) / scale, mu, scale


@dataclass(frozen=True)
class AblationConfig:
    rows: int = 30
    cols: int = 30
    beta_true: float = 10.0
    normalized: bool = False  # heat kernel of the combinatorial Laplacian
    observed_fraction: float = 0.1
    noise_var: float = 0.1
    walkers: int = 10_000
    p_halt: float = 0.1
    l_max: int = 10
    train: TrainSettings = field(
        default_factory=lambda: TrainSettings(learning_rate=0.01, iterations=1000)
    )


def _grf_fit_predict(graph, data, query, variant, acfg: AblationConfig, seed: int):
    walk = normalized_adjacency(graph)
    wcfg = WalkConfig(acfg.walkers, acfg.p_halt, acfg.l_max, seed=seed_for(seed, "walks"))
    mod = ModulationSpec.diffusion(beta=1.0, sigma_f=1.0, l_max=acfg.l_max)
    ys, mu, scale = standardize(data.y)
    model = GpModel(graph, walk, mod, noise_var=0.1, walk_cfg=wcfg, variant=variant)
    train(model, Dataset(data.nodes, ys), replace(acfg.train, seed=seed_for(seed, variant)))
    mean_s, var_s = posterior_mean_cov(model, Dataset(data.nodes, ys), query)
    return mean_s * scale + mu, var_s * scale**2, model.noise_var * scale**2


def _exact_fit_predict(graph, data, query, acfg: AblationConfig, seed: int):
    ys, mu, scale = standardize(data.y)
    gp = ExactDiffusionGp(graph, beta=1.0, sigma_f=1.0, noise_var=0.1,
                          normalized=acfg.normalized)
    gp.fit(Dataset(data.nodes, ys), acfg.train)
    mean_s, var_s = gp.predict(Dataset(data.nodes, ys), query)
    return mean_s * scale + mu, var_s * scale**2, gp.noise_var * scale**2


def run_ablation(seeds=(0, 1, 2, 3, 4), config: AblationConfig | None = None) -> list:
    """Three-kernel comparison on a mesh with diffusion ground truth.

    The sampled truth is rescaled to unit variance so the observation
    noise level is meaningful; metrics are computed against the noiseless
    held-out values.  Returns one row per (kernel, seed) with RMSE and
    NLPD; the kernel column is 'diffusion', 'grf' or 'adhoc'.
    """
    acfg = config or AblationConfig()
    rows = []
    for seed in seeds:
        g, _ = generate("grid", {"rows": acfg.rows, "cols": acfg.cols}, seed=seed)
        truth_gp = ExactDiffusionGp(g, beta=acfg.beta_true, sigma_f=1.0,
                                    noise_var=acfg.noise_var, normalized=acfg.normalized)
        truth = truth_gp.sample_truth(seed=seed_for(seed, "truth"))
        truth = truth / truth.std()
        obj = Objective(values=truth, noise_var=acfg.noise_var, seed=seed_for(seed, "obs"))
        rng = np.random.default_rng(seed_for(seed, "split"))
        n = g.num_nodes
        n_obs = max(1, int(acfg.observed_fraction * n))
        perm = rng.permutation(n)
        obs = np.sort(perm[:n_obs])
        test = np.sort(perm[n_obs:])
        data = Dataset(obs, obj.observe_many(obs))
        y_test = truth[test]

        mean, var, nv = _exact_fit_predict(g, data, test, acfg, seed)
        rmse, nlpd = metrics(mean, var, y_test, nv)
        rows.append({"kernel": "diffusion", "seed": seed, "rmse": rmse, "nlpd": nlpd})
        for kernel, variant in (("grf", "unbiased"), ("adhoc", "adhoc")):
            mean, var, nv = _grf_fit_predict(g, data, test, variant, acfg, seed)
            rmse, nlpd = metrics(mean, var, y_test, nv)
            rows.append({"kernel": kernel, "seed": seed, "rmse": rmse, "nlpd": nlpd})
    return rows


@dataclass(frozen=True)
class RegressionConfig:
    rows: int = 30
    cols: int = 30
    beta_true: float = 2.5
    normalized_truth: bool = False
    train_fraction: float = 0.25
    noise_var: float = 0.1
    p_halt: float = 0.1
    l_max: int = 10
    train: TrainSettings = field(
        default_factory=lambda: TrainSettings(learning_rate=0.01, iterations=1000)
    )


def regression_experiment(
    kernels=("free", "diffusion_shape"),
    walker_counts=(16, 256, 4096),
    seeds=(0, 1, 2, 3, 4),
    config: RegressionConfig | None = None,
    keep_predictions: bool = False,
) -> list:
    """Held-out metrics versus the number of walks per node.

    The task is a diffusion-kernel GP sample on a mesh (by default on the
    combinatorial Laplacian, so the walk-feature kernels are mildly
    misspecified and flexibility in the modulation pays off, as it does on
    real data).  Kernels: 'free', 'diffusion_shape', 'adhoc' (walk
    features) and 'exact_diffusion' (dense baseline, one row per seed).
    Returns one row per (kernel, walkers, seed).
    """
    rcfg = config or RegressionConfig()
    out = []
    for seed in seeds:
        g, _ = generate("grid", {"rows": rcfg.rows, "cols": rcfg.cols}, seed=seed)
        truth_gp = ExactDiffusionGp(
            g, beta=rcfg.beta_true, sigma_f=1.0, noise_var=rcfg.noise_var,
            normalized=rcfg.normalized_truth,
        )
        truth = truth_gp.sample_truth(seed=seed_for(seed, "truth"))
        truth = truth / truth.std()
        obj = Objective(values=truth, noise_var=rcfg.noise_var, seed=seed_for(seed, "obs"))
        rng = np.random.default_rng(seed_for(seed, "split"))
        n = g.num_nodes
        n_train = max(1, int(rcfg.train_fraction * n))
        perm = rng.permutation(n)
        tr = np.sort(perm[:n_train])
        te = np.sort(perm[n_train:])
        ys, mu, scale = standardize(obj.observe_many(tr))
        data = Dataset(tr, ys)
        y_test = truth[te]
        walk = normalized_adjacency(g)

        def _emit(kernel, n_walk, mean_s, var_s, noise_s):
            rmse, nlpd = metrics(
                mean_s * scale + mu, var_s * scale**2, y_test, noise_s * scale**2
            )
            row = {"kernel": kernel, "walkers": n_walk, "seed": seed,
                   "rmse": rmse, "nlpd": nlpd}
            if keep_predictions:
                row["nodes"] = te
                row["mean"] = mean_s * scale + mu
                row["std"] = np.sqrt(var_s) * scale
            out.append(row)

        if "exact_diffusion" in kernels:
            gp = ExactDiffusionGp(g, beta=1.0, sigma_f=1.0, noise_var=0.1)
            gp.fit(data, replace(rcfg.train, seed=seed_for(seed, "exact")))
            mean_s, var_s = gp.predict(data, te)
            _emit("exact_diffusion", 0, mean_s, var_s, gp.noise_var)

        for n_walk in walker_counts:
            wcfg = WalkConfig(n_walk, rcfg.p_halt, rcfg.l_max,
                              seed=seed_for(seed, f"walks-{n_walk}"))
            for kernel in kernels:
                if kernel == "exact_diffusion":
                    continue
                if kernel == "free":
                    mod = ModulationSpec.free_random(rcfg.l_max, seed=seed_for(seed, "init"))
                    variant = "unbiased"
                elif kernel == "diffusion_shape":
                    mod = ModulationSpec.diffusion(beta=1.0, sigma_f=1.0, l_max=rcfg.l_max)
                    variant = "unbiased"
                elif kernel == "adhoc":
                    mod = ModulationSpec.diffusion(beta=1.0, sigma_f=1.0, l_max=rcfg.l_max)
                    variant = "adhoc"
                else:
                    raise ValueError(f"unknown kernel {kernel!r}")
                model = GpModel(g, walk, mod, noise_var=0.1, walk_cfg=wcfg, variant=variant)
                train(model, data, replace(rcfg.train, seed=seed_for(seed, f"{kernel}-{n_walk}")))
                mean_s, var_s = posterior_mean_cov(model, data, te)
                _emit(kernel, n_walk, mean_s, var_s, model.noise_var)
    return out
