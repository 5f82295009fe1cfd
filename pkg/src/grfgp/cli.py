"""Command-line front end.

Subcommands: gen-graph, regress, bo, bench-scaling, ablation.  Every run is
deterministic given the config file and master seed (timing fields aside);
execution is strictly sequential, so --strict-sequential is always in
effect and --threads is accepted for interface compatibility.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bayesopt import bfs_search, degree_objective, dfs_search, random_search, thompson_sampling
from .bench import (
    AblationConfig,
    RegressionConfig,
    ScalingConfig,
    fits_to_text,
    records_to_csv,
    regression_experiment,
    run_ablation,
    run_scaling,
    scaling_fits,
)
from .config import ConfigError, load_config
from .features import ModulationSpec, WalkConfig
from .gp import ModelTemplate, TrainSettings
from .graphs import generate, load_edge_list, save_edge_list
from .seeding import seed_for

STRATEGIES = {
    "thompson": None,  # handled separately (needs a model template)
    "random": random_search,
    "bfs": bfs_search,
    "dfs": dfs_search,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grfgp", description=__doc__)
    p.add_argument("--config", type=str, default=None, help="YAML config file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", type=str, default=None, help="output directory (overrides config)")
    p.add_argument("--threads", type=int, default=1, help="reserved; execution is sequential")
    p.add_argument(
        "--strict-sequential",
        action="store_true",
        help="bit-exact sequential mode (always on in this implementation)",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("gen-graph", "regress", "bo", "bench-scaling", "ablation"):
        sub.add_parser(name)
    return p


def _graph_from_config(cfg: dict, master: int):
    gcfg = cfg.get("graph")
    if not gcfg:
        raise ConfigError("config needs a graph section")
    if "generator" in gcfg:
        params = dict(gcfg["generator"])
        kind = params.pop("kind", None)
        if kind is None:
            raise ConfigError("graph.generator.kind is required")
        g, objective = generate(kind, params, seed=seed_for(master, "graph"))
    else:
        path = gcfg["edge_list"].get("path")
        weighted = bool(gcfg["edge_list"].get("weighted", False))
        g, _ = load_edge_list(path, weighted=weighted)
        objective = None
    if gcfg.get("objective") == "degree":
        noise_var = float(cfg.get("bo", {}).get("noise_var", 0.0))
        objective = degree_objective(g, noise_var=noise_var, seed=seed_for(master, "objective"))
    return g, objective


def _walk_config(cfg: dict, graph, master: int) -> WalkConfig:
    wcfg = cfg.get("walk")
    if not wcfg:
        return WalkConfig.defaults_for(graph, seed=seed_for(master, "walks"))
    return WalkConfig(
        num_walkers=int(wcfg["num_walkers"]),
        p_halt=float(wcfg.get("p_halt", 0.1)),
        l_max=int(wcfg.get("l_max", 3)),
        seed=int(wcfg.get("seed", seed_for(master, "walks"))),
    )


def _modulation(cfg: dict, master: int) -> ModulationSpec:
    mcfg = cfg.get("modulation", {"kind": "diffusion_shape", "l_max": 5})
    kind = mcfg.get("kind", "diffusion_shape")
    l_max = int(mcfg.get("l_max", 5))
    if kind == "diffusion_shape":
        return ModulationSpec.diffusion(
            beta=float(mcfg.get("beta", 1.0)),
            sigma_f=float(mcfg.get("sigma_f", 1.0)),
            l_max=l_max,
        )
    if kind == "free":
        if mcfg.get("coeffs") is not None:
            return ModulationSpec.free(np.asarray(mcfg["coeffs"], dtype=float))
        return ModulationSpec.free_random(
            l_max, seed=int(mcfg.get("init_seed", seed_for(master, "modulation")))
        )
    raise ConfigError(f"unknown modulation kind {kind!r}")


def _cmd_gen_graph(cfg: dict, master: int, out: Path) -> int:
    g, objective = _graph_from_config(cfg, master)
    save_edge_list(g, out / "graph.edges")
    with open(out / "objective.csv", "w") as fh:
        fh.write("node,value\n")
        values = objective.values if objective is not None else np.zeros(g.num_nodes)
        for i, v in enumerate(values):
            fh.write(f"{i},{v:.17g}\n")
    print(f"wrote {out / 'graph.edges'} ({g.num_nodes} nodes, {g.num_edges} edges)")
    return 0


def _cmd_regress(cfg: dict, master: int, out: Path) -> int:
    rcfg = cfg.get("regress", {})
    config = RegressionConfig(
        rows=int(rcfg.get("rows", 30)),
        cols=int(rcfg.get("cols", 30)),
        beta_true=float(rcfg.get("beta_true", 2.5)),
        normalized_truth=bool(rcfg.get("normalized_truth", False)),
        train_fraction=float(rcfg.get("train_fraction", 0.25)),
        noise_var=float(rcfg.get("noise_var", 0.1)),
        l_max=int(rcfg.get("l_max", 10)),
        p_halt=float(rcfg.get("p_halt", 0.1)),
        train=TrainSettings(
            learning_rate=float(rcfg.get("learning_rate", 0.01)),
            iterations=int(rcfg.get("iterations", 1000)),
        ),
    )
    kernels = tuple(rcfg.get("kernels", ["free", "diffusion_shape"]))
    walker_counts = tuple(int(x) for x in rcfg.get("walker_counts", [16, 256, 4096]))
    seeds = tuple(seed_for(master, f"regress-{s}") for s in range(int(rcfg.get("seeds", 5))))
    rows = regression_experiment(kernels, walker_counts, seeds, config, keep_predictions=True)
    with open(out / "metrics.csv", "w") as fh:
        fh.write("kernel,walkers,seed,rmse,nlpd\n")
        for r in rows:
            fh.write(f"{r['kernel']},{r['walkers']},{r['seed']},{r['rmse']:.17g},{r['nlpd']:.17g}\n")
    pred_dir = out / "predictions"
    pred_dir.mkdir(exist_ok=True)
    for r in rows:
        name = f"{r['kernel']}_n{r['walkers']}_s{r['seed']}.csv"
        with open(pred_dir / name, "w") as fh:
            fh.write("node,mean,std\n")
            for node, m, s in zip(r["nodes"], r["mean"], r["std"]):
                fh.write(f"{node},{m:.17g},{s:.17g}\n")
    print(f"wrote {out / 'metrics.csv'} ({len(rows)} rows)")
    return 0


def _cmd_bo(cfg: dict, master: int, out: Path) -> int:
    bcfg = cfg.get("bo", {})
    g, objective = _graph_from_config(cfg, master)
    if objective is None:
        raise ConfigError("bo needs an objective (generator kind or objective: degree)")
    n_init = int(bcfg.get("n_init", 20))
    steps = int(bcfg.get("steps", 100))
    num_seeds = int(bcfg.get("seeds", 5))
    strategies = list(bcfg.get("strategies", ["thompson", "random", "bfs", "dfs"]))
    template = ModelTemplate(
        modulation=_modulation(cfg, master),
        walk_cfg=cfg.get("walk") and _walk_config(cfg, g, master),
        noise_var=float(bcfg.get("noise_var", 0.1)),
        train=TrainSettings(
            learning_rate=float(bcfg.get("learning_rate", 0.01)),
            iterations=int(bcfg.get("train_iterations", 50)),
            probes=int(bcfg.get("probes", 10)),
        ),
        retrain_every=int(bcfg.get("retrain_every", 10)),
    )
    summary = []
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        finals = []
        for s in range(num_seeds):
            run_seed = seed_for(master, f"bo-{strategy}-{s}")
            if strategy == "thompson":
                trace = thompson_sampling(g, objective, template, n_init, steps, run_seed)
            else:
                trace = STRATEGIES[strategy](g, objective, n_init, steps, run_seed)
            trace.to_csv(out / f"trace_{strategy}_s{s}.csv")
            finals.append(trace.final_regret)
        summary.append((strategy, float(np.mean(finals))))
    with open(out / "summary.csv", "w") as fh:
        fh.write("strategy,mean_final_regret\n")
        for name, value in summary:
            fh.write(f"{name},{value:.17g}\n")
    print(f"wrote {out / 'summary.csv'}")
    return 0


def _cmd_bench_scaling(cfg: dict, master: int, out: Path) -> int:
    bcfg = cfg.get("bench", {})
    config = ScalingConfig(
        walkers=int(bcfg.get("walkers", 100)),
        p_halt=float(bcfg.get("p_halt", 0.1)),
        l_max=int(bcfg.get("l_max", 3)),
        epochs=int(bcfg.get("epochs", 50)),
        probes=int(bcfg.get("probes", 4)),
        train_fraction=float(bcfg.get("train_fraction", 0.8)),
    )
    sparse_ns = tuple(int(x) for x in bcfg.get("sparse_ns", [2**k for k in range(5, 17)]))
    dense_ns = tuple(int(x) for x in bcfg.get("dense_ns", [2**k for k in range(5, 13)]))
    seeds = tuple(range(int(bcfg.get("seeds", 3))))
    records = run_scaling(sparse_ns, dense_ns, seeds, config)
    records_to_csv(records, out / "scaling.csv")
    fits = scaling_fits(
        records,
        sparse_min_n=int(bcfg.get("sparse_min_n", 2**12)),
        dense_min_n=int(bcfg.get("dense_min_n", 2**9)),
    )
    (out / "fits.txt").write_text(fits_to_text(fits))
    print(f"wrote {out / 'scaling.csv'} and {out / 'fits.txt'}")
    return 0


def _cmd_ablation(cfg: dict, master: int, out: Path) -> int:
    acfg_in = cfg.get("ablation", {})
    config = AblationConfig(
        rows=int(acfg_in.get("rows", 30)),
        cols=int(acfg_in.get("cols", 30)),
        beta_true=float(acfg_in.get("beta_true", 10.0)),
        observed_fraction=float(acfg_in.get("observed_fraction", 0.1)),
        noise_var=float(acfg_in.get("noise_var", 0.01)),
        walkers=int(acfg_in.get("walkers", 10000)),
        p_halt=float(acfg_in.get("p_halt", 0.1)),
        l_max=int(acfg_in.get("l_max", 10)),
        train=TrainSettings(
            learning_rate=float(acfg_in.get("learning_rate", 0.01)),
            iterations=int(acfg_in.get("iterations", 1000)),
        ),
    )
    seeds = tuple(range(int(acfg_in.get("seeds", 5))))
    rows = run_ablation(seeds, config)
    with open(out / "ablation.csv", "w") as fh:
        fh.write("kernel,seed,rmse,nlpd\n")
        for r in rows:
            fh.write(f"{r['kernel']},{r['seed']},{r['rmse']:.17g},{r['nlpd']:.17g}\n")
    with open(out / "ablation_summary.csv", "w") as fh:
        fh.write("kernel,rmse,nlpd\n")
        for kernel in ("diffusion", "grf", "adhoc"):
            rs = [r["rmse"] for r in rows if r["kernel"] == kernel]
            ns = [r["nlpd"] for r in rows if r["kernel"] == kernel]
            fh.write(f"{kernel},{np.mean(rs):.17g},{np.mean(ns):.17g}\n")
    print(f"wrote {out / 'ablation.csv'} and {out / 'ablation_summary.csv'}")
    return 0


_COMMANDS = {
    "gen-graph": _cmd_gen_graph,
    "regress": _cmd_regress,
    "bo": _cmd_bo,
    "bench-scaling": _cmd_bench_scaling,
    "ablation": _cmd_ablation,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        master = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        out = Path(args.out or cfg.get("out", "."))
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, master, out)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
