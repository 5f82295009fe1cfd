"""Thompson-sampling optimisation over graph nodes, with search baselines.

Each strategy queries nodes without replacement under a shared budget of
``n_init`` seeded uniform draws plus ``num_steps`` strategy-specific picks,
and records the noisy observation, the best true value so far and the
simple regret after every query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import Dataset, ModelTemplate, sample_posterior_pathwise, train
from .graphs import Graph, Objective
from .seeding import seed_for

__all__ = [
    "BoRecord",
    "BoTrace",
    "thompson_sampling",
    "random_search",
    "bfs_search",
    "dfs_search",
    "degree_objective",
]


@dataclass(frozen=True)
class BoRecord:
    t: int  # <= 0 for initial samples
    node: int
    y: float
    best: float  # best true objective among queried nodes
    regret: float


@dataclass
class BoTrace:
    strategy: str
    n_init: int
    records: list

    @property
    def nodes(self) -> np.ndarray:
        return np.array([r.node for r in self.records], dtype=np.int64)

    @property
    def final_regret(self) -> float:
        return self.records[-1].regret

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,node,y,best,regret\n")
            for r in self.records:
                fh.write(f"{r.t},{r.node},{r.y:.17g},{r.best:.17g},{r.regret:.17g}\n")


class _Tracker:
    def __init__(self, strategy: str, objective: Objective, n_init: int):
        self.trace = BoTrace(strategy, n_init, [])
        self.objective = objective
        self.best = -np.inf
        self.queried = np.zeros(objective.num_nodes, dtype=bool)

    def record(self, t: int, node: int) -> float:
        y = self.objective.observe(node)
        self.best = max(self.best, float(self.objective.values[node]))
        self.queried[node] = True
        regret = self.objective.best_value - self.best
        self.trace.records.append(BoRecord(t, int(node), y, self.best, regret))
        return y


def _draw_init(tracker: _Tracker, n_init: int, rng) -> tuple[list, list]:
    n = tracker.objective.num_nodes
    init = rng.choice(n, size=min(n_init, n), replace=False)
    nodes, ys = [], []
    for j, node in enumerate(init):
        ys.append(tracker.record(j - len(init) + 1, node))
        nodes.append(int(node))
    return nodes, ys


def thompson_sampling(
    g: Graph,
    objective: Objective,
    model_template: ModelTemplate,
    n_init: int,
    num_steps: int,
    seed: int = 0,
) -> BoTrace:
    """Query the argmax of one pathwise posterior sample per step.

    The surrogate is retrained (warm-started) every ``retrain_every``
    iterations of the template; already-queried nodes are excluded from
    the argmax so all strategies stay without-replacement.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if n_init + num_steps > g.num_nodes:
        raise ValueError("budget exceeds the number of nodes")
    tracker = _Tracker("thompson", objective, n_init)
    rng = np.random.default_rng(seed_for(seed, "bo-init"))
    nodes, ys = _draw_init(tracker, n_init, rng)
    model = model_template.build(g, seed_for(seed, "bo-model"))
    for t in range(1, num_steps + 1):
        if tracker.queried.all():
            break
        data = Dataset(np.array(nodes), np.array(ys))
        if (t - 1) % model_template.retrain_every == 0:
            train(model, data, model_template.train)
        sample = sample_posterior_pathwise(model, data, seed=seed_for(seed, f"bo-sample-{t}"))
        sample = np.where(tracker.queried, -np.inf, sample)
        node = int(np.argmax(sample))
        ys.append(tracker.record(t, node))
        nodes.append(node)
    return tracker.trace


def random_search(g: Graph, objective: Objective, n_init: int, num_steps: int, seed: int = 0) -> BoTrace:
    """Uniform sampling without replacement under the same budget."""
    if n_init + num_steps > g.num_nodes:
        raise ValueError("budget exceeds the number of nodes")
    tracker = _Tracker("random", objective, n_init)
    rng = np.random.default_rng(seed_for(seed, "bo-init"))
    _draw_init(tracker, n_init, rng)
    for t in range(1, num_steps + 1):
        pool = np.flatnonzero(~tracker.queried)
        if not len(pool):
            break
        tracker.record(t, int(rng.choice(pool)))
    return tracker.trace


def _frontier_search(strategy, g, objective, n_init, num_steps, seed):
    """Shared BFS/DFS driver: expand observed nodes over the adjacency,
    visiting neighbours in ascending id; restart from a fresh uniform
    unvisited node when the frontier empties.

    The expansion point stays fixed until its neighbours are exhausted:
    the queue head for BFS, the stack top for DFS.
    """
    if n_init + num_steps > g.num_nodes:
        raise ValueError("budget exceeds the number of nodes")
    tracker = _Tracker(strategy, objective, n_init)
    rng = np.random.default_rng(seed_for(seed, "bo-init"))
    init_nodes, _ = _draw_init(tracker, n_init, rng)
    frontier = list(init_nodes)
    for t in range(1, num_steps + 1):
        node = None
        while frontier:
            cand = frontier[0] if strategy == "bfs" else frontier[-1]
            nbrs = g.neighbors(cand)
            fresh = nbrs[~tracker.queried[nbrs]]
            if not len(fresh):
                if strategy == "bfs":
                    frontier.pop(0)
                else:
                    frontier.pop()
                continue
            node = int(fresh[0])
            frontier.append(node)
            break
        if node is None:
            pool = np.flatnonzero(~tracker.queried)
            if not len(pool):
                break
            node = int(rng.choice(pool))
            frontier.append(node)
        tracker.record(t, node)
    return tracker.trace


def bfs_search(g: Graph, objective: Objective, n_init: int, num_steps: int, seed: int = 0) -> BoTrace:
    return _frontier_search("bfs", g, objective, n_init, num_steps, seed)


def dfs_search(g: Graph, objective: Objective, n_init: int, num_steps: int, seed: int = 0) -> BoTrace:
    return _frontier_search("dfs", g, objective, n_init, num_steps, seed)


def degree_objective(g: Graph, noise_var: float = 0.0, seed: int = 0) -> Objective:
    """Node degree as the target signal (influence-style tasks)."""
    return Objective(values=g.degrees.astype(np.float64), noise_var=noise_var, seed=seed)
