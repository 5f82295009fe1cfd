"""Run configuration: a nested key-value file validated against a schema.

Unknown keys are rejected so typos fail loudly; parse -> serialise ->
parse is the identity.
"""

from __future__ import annotations

import copy

import yaml


class ConfigError(ValueError):
    pass


# schema: dict -> nested dict of allowed keys; None means "any scalar/list"
_WALK = {"num_walkers": None, "p_halt": None, "l_max": None, "seed": None}
_MODULATION = {"kind": None, "l_max": None, "beta": None, "sigma_f": None, "coeffs": None,
               "init_seed": None}
_TRAIN = {"learning_rate": None, "iterations": None, "probes": None, "trace_mode": None}

SCHEMA = {
    "seed": None,
    "out": None,
    "threads": None,
    "strict_sequential": None,
    "graph": {
        "generator": {
            "kind": None,
            "num_nodes": None,
            "k": None,
            "waves": None,
            "rows": None,
            "cols": None,
            "width": None,
            "peaks": None,
            "block_sizes": None,
            "p_in": None,
            "p_out": None,
            "means": None,
            "stds": None,
            "noise_var": None,
        },
        "edge_list": {"path": None, "weighted": None},
        "objective": None,  # "degree" to replace the generator objective
    },
    "walk": _WALK,
    "modulation": _MODULATION,
    "train": _TRAIN,
    "regress": {
        "kernels": None,
        "walker_counts": None,
        "seeds": None,
        "train_fraction": None,
        "beta_true": None,
        "normalized_truth": None,
        "noise_var": None,
        "rows": None,
        "cols": None,
        "l_max": None,
        "p_halt": None,
        "iterations": None,
        "learning_rate": None,
    },
    "bo": {
        "n_init": None,
        "steps": None,
        "seeds": None,
        "strategies": None,
        "retrain_every": None,
        "noise_var": None,
        "train_iterations": None,
        "retrain_iterations": None,
        "learning_rate": None,
        "probes": None,
    },
    "bench": {
        "sparse_ns": None,
        "dense_ns": None,
        "seeds": None,
        "walkers": None,
        "p_halt": None,
        "l_max": None,
        "epochs": None,
        "probes": None,
        "train_fraction": None,
        "sparse_min_n": None,
        "dense_min_n": None,
    },
    "ablation": {
        "seeds": None,
        "rows": None,
        "cols": None,
        "beta_true": None,
        "observed_fraction": None,
        "noise_var": None,
        "walkers": None,
        "p_halt": None,
        "l_max": None,
        "iterations": None,
        "learning_rate": None,
    },
}


def _validate(node, schema, path):
    if not isinstance(node, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    for key, value in node.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {path + key!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            _validate(value, sub, path + key + ".")


def validate_config(cfg: dict) -> dict:
    _validate(cfg, SCHEMA, "")
    if "graph" in cfg:
        sources = [k for k in ("generator", "edge_list") if k in cfg["graph"]]
        if len(sources) != 1:
            raise ConfigError("graph section needs exactly one of: generator, edge_list")
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if cfg is None:
        cfg = {}
    return validate_config(cfg)


def dump_config(cfg: dict, path):
    validate_config(copy.deepcopy(cfg))
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
