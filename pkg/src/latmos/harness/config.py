"""Experiment configuration: dataclasses with a lossless JSON round trip.

A config file is a JSON object::

    {"kind": "symbolic_base",
     "symbolic": {"sizes": [4, 6, 8], "dfa_seeds": [0, 1, 2], ...,
                  "train": {"epochs": 100, "lr": 0.001, ...}},
     "doorkey": null,
     "output_dir": null, "workers": 1}

Unknown keys are rejected. ``LATMOS_OUTPUT_ROOT`` sets the default output
root; every run writes under ``<root>/<kind>-<config hash>/``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..model import TrainConfig

KINDS = ("symbolic_base", "symbolic_noisy", "symbolic_novel", "doorkey_plan", "gradcheck")
OUTPUT_ENV = "LATMOS_OUTPUT_ROOT"


@dataclass
class SymbolicConfig:
    sizes: list = field(default_factory=lambda: [4, 6, 8])
    dfa_seeds: list = field(default_factory=lambda: [0, 1, 2])
    num_symbols: int = 4
    encoding: str = "one_hot"
    num_walks: int = 1000            # positive demonstrations per DFA
    num_random_walks: int = 1000     # extra automaton-labeled walks for the neural models
    test_per_class: int = 250
    test_negatives: str = "unfinished"   # or "any"
    noise_variances: list = field(default_factory=lambda: [0.1, 0.2])
    holdout_fraction: float = 0.1
    backbones: list = field(default_factory=lambda: ["gru", "attention", "ssm"])
    hidden_factors: list = field(default_factory=lambda: [0.5, 1, 4, 12])
    rank_factors: list = field(default_factory=lambda: [0.5, 1, 4, 12])
    alergia_alpha: float = 0.5
    spectral_kind: str = "indicator"
    spectral_basis_len: int = 2
    spectral_min_count: int = 2
    threshold: float = 0.5
    data_seed: int = 0
    model_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class DoorKeyConfig:
    num_envs: int = 36
    env_seed: int = 0
    size: int = 8
    demos_per_env: int = 4
    test_starts_per_env: int = 1
    backbone: str = "gru"
    hidden_dim: int = 32
    frozen_dim: int = 16
    task_dim: int = 16
    conv_filters: int = 5
    heuristics: list = field(default_factory=lambda: ["latmos_v", "latmos_x", "o_l2", "dijkstra"])
    lam: float = 0.05
    lambda_sweep: list = field(default_factory=lambda: [0.01, 0.05, 0.2])
    budget: int = 5000
    data_seed: int = 0
    model_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class ExperimentConfig:
    kind: str = "symbolic_base"
    symbolic: SymbolicConfig | None = None
    doorkey: DoorKeyConfig | None = None
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.kind.startswith("symbolic") and self.symbolic is None:
            self.symbolic = SymbolicConfig()
        if self.kind == "doorkey_plan" and self.doorkey is None:
            self.doorkey = DoorKeyConfig()

    def to_dict(self):
        return asdict(self)

    def experiment_dict(self):
        """Everything that affects results; output location and worker count excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.experiment_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def run_dir(self) -> Path:
        root = self.output_dir or os.environ.get(OUTPUT_ENV, "runs")
        return Path(root) / f"{self.kind}-{self.config_hash()}"


def _build(cls, data):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ValueError(f"{cls.__name__} expects an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        sub = _NESTED.get((cls, k))
        kw[k] = _build(sub, v) if sub else v
    return cls(**kw)


_NESTED = {
    (ExperimentConfig, "symbolic"): SymbolicConfig,
    (ExperimentConfig, "doorkey"): DoorKeyConfig,
    (SymbolicConfig, "train"): TrainConfig,
    (DoorKeyConfig, "train"): TrainConfig,
}


def config_from_dict(d: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, d)


def load_config(path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``dotted.key=value`` overrides (values parsed as JSON when possible)."""
    d = cfg.to_dict()
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ValueError(f"override path {key!r} does not name a config section")
            node = node[p]
        if parts[-1] not in node:
            raise ValueError(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(value)
    return config_from_dict(d)
