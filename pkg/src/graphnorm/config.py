"""Run configuration shared by the CLI subcommands.

One flat JSON object; unknown keys are rejected. Precedence for every field
is command-line flag, then config file, then default. The seed falls back to
the ``GRAPHNORM_SEED`` environment variable before the default of 0.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .netdata import SyntheticSpec
from .topology import MEASURES, check_measure
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # training
    lr: float = 0.0006
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    max_epochs: int = 1200
    patience: int = 50
    subset_size: int = 10
    beta: float | None = None
    dims: list[int] = field(default_factory=lambda: [36, 24, 5])
    hidden: int = 32
    readout: str = "mean"
    seed: int | None = None
    # simulation
    n_subjects: int = 20
    n_r: int = 35
    n_v: int = 4
    view_means: list[float] = field(default_factory=lambda: [0.084, 0.723, 0.3, 0.15])
    view_max: list[float] = field(default_factory=lambda: [0.586, 3.740, 1.5, 0.8])
    noise_scale: float = 0.3
    shared_fraction: float = 0.5
    label: str = "A"
    planted_edges: list[list[int]] = field(default_factory=list)
    planted_offset: float = 0.0
    planted_nodes: list[int] = field(default_factory=list)
    planted_node_shift: float = 0.0
    prototype_seed: int | None = None
    # paths
    data: str | None = None
    out: str | None = None
    # evaluation
    k_folds: int = 5
    k_values: list[int] = field(default_factory=lambda: [5, 10, 15, 20, 25])
    measures: list[str] = field(default_factory=lambda: list(MEASURES))
    integrator: str = "mgn"
    residual: str = "entrywise"
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown config key: {key!r}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: expected a JSON object")
        return cls.from_dict(data)

    def override(self, **flags) -> "RunConfig":
        merged = asdict(self)
        merged.update({k: v for k, v in flags.items() if v is not None})
        return RunConfig(**merged)

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return int(self.seed)
        env = os.environ.get("GRAPHNORM_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"GRAPHNORM_SEED must be an integer, got {env!r}") from None
        return 0

    def resolved_beta(self) -> float:
        """Explicit beta, else 25 for up to 4 views and 10 beyond."""
        if self.beta is not None:
            return float(self.beta)
        return 25.0 if self.n_v <= 4 else 10.0

    def train_config(self, n_views: int | None = None) -> TrainConfig:
        beta = self.beta if self.beta is not None else (25.0 if (n_views or self.n_v) <= 4 else 10.0)
        cfg = TrainConfig(
            lr=self.lr,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            max_epochs=self.max_epochs,
            patience=self.patience,
            subset_size=self.subset_size,
            beta=float(beta),
            dims=tuple(self.dims),
            hidden=self.hidden,
            seed=self.resolved_seed(),
            readout=self.readout,
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def synthetic_spec(self) -> SyntheticSpec:
        spec = SyntheticSpec(
            n_subjects=self.n_subjects,
            n_r=self.n_r,
            n_v=self.n_v,
            view_means=list(self.view_means),
            view_max=list(self.view_max),
            noise_scale=self.noise_scale,
            seed=self.resolved_seed(),
            shared_fraction=self.shared_fraction,
            label=self.label,
            planted_edges=[tuple(e) for e in self.planted_edges],
            planted_offset=self.planted_offset,
            planted_nodes=list(self.planted_nodes),
            planted_node_shift=self.planted_node_shift,
            prototype_seed=self.prototype_seed,
        )
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return spec

    def validate_evaluation(self) -> None:
        for m in self.measures:
            try:
                check_measure(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        if not self.k_values or min(self.k_values) < 1:
            raise ConfigError("k_values must be positive integers")
        if self.integrator not in ("mgn", "mean", "median"):
            raise ConfigError(f"integrator must be one of mgn, mean, median; got {self.integrator!r}")
        if self.residual not in ("entrywise", "frobenius"):
            raise ConfigError(f"residual must be 'entrywise' or 'frobenius', got {self.residual!r}")
