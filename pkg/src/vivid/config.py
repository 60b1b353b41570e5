"""Experiment configuration: nested dataclasses with JSON round-trip.

Every field has a default; a config file only needs the keys it overrides.
The defaults are the desk-scale profile (see README).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import get_type_hints

from .inverse_operator import TrainConfig
from .lbfgs import SolverConfig

METHODS = ("DA", "VCNN", "VIVID", "DA-ROM", "VCNN-ROM", "VIVID-ROM")
AXES = ("background_std", "obs_noise", "sensor_grid", "corr_length")


@dataclass(frozen=True)
class SimulationConfig:
    grid: tuple[int, int] = (50, 50)
    g: float = 1.0
    b: float = 5e-4
    dt: float = 2e-3
    h_still: float = 0.3
    n_steps: int = 10000
    save_every: int = 25
    train_params: tuple[tuple[float, float], ...] = ((0.1, 4.0), (0.15, 4.0), (0.1, 5.0), (0.15, 5.0))
    test_params: tuple[float, float] = (0.2, 6.0)
    validation_every: int = 10

    def __post_init__(self):
        if self.n_steps < 1 or self.save_every < 1 or self.validation_every < 2:
            raise ValueError("n_steps, save_every >= 1 and validation_every >= 2 required")


@dataclass(frozen=True)
class SensorConfig:
    grid_n: int = 10
    grid_m: int = 10
    r_s: int = 3
    beta: float = 0.5


@dataclass(frozen=True)
class AssimilationConfig:
    s_b: float = 0.02
    obs_noise: float = 0.0
    corr_length: float = 5.0
    assumed_corr_length: float = 5.0
    r_var: float = 1e-3
    p_localization: float = 5.0
    p_shrinkage: float = 0.05

    def __post_init__(self):
        if self.corr_length <= 0 or self.assumed_corr_length <= 0:
            raise ValueError("correlation lengths must be positive")
        if self.s_b < 0 or self.obs_noise < 0 or self.r_var <= 0:
            raise ValueError("s_b, obs_noise must be >= 0 and r_var > 0")
        if not 0.0 <= self.p_shrinkage <= 1.0:
            raise ValueError("p_shrinkage must lie in [0, 1]")


@dataclass(frozen=True)
class EvalConfig:
    first_step: int = 500
    every: int = 500
    count: int = 20
    sweep_step: int = 4000
    sweep_repeats: int = 2
    background_std: tuple[float, ...] = (0.005, 0.01, 0.015, 0.02, 0.025, 0.03)
    obs_noise: tuple[float, ...] = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
    sensor_grid: tuple[int, ...] = (6, 7, 8, 9, 10, 11, 12)
    corr_length: tuple[float, ...] = (0.1, 3.0, 5.0, 7.0, 9.0)
    sweep_methods: tuple[str, ...] = ("DA", "VCNN", "VIVID")

    @property
    def steps(self) -> list[int]:
        return [self.first_step + i * self.every for i in range(self.count)]


@dataclass(frozen=True)
class SeedConfig:
    data: int = 0
    train: int = 1
    evaluation: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    assimilation: AssimilationConfig = field(default_factory=AssimilationConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-6, k_max=1000, ftol=1e-9))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12, channels=16, linear_head=True))
    train_rom: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12, channels=16))
    q: int = 100
    methods: tuple[str, ...] = METHODS
    record_timing: bool = False

    def __post_init__(self):
        if not self.methods:
            raise ValueError("method set must be nonempty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.q < 1:
            raise ValueError("q must be >= 1")


def _build(cls, data: dict):
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(extra)}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        if is_dataclass(hint):
            kwargs[key] = _build(hint, value)
        else:
            kwargs[key] = _tuplify(value)
    return cls(**kwargs)


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2) + "\n", encoding="utf-8")


def with_overrides(cfg: ExperimentConfig, **sections) -> ExperimentConfig:
    """``with_overrides(cfg, assimilation={"s_b": 0.01})`` style nested replace."""
    updates = {}
    for name, value in sections.items():
        current = getattr(cfg, name)
        updates[name] = replace(current, **value) if isinstance(value, dict) else value
    return replace(cfg, **updates)
