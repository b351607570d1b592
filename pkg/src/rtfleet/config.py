"""Scenario configuration: a YAML document with normative dotted key paths.

Every section maps onto a dataclass; unknown keys, wrong types and missing
files raise :class:`ConfigError` naming the offending key path.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .model import ConfigError


@dataclass
class PathsConfig:
    nodes: str = "nodes.csv"
    links: str = "links.csv"
    zones: str = "zones.csv"
    facilities: str = "facilities.csv"
    microdata_households: str = "microdata_households.csv"
    microdata_persons: str = "microdata_persons.csv"
    zone_targets: str = "zone_targets.csv"
    od_model: str = "od_model.csv"
    chains: str | None = None  # shipped defaults when unset
    time_models: str | None = None
    scoring_params: str | None = None
    population_households: str | None = None  # load instead of synthesizing
    population_persons: str | None = None


@dataclass
class SynthesisConfig:
    budget_factor: int = 50
    plateau: int = 100


@dataclass
class ActivitygenConfig:
    theta_m: float = 2000.0
    home_jitter_m: float = 150.0
    mode_seed_shares: dict = field(default_factory=lambda: {"car": 0.55, "pt": 0.15, "walk": 0.30})


@dataclass
class ScoringConfig:
    rt_constant_offset: float = 0.0
    trust_sign_aware: bool = True
    wait_multiplier: float = 10.0
    beta_money_per_eur: float = -1.0
    pt_fare_eur: float = 1.43


@dataclass
class MobsimConfig:
    stuck_time_sec: int = 3600
    stuck_penalty: float = -100.0
    cell_length_m: float = 7.5
    walk_speed_kmh: float = 5.0
    pt_speed_kmh: float = 20.0
    detour_factor: float = 1.3
    tt_bin_sec: float = 900.0
    tt_smoothing: float = 0.3
    infinite_capacity: bool = False


@dataclass
class FleetSection:
    enabled: bool = True
    size: int = 100
    depots: list = field(default_factory=list)  # link ids; empty -> quadrant centroids
    ingress_sec: int = 60
    egress_sec: int = 120
    dispatch_rule: str = "nearest_idle"


@dataclass
class WeightsConfig:
    select: float = 0.8
    mode_mutation: float = 0.1
    time_mutation: float = 0.1


@dataclass
class ReplanningConfig:
    max_plans: int = 5
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    innovation_stop_fraction: float = 0.8
    beta_select: float = 1.0
    sigma_sec: float = 1800.0
    score_smoothing: float = 0.5


@dataclass
class ConvergenceConfig:
    window: int = 10
    epsilon: float = 1e-3


@dataclass
class RunConfig:
    max_iterations: int = 200
    threads: int = 1


@dataclass
class MetricsConfig:
    in_service_occupied_only: bool = False


@dataclass
class OutputConfig:
    events: bool = True  # final-iteration events.csv
    charts: bool = True


@dataclass
class ScenarioConfig:
    seed: int = 0
    output_dir: str = "out"
    population_fraction: float = 1.0
    paths: PathsConfig = field(default_factory=PathsConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    activitygen: ActivitygenConfig = field(default_factory=ActivitygenConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    taste_factors: dict = field(default_factory=dict)
    mobsim: MobsimConfig = field(default_factory=MobsimConfig)
    fleet: FleetSection = field(default_factory=FleetSection)
    replanning: ReplanningConfig = field(default_factory=ReplanningConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    run: RunConfig = field(default_factory=RunConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def resolve(self, key: str) -> Path | None:
        """Absolute path of ``paths.<key>`` (relative to the config file)."""
        value = getattr(self.paths, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def check_files(self) -> None:
        for f in dataclasses.fields(PathsConfig):
            p = self.resolve(f.name)
            if f.name.startswith("population_") and p is None:
                continue
            if p is not None and not p.is_file():
                raise ConfigError(f"paths.{f.name}: file not found: {p}")

    def validate(self) -> None:
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if not 0 < self.population_fraction <= 1:
            raise ConfigError("population_fraction: must be in (0, 1]")
        w = self.replanning.weights
        ws = (w.select, w.mode_mutation, w.time_mutation)
        if min(ws) < 0 or abs(sum(ws) - 1) > 1e-9:
            raise ConfigError("replanning.weights: must be >= 0 and sum to 1")
        if self.replanning.max_plans < 1:
            raise ConfigError("replanning.max_plans: must be >= 1")
        if not 0 <= self.replanning.innovation_stop_fraction <= 1:
            raise ConfigError("replanning.innovation_stop_fraction: must be in [0, 1]")
        if self.convergence.window < 1 or self.convergence.epsilon <= 0:
            raise ConfigError("convergence: window >= 1 and epsilon > 0 required")
        if self.run.max_iterations < 1:
            raise ConfigError("run.max_iterations: must be >= 1")
        if self.fleet.enabled and self.fleet.size < 1:
            raise ConfigError("fleet.size: must be >= 1")
        if self.mobsim.stuck_time_sec < 1:
            raise ConfigError("mobsim.stuck_time_sec: must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def fingerprint(self, exclude=("output_dir", "fleet.size", "taste_factors.enabled", "run.threads")) -> str:
        """Hash of the configuration minus the keys listed in ``exclude``."""
        d = self.to_dict()
        for key in exclude:
            node = d
            parts = key.split(".")
            for p in parts[:-1]:
                node = node.get(p, {})
            node.pop(parts[-1], None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _build(cls, data: Any, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name != "base_dir"}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in fields:
            raise ConfigError(f"{path}: unknown key")
        default = fields[key].default_factory() if fields[key].default_factory is not dataclasses.MISSING \
            else fields[key].default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value or {}, path + ".")
        else:
            kwargs[key] = _coerce(value, default, path)
    return cls(**kwargs)


def _coerce(value, default, path):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list")
    if isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return value


def config_from_mapping(data: dict, base_dir: Path | str = ".") -> ScenarioConfig:
    cfg = _build(ScenarioConfig, data or {}, "")
    cfg.base_dir = Path(base_dir)
    cfg.validate()
    return cfg


def load_config(path, check_files: bool = True) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from None
    cfg = config_from_mapping(data, path.parent.resolve())
    if check_files:
        cfg.check_files()
    return cfg


def dump_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False), encoding="utf-8")
