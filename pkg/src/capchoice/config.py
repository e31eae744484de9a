"""Run configuration shared by the CLI and the experiment scripts."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .online import OnlineConfig


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 0
    scenario: str = "sec4_drive_bike"
    intervals: int = 100
    interval_minutes: int = 30
    theta: float = 0.1
    theta_true: float = 0.0905
    theta_fixed: float | None = None
    tie_modes: bool = True
    granularity: str = "per-link"
    epsilon_binding: float = 1e-6
    lambda_reg: float = 1e-8
    tol: float = 1e-8
    max_iter: int = 10_000
    observation_lag: str = "current"
    theta_max: float = 1000.0
    walk_speed_kmh: float = 5.0
    bike_speed_kmh: float = 12.0
    max_walk_m: float = 800.0
    nrmsd_normalizer: str = "range"
    match_window: int | None = None
    noise_sigma: float = 0.0
    reset_capacities: bool = True
    demand: dict | None = None
    u_initial: dict | None = None
    rated_capacity: dict | None = None
    initial_bikes: dict | None = None

    def online(self) -> OnlineConfig:
        return OnlineConfig(
            epsilon_binding=self.epsilon_binding,
            lambda_reg=self.lambda_reg,
            tol=self.tol,
            max_iter=self.max_iter,
            observation_lag=self.observation_lag,
        )

    def demand_map(self) -> dict[tuple[str, str], int] | None:
        """Demand keyed "origin->destination" in JSON becomes OD tuples."""
        if self.demand is None:
            return None
        out = {}
        for key, value in self.demand.items():
            if "->" not in key:
                raise ConfigError(f"demand key {key!r} must look like 'origin->destination'")
            o, d = key.split("->", 1)
            out[(o, d)] = value
        return out


def load_config(path) -> EngineConfig:
    blob = json.loads(Path(path).read_text())
    known = {f.name for f in dataclasses.fields(EngineConfig)}
    unknown = sorted(set(blob) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {unknown}")
    return EngineConfig(**blob)


def save_config(path, config: EngineConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(dataclasses.asdict(config), sort_keys=True, indent=2) + "\n"
    )
