"""Scenario, model, and training configuration with YAML round-trip."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .hypergraph import DiffusionConfig
from .orca import OrcaParams


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    ppo_epochs: int = 5
    clip_ratio: float = 0.2
    value_clip: float = 0.2
    entropy_coef: float = 0.01
    gain: float = 0.01
    gamma: float = 0.99
    gae_lambda: float = 0.95
    total_steps: int = 50_000
    batch_size: int = 4  # episodes collected per update
    minibatches: int = 2
    grad_clip: float = 10.0
    checkpoint_every: int = 10  # updates between checkpoints

    def validate(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("gae_lambda must lie in [0, 1]")
        if self.clip_ratio <= 0 or self.value_clip <= 0:
            raise ConfigError("clip ranges must be positive")
        if self.lr <= 0 or self.total_steps < 1 or self.batch_size < 1:
            raise ConfigError("lr, total_steps and batch_size must be positive")
        if self.ppo_epochs < 1 or self.minibatches < 1:
            raise ConfigError("ppo_epochs and minibatches must be >= 1")
        return self


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    attention_heads: int = 2
    encoder_layers: int = 2
    mlp_hidden: int = 64
    diffusion_hidden: int = 32

    def validate(self):
        if self.embed_dim % self.attention_heads:
            raise ConfigError("embed_dim must be divisible by attention_heads")
        if min(self.embed_dim, self.encoder_layers, self.mlp_hidden, self.diffusion_hidden) < 1:
            raise ConfigError("model dimensions must be positive")
        return self


@dataclass(frozen=True)
class SocialScoreParams:
    """Constants of the documented social-score proxy (column "ss_proxy")."""

    collision_penalty: float = 100.0
    discomfort_penalty: float = 1.0
    timeout_penalty: float = 25.0
    slow_penalty: float = 25.0
    slow_grace: float = 0.5  # fraction of the time budget that is penalty-free


@dataclass(frozen=True)
class ScenarioConfig:
    n_robots: int = 3
    n_humans: int = 5
    n_pois: int = 10
    robot_radius: float = 0.3
    human_radius: float = 0.3
    v_pref: float = 1.0
    human_speed_range: tuple[float, float] = (0.5, 1.5)
    dt: float = 0.25
    max_steps: int = 400
    spawn_radius: float = 8.0  # robots and pedestrians start on this circle
    poi_radius: float = 25.0  # task sites on the outer circle
    history_window: int = 5
    macro_interval: int = 40  # forced re-decision period in local steps
    goal_resample_prob: float = 0.005
    seeds: tuple[int, ...] = ()
    orca: OrcaParams = field(default_factory=OrcaParams)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    social_score: SocialScoreParams = field(default_factory=SocialScoreParams)

    def validate(self):
        if self.n_robots < 1:
            raise ConfigError("need at least one robot")
        if self.n_pois < 1:
            raise ConfigError("need at least one task site")
        if self.n_humans < 0:
            raise ConfigError("n_humans cannot be negative")
        if min(self.robot_radius, self.human_radius, self.v_pref, self.dt) <= 0:
            raise ConfigError("physical parameters must be positive")
        if self.max_steps < 1 or self.history_window < 1 or self.macro_interval < 1:
            raise ConfigError("step counts must be >= 1")
        if min(self.spawn_radius, self.poi_radius) <= 0:
            raise ConfigError("spawn and task circles must have positive radius")
        if not 0.0 <= self.goal_resample_prob <= 1.0:
            raise ConfigError("goal_resample_prob must be a probability")
        self.orca.validate()
        self.diffusion.validate()
        self.train.validate()
        self.model.validate()
        return self

    @property
    def time_budget(self) -> float:
        return self.max_steps * self.dt


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, data: dict):
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {key!r} for {cls.__name__}")
        kwargs[key] = value
    return cls(**kwargs)


def config_to_dict(config: ScenarioConfig) -> dict:
    return _to_plain(config)


def config_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    nested = {
        "orca": OrcaParams,
        "diffusion": DiffusionConfig,
        "train": TrainConfig,
        "model": ModelConfig,
        "social_score": SocialScoreParams,
    }
    for key, cls in nested.items():
        if key in data and isinstance(data[key], dict):
            data[key] = _build(cls, data[key])
    if "seeds" in data and data["seeds"] is not None:
        data["seeds"] = tuple(int(s) for s in data["seeds"])
    if "human_speed_range" in data:
        data["human_speed_range"] = tuple(float(v) for v in data["human_speed_range"])
    return _build(ScenarioConfig, data).validate()


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return config_from_dict(data)


def save_config(config: ScenarioConfig, path):
    Path(path).write_text(yaml.safe_dump(config_to_dict(config), sort_keys=True))


SMOKE = ScenarioConfig(
    n_robots=2,
    n_humans=2,
    n_pois=4,
    train=TrainConfig(total_steps=50_000),
)

# The three evaluation setups used for full-scale comparisons.
PRESETS: dict[str, ScenarioConfig] = {
    "smoke": SMOKE,
    "3r5h10p": ScenarioConfig(n_robots=3, n_humans=5, n_pois=10),
    "5r5h10p": ScenarioConfig(n_robots=5, n_humans=5, n_pois=10),
    "5r10h20p": ScenarioConfig(n_robots=5, n_humans=10, n_pois=20),
}
