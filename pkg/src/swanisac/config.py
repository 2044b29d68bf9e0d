"""Run configuration: nested sections with strict key checking.

Configs are JSON documents whose top-level sections mirror the dataclasses
below. Unknown sections or keys raise :class:`ConfigError` before any work
starts.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import GeometryConfig
from .physics import ChannelConfig, PowerConfig
from .sensing import SensingConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration field."""


@dataclass(frozen=True)
class RegionConfig:
    """Axis-aligned sampling rectangle for users and targets (fixed height)."""
    x_range: tuple[float, float] = (1.0, 21.0)
    y_range: tuple[float, float] = (0.0, 50.0)
    z: float = 0.0

    def __post_init__(self):
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("degenerate sampling region")


@dataclass(frozen=True)
class DataConfig:
    num_samples: int = 3000
    K_c: int = 2
    K_s: int = 1
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    region: RegionConfig = field(default_factory=RegionConfig)
    oracle_candidates: int = 64
    oracle_passes: int = 2

    def __post_init__(self):
        if self.num_samples < 3:
            raise ValueError("num_samples must be >= 3")
        if self.K_c < 1 or self.K_s < 1:
            raise ValueError("K_c and K_s must be >= 1")
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError("split fractions must be nonnegative and sum to 1")


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    layers: int = 4
    heads: int = 4
    graph_layers: int = 2
    d_g: int = 64
    head_dim: int = 64
    mlp_hidden: int = 256
    lora_rank: int = 32
    lora_alpha: float = 16.0
    lora_dropout: float = 0.05
    adj_eps: float = 1e-8
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in ("full", "mlp", "transformer_no_graph", "shared_head"):
            raise ValueError(f"unknown model variant {self.variant!r}")
        if self.lora_rank > self.hidden_dim:
            raise ValueError("adapter rank exceeds hidden dimension")
        if self.hidden_dim % self.heads:
            raise ValueError("hidden_dim must be divisible by heads")
        if min(self.hidden_dim, self.layers, self.heads, self.graph_layers, self.d_g,
               self.head_dim, self.lora_rank) < 1:
            raise ValueError("model sizes must be positive")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    batch: int = 64
    eval_batch: int = 128
    epochs: int = 30
    clip: float = 1.0
    warm_epochs: int = 2
    seed: int = 0
    w_dep: float = 10.0
    w_rate: float = 1.0
    w_crlb: float = 0.2
    eps: float = 1e-12
    w_spacing: float = 1.0
    w_range: float = 1.0
    w_coverage: float = 0.1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not self.clip > 0:
            raise ValueError("clip must be > 0")
        if self.batch < 1 or self.eval_batch < 1 or self.epochs < 1:
            raise ValueError("batch sizes and epochs must be >= 1")
        if min(self.w_dep, self.w_rate, self.w_crlb, self.w_spacing, self.w_range,
               self.w_coverage) < 0:
            raise ValueError("loss weights must be >= 0")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def replace(self, **sections) -> "RunConfig":
        """Return a copy with fields of the named sections overridden.

        ``cfg.replace(geometry={"N": 8}, train={"epochs": 10})``
        """
        return from_dict(_deep_merge(to_dict(self), sections))


_NESTED = {"region": RegionConfig}


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for k, v in values.items():
        if k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        elif isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(d: dict) -> RunConfig:
    sections = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(d) - set(sections))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    classes = {"geometry": GeometryConfig, "channel": ChannelConfig, "sensing": SensingConfig,
               "power": PowerConfig, "data": DataConfig, "model": ModelConfig,
               "train": TrainConfig}
    built = {name: _build(classes[name], vals, name) for name, vals in d.items()}
    return RunConfig(**built)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        if obj.imag != 0:
            raise ConfigError("complex config values are not serialisable")
        return obj.real
    return obj


def to_dict(cfg) -> dict:
    return _plain(cfg)


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None) -> RunConfig:
    """Defaults overlaid with the JSON file at ``path`` (if given)."""
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(_deep_merge(to_dict(RunConfig()), raw))


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, indent=2)
