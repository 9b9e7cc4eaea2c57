"""Run configuration: JSON file -> nested dataclasses, unknown keys rejected.

Defaults follow the USA-Canada TENT setup: one encoder layer, 8 heads,
key-dimension 16, 32 dense units, batch size 96, lag 16, horizon 4.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .pipeline import PipelineConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class PathsConfig:
    data_csv: str = "data.csv"
    coords_csv: str = "coords.csv"
    out_dir: str = "run"


@dataclass
class ModelSection:
    H: int = 8
    d_k: int = 16
    ffn_hidden: int = 32
    n_layers: int = 1
    softmax_axis: str = "city"
    ffn_relu_both: bool = False
    norm_eps: float = 1e-6


@dataclass
class TrainSection:
    max_epochs: int = 300
    patience: int = 20
    batch_size: int = 96
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    d_model: int | None = None
    fixed_lr: float | None = None


@dataclass
class AttentionSection:
    mode: str = "test-mean"
    sample: int = 0
    top_k: int = 10
    layer: int = 0


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    attention: AttentionSection = field(default_factory=AttentionSection)
    seed: int = 0

    def model_config(self, C: int, F: int) -> ModelConfig:
        return ModelConfig(T=self.pipeline.lag, C=C, F=F, n_out=1,
                           **dataclasses.asdict(self.model))

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **dataclasses.asdict(self.train))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in data.items():
        name = f"{prefix}.{key}" if prefix else key
        if key not in fields:
            raise ConfigError(name, "unknown key")
        sub = _SECTIONS.get(key) if cls is RunConfig else None
        kwargs[key] = _build(sub, val, name) if sub is not None else val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix or "<root>", str(exc)) from exc


_SECTIONS = {
    "paths": PathsConfig,
    "model": ModelSection,
    "train": TrainSection,
    "pipeline": PipelineConfig,
    "attention": AttentionSection,
}


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path, base_dir: str | Path | None = None) -> RunConfig:
    """Read a JSON config; relative paths resolve against the file's directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    cfg = from_dict(data)
    base = Path(base_dir) if base_dir is not None else path.parent
    for name in ("data_csv", "coords_csv", "out_dir"):
        p = Path(getattr(cfg.paths, name))
        if not p.is_absolute():
            setattr(cfg.paths, name, str(base / p))
    return cfg
