"""Single-file JSON checkpoints.

Weights are stored as base64 of their raw little-endian float64 bytes, so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, check_params

FORMAT = "tent-checkpoint/1"


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    seed: int = 0
    data: dict = field(default_factory=dict)  # pipeline metadata incl. scaling

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "model_config": self.config.to_dict(),
            "seed": self.seed,
            "params": {k: encode_array(v) for k, v in self.params.items()},
            "data": self.data,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format") != FORMAT:
            raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
        cfg = ModelConfig.from_dict(d["model_config"])
        params = {k: decode_array(v) for k, v in d["params"].items()}
        check_params(params, cfg)
        return cls(cfg, params, d.get("seed", 0), d.get("data", {}))


def save(ckpt: Checkpoint, path) -> None:
    Path(path).write_text(json.dumps(ckpt.to_dict(), indent=1))


def load(path) -> Checkpoint:
    return Checkpoint.from_dict(json.loads(Path(path).read_text()))
