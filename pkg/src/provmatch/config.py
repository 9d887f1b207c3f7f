"""Run configuration with CLI-flag > config-file > default precedence."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import ConfigError, IoFailure


@dataclass
class RunConfig:
    """Every tunable of the pipeline; echoed into output artifacts."""

    window_length: int = 86_400
    min_edge_weight: int = 1
    hash_dim: int = 16
    layers: int = 3
    hidden: int = 500
    attn_dim: int = 64
    restart_prob: float = 0.15
    rwr_tol: float = 1e-9
    rwr_max_iter: int = 200
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    pairs_per_epoch: int = 128
    pos_ratio: float = 0.5
    threshold: float = 0.5
    top_k: int = 5
    seed: int = 0
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.window_length <= 0:
            raise ConfigError("window_length must be positive")
        if self.hash_dim < 8:
            raise ConfigError("hash_dim must be >= 8")
        if self.layers < 1 or self.hidden < 1 or self.attn_dim < 1:
            raise ConfigError("layers, hidden, and attn_dim must be >= 1")
        if not (0.0 < self.restart_prob < 1.0):
            raise ConfigError("restart_prob must lie in (0, 1)")
        if not (0.0 <= self.pos_ratio <= 1.0):
            raise ConfigError("pos_ratio must lie in [0, 1]")
        if not (-1.0 <= self.threshold <= 1.0):
            raise ConfigError("threshold must lie in [-1, 1]")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.pairs_per_epoch < 1:
            raise ConfigError("invalid training sizes")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def resolve(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        """Layer defaults, then the flat key-value config file, then CLI flags."""
        values = cls().to_dict()
        if config_path:
            try:
                with open(config_path, "r", encoding="utf-8") as fh:
                    loaded = json.load(fh)
            except OSError as exc:
                raise IoFailure(f"cannot read config {config_path}: {exc}")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {config_path} is not valid JSON: {exc}")
            if not isinstance(loaded, dict):
                raise ConfigError("config file must be a flat JSON object")
            for key, val in loaded.items():
                if key not in values:
                    raise ConfigError(f"unknown config key {key!r}")
                values[key] = type(values[key])(val)
        for key, val in overrides.items():
            if val is not None:
                values[key] = val
        return cls(**values).validate()
