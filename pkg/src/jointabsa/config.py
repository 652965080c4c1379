"""Run configuration: defaults, flat key-value config files, CLI merging.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed.  Keys mirror the TrainConfig fields; every key can be overridden
by the CLI flag of the same name.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass


class ConfigError(ValueError):
    """A configuration value is out of range or unparseable."""


@dataclass
class TrainConfig:
    alpha: float = 0.1
    beta: float = 0.1
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    dropout: float = 0.1
    embed_dim: int = 64
    hidden_dim: int = 64
    attention_hops: int = 2
    tau_start: float = 0.5
    tau_end: float = 0.5
    max_span_len: int = 8
    seed: int = 0
    patience: int = 20
    no_shallow: bool = False
    no_deep: bool = False
    train: str = ""
    dev: str = ""
    out: str = ""

    def validate(self):
        if not 0.0 <= self.alpha <= 0.5:
            raise ConfigError(f"alpha must be in [0, 0.5], got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ConfigError(f"embed_dim must be a positive even number, got {self.embed_dim}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.attention_hops < 1:
            raise ConfigError(f"attention_hops must be >= 1, got {self.attention_hops}")
        for name in ("tau_start", "tau_end"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {v}")
        if self.max_span_len < 1:
            raise ConfigError(f"max_span_len must be >= 1, got {self.max_span_len}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        return self

    def estimator_params(self):
        """Keyword arguments for the JointAspectSentiment constructor."""
        skip = {"train", "dev", "out"}
        return {
            f.name: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if f.name not in skip
        }

    def config_hash(self):
        text = ",".join(
            f"{f.name}={getattr(self, f.name)!r}"
            for f in dataclasses.fields(self)
            if f.name not in ("train", "dev", "out")
        )
        return hashlib.sha1(text.encode()).hexdigest()[:12]

    def to_text(self):
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in dataclasses.fields(self)]
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name, raw):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    return raw


def parse_config_file(path):
    """Parse a flat key-value config file into a field dict."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def resolve_config(file_path=None, overrides=None):
    """Layer defaults, an optional config file, and explicit overrides."""
    values = {}
    if file_path:
        values.update(parse_config_file(file_path))
    if overrides:
        for key, v in overrides.items():
            if v is not None:
                values[key] = v
    return TrainConfig(**values).validate()
