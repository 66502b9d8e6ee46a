"""Model and run configuration, plain-text ``key = value`` files, presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Optional

__all__ = [
    "ConfigError",
    "TrainingMode",
    "ModelConfig",
    "PRESETS",
    "shape_chain",
    "parse_config_text",
    "build_config",
    "load_config",
    "dump_config",
]


class ConfigError(ValueError):
    """Invalid configuration (bad value, unknown key, broken shape chain)."""


class TrainingMode(str, Enum):
    UNSUP_LVM = "UNSUP_LVM"
    SUP_LVM = "SUP_LVM"
    SEMI_LVM = "SEMI_LVM"
    DECONV_AE = "DECONV_AE"
    ENCODER_ONLY = "ENCODER_ONLY"

    @property
    def stochastic(self) -> bool:
        return self in (TrainingMode.UNSUP_LVM, TrainingMode.SUP_LVM, TrainingMode.SEMI_LVM)

    @property
    def has_decoder(self) -> bool:
        return self is not TrainingMode.ENCODER_ONLY

    @property
    def uses_unlabeled(self) -> bool:
        return self in (TrainingMode.UNSUP_LVM, TrainingMode.SEMI_LVM, TrainingMode.DECONV_AE)


def shape_chain(t_max: int, window: int, stride: int, n_layers: int) -> list[int]:
    """Temporal extents through the encoder, e.g. ``[29, 13, 5, 1]``.

    Raises ConfigError naming the first layer whose input length does not
    divide evenly, or when the final extent is not 1.
    """
    lengths = [t_max]
    for layer in range(1, n_layers + 1):
        length = lengths[-1]
        if length < window or (length - window) % stride != 0:
            raise ConfigError(
                f"shape chain violated at layer {layer}: length {length} with window "
                f"{window} and stride {stride} does not give an integer output length"
            )
        lengths.append((length - window) // stride + 1)
    if lengths[-1] != 1:
        raise ConfigError(
            f"shape chain violated at layer {n_layers}: final temporal extent is "
            f"{lengths[-1]}, expected 1"
        )
    return lengths


@dataclass
class ModelConfig:
    # architecture
    t_max: int = 29
    window: int = 5
    stride: int = 2
    channels: tuple[int, ...] = (32, 64, 64)
    latent_dim: int = 16
    emb_dim: int = 32
    hidden_dim: Optional[int] = None
    tau: float = 0.01
    cos_delta: float = 1e-8
    log_sigma_clamp: float = 8.0
    score_pad: bool = False
    # optimisation
    dropout: float = 0.0
    lr: float = 1e-3
    batch_size: int = 32
    anneal_steps: int = 5000
    l2: float = 1e-5
    epochs: int = 50
    patience: int = 20
    # data
    vocab_size: int = 10000
    labels: tuple[str, ...] = ("0", "1")
    labeled_fraction: float = 1.0
    train_path: Optional[str] = None
    valid_path: Optional[str] = None
    test_path: Optional[str] = None
    embeddings_path: Optional[str] = None
    # run
    mode: TrainingMode = TrainingMode.UNSUP_LVM
    seed: int = 0
    preset: str = "desk"

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.labels = tuple(str(x) for x in self.labels)
        self.mode = TrainingMode(self.mode)

    @property
    def matcher_hidden(self) -> int:
        return self.hidden_dim if self.hidden_dim is not None else self.latent_dim

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def lengths(self) -> list[int]:
        return shape_chain(self.t_max, self.window, self.stride, len(self.channels))

    def validate(self) -> "ModelConfig":
        self.lengths()
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ConfigError(f"labeled_fraction must lie in [0, 1], got {self.labeled_fraction}")
        if min(self.channels, default=0) < 1 or self.latent_dim < 1 or self.emb_dim < 1:
            raise ConfigError("layer widths must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if len(self.labels) < 2:
            raise ConfigError("need at least two labels")
        return self

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


PRESETS: dict[str, dict] = {
    "desk": dict(channels=(32, 64, 64), latent_dim=16, emb_dim=32, lr=1e-3),
    "paper": dict(channels=(300, 600, 500), latent_dim=500, emb_dim=300, lr=3e-4),
}


def _parse_value(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if name in ("channels",):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if name == "labels":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if name == "mode":
            return TrainingMode(raw.upper())
        if raw.lower() in ("none", "") and "Optional" in str(kind):
            return None
        if "bool" in str(kind):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


_FIELD_TYPES = {f.name: f.type for f in fields(ModelConfig)}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, _FIELD_TYPES[key])
    return values


def build_config(preset: str = "desk", overrides: Optional[dict] = None) -> ModelConfig:
    """Preset defaults, then file/flag overrides, then validation."""
    overrides = dict(overrides or {})
    preset = overrides.pop("preset", preset)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    values = {**PRESETS[preset], **overrides, "preset": preset}
    return ModelConfig(**values).validate()


def load_config(path, overrides: Optional[dict] = None) -> ModelConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    values.update(overrides or {})
    return build_config(values.get("preset", "desk"), values)


def dump_config(config: ModelConfig) -> str:
    """Serialize to ``key = value`` text that :func:`parse_config_text` reads back."""
    lines = []
    for f in fields(ModelConfig):
        value = getattr(config, f.name)
        if isinstance(value, TrainingMode):
            text = value.value
        elif f.name == "channels":
            text = ",".join(str(v) for v in value)
        elif f.name == "labels":
            text = ",".join(value)
        elif value is None:
            text = "none"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
