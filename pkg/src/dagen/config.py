"""Configuration records and the flat key-value config file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

REFINERS = ("gr-add", "gr-mul", "aroa-v", "aroa-m", "aroa-c", "identity")


class ConfigError(ValueError):
    pass


def normalize_refiner(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    if key not in REFINERS:
        raise ConfigError(f"unknown refiner {name!r}; choose one of {', '.join(REFINERS)}")
    return key


@dataclass
class ModelConfig:
    hidden: int = 80
    embed: int = 80
    act_embed: int = 80
    refiner: str = "aroa-m"
    init_scale: float = 0.08
    max_len: int = 60

    def __post_init__(self):
        self.refiner = normalize_refiner(self.refiner)
        for k in ("hidden", "embed", "act_embed", "max_len"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")

    @property
    def da_size(self) -> int:
        return self.act_embed + self.hidden


@dataclass
class TrainConfig:
    lr: float = 0.1
    lr_decay: float = 0.5
    l2_coeff: float = 1e-4
    l2_every: int = 10
    dropout_rate: float = 0.3
    patience: int = 3
    max_epochs: int = 100
    seed: int = 1
    restarts: int = 5
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.l2_every < 1:
            raise ConfigError("l2_every must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")


@dataclass
class BeamConfig:
    width: int = 10
    overgen: int = 20
    topk: int = 5
    lam: float = 1000.0
    max_len: int = 60

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError("beam width must be >= 1")
        if self.overgen < self.topk:
            raise ConfigError("overgen must be >= topk")


@dataclass
class AppConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)
    split_seed: int = 0

    def to_flat(self) -> dict:
        flat = {}
        for section in ("model", "train", "beam"):
            for k, v in dataclasses.asdict(getattr(self, section)).items():
                flat[f"{section}.{k}"] = v
        flat["split_seed"] = self.split_seed
        return flat

    @classmethod
    def from_flat(cls, flat: dict) -> AppConfig:
        sections: dict[str, dict] = {"model": {}, "train": {}, "beam": {}}
        top = {}
        for key, value in flat.items():
            section, _, name = key.partition(".")
            if name:
                if section not in sections:
                    raise ConfigError(f"unknown config section in key {key!r}")
                sections[section][name] = value
            else:
                # bare keys: a handful of conveniences
                alias = _ALIASES.get(key)
                if alias is None:
                    raise ConfigError(f"unknown config key {key!r}")
                if alias[0] is None:
                    top[alias[1]] = value
                else:
                    sections[alias[0]][alias[1]] = value
        try:
            return cls(
                model=ModelConfig(**sections["model"]),
                train=TrainConfig(**sections["train"]),
                beam=BeamConfig(**sections["beam"]),
                **top,
            )
        except TypeError as e:
            raise ConfigError(str(e)) from e


_ALIASES = {
    "refiner": ("model", "refiner"),
    "hidden": ("model", "hidden"),
    "seed": ("train", "seed"),
    "split_seed": (None, "split_seed"),
    "lambda": ("beam", "lam"),
}


def load_config(path) -> AppConfig:
    """Read a flat ``key: value`` file (YAML mapping, dotted keys)."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ConfigError(f"config {path} must be a flat key-value mapping")
    return AppConfig.from_flat(data)


def dump_config(cfg: AppConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_flat(), sort_keys=False), encoding="utf-8")
