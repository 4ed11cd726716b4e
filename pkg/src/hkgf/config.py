"""Run configuration: one JSON file, overridable by command-line flags."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .evaluation import CvPlan
from .model import ModelSpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    backbone: str = "hkgcn"
    hidden: int = 64
    n_layers: int = 2
    heads: tuple = (4, 1)
    lam: float = 0.01
    c: float = 1e-3
    epsilon: float = 1e-5
    hnn_hidden: int = 32
    attention_bias: bool = False
    leaky_slope: float = 0.2

    def spec(self, n_rois):
        return ModelSpec(n_rois=n_rois, **{**asdict(self), "heads": tuple(self.heads)})


@dataclass
class TrainSection:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def config(self, seed):
        return TrainConfig(seed=seed, **asdict(self))


@dataclass
class CvSection:
    folds: int = 5
    repeats: int = 5
    seeds: list = None
    stratified: bool = True

    def plan(self, seed):
        seeds = self.seeds
        if seeds is None:
            seeds = [seed + r for r in range(self.repeats)]
        return CvPlan(self.folds, self.repeats, tuple(seeds), self.stratified)


SECTIONS = {"model": ModelSection, "train": TrainSection, "cv": CvSection}
TOP_LEVEL = {"manifest": None, "output": None, "seed": 0, "keep_fraction": 0.5}


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    cv: CvSection = field(default_factory=CvSection)
    manifest: str = None
    output: str = None
    seed: int = 0
    keep_fraction: float = 0.5

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - set(SECTIONS) - set(TOP_LEVEL)
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        kwargs = {k: d[k] for k in TOP_LEVEL if k in d}
        for name, section in SECTIONS.items():
            values = d.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in fields(section)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            kwargs[name] = section(**values)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
        return cls.from_dict(d)

    def override(self, values):
        """Apply ``{"section.key" | "key": value}``; ``None`` values are skipped."""
        for key, value in values.items():
            if value is None:
                continue
            if "." in key:
                section, name = key.split(".", 1)
                target = getattr(self, section, None)
                if section not in SECTIONS or not hasattr(target, name):
                    raise ConfigError(f"unknown configuration key {key!r}")
                setattr(target, name, value)
            elif key in TOP_LEVEL:
                setattr(self, key, value)
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        self.validate()
        return self

    def validate(self):
        """Build every derived object once so bad values fail before any compute."""
        try:
            self.model.spec(n_rois=8)
            self.train.config(self.seed)
            self.cv.plan(self.seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError(f"keep_fraction must lie in (0, 1], got {self.keep_fraction}")

    def to_dict(self):
        d = asdict(self)
        d["model"]["heads"] = list(self.model.heads)
        return d
