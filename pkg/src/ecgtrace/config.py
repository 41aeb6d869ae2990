"""Run configuration loaded from a single JSON document.

Every training hyperparameter has a default, so the smallest valid config is
``{"dataset_root": "path/to/corpus"}``. Unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .augment import DEFAULT_TARGET
from .dataset import LabelScheme
from .errors import PipelineError
from .model.training import TrainConfig


class ConfigError(PipelineError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    target: int = DEFAULT_TARGET
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExplainConfig:
    samples: int = 3
    layer: str | None = None
    alpha: float = 0.5


@dataclass(frozen=True)
class Seeds:
    split: int = 0
    augment: int = 0
    train: int = 0

    @classmethod
    def from_master(cls, seed: int) -> Seeds:
        return cls(split=seed, augment=seed, train=seed)


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str
    scheme: str = "three"
    image_size: int = 64
    channels: int = 1
    k: int = 5
    val_frac: float = 0.10
    zscore: str = "per_image"
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: Seeds = field(default_factory=Seeds)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    timing_repeats: int = 10
    figures: bool = True
    out_dir: str = "runs/latest"

    def __post_init__(self):
        LabelScheme.parse(self.scheme)
        if self.image_size < 8:
            raise ConfigError("image_size must be at least 8")
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if not 0.0 <= self.val_frac < 1.0:
            raise ConfigError("val_frac must lie in [0, 1)")
        if self.zscore not in ("per_image", "dataset"):
            raise ConfigError("zscore must be 'per_image' or 'dataset'")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = dict(d)
        _reject_unknown(cls, d, "config")
        nested = {"augment": AugmentConfig, "train": TrainConfig, "seeds": Seeds, "explain": ExplainConfig}
        for key, sub in nested.items():
            if key in d:
                if not isinstance(d[key], dict):
                    raise ConfigError(f"config.{key} must be an object")
                _reject_unknown(sub, d[key], f"config.{key}")
                try:
                    d[key] = sub(**d[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"config.{key}: {exc}") from exc
        if "dataset_root" not in d:
            raise ConfigError("config needs 'dataset_root'")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = cls.from_dict(doc)
        root = Path(cfg.dataset_root)
        if not root.is_absolute():
            cfg = cls.from_dict({**cfg.to_dict(), "dataset_root": str((path.parent / root).resolve())})
        return cfg


def _reject_unknown(cls, d: dict, where: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
