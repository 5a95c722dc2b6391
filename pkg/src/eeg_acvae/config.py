"""Flat JSON experiment configuration.

Keys (all optional; defaults follow the published protocol):

=====================  =======================================================
corpus                 PhysioNet root holding ``Sxxx/SxxxRyy.edf``
cache                  epoch cache directory written by ``prepare``
output_dir             parent directory for run directories
split_seed             seed for the held-out draw and train/validation split
expected_subjects      kept-subject count the split requires (103)
heldout_count          subjects held out for transfer evaluation (13)
normalizer_mode        ``per_channel`` or ``global`` mean removal
workers                parallel EDF readers during ``prepare``
eval_samples           0 evaluates on the posterior mean, k>0 averages k draws
smoke_subjects         pool subjects kept by ``--smoke``
smoke_stage1_epochs    stage-1 (and CNN) epochs under ``--smoke``
smoke_stage2_epochs    stage-2 epochs under ``--smoke``
pool_limit             train on the first N pool subjects only (0 = all)
<model keys>           every field of :class:`eeg_acvae.models.ModelConfig`
=====================  =======================================================
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .models import ModelConfig


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = "data/eegmmidb"
    cache: str = "data/cache"
    output_dir: str = "runs"
    split_seed: int = 0
    expected_subjects: int = 103
    heldout_count: int = 13
    normalizer_mode: str = "per_channel"
    workers: int = 1
    eval_samples: int = 0
    smoke_subjects: int = 10
    smoke_stage1_epochs: int = 10
    smoke_stage2_epochs: int = 5
    pool_limit: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.normalizer_mode not in ("per_channel", "global"):
            raise ConfigError(f"normalizer_mode must be per_channel or global, got {self.normalizer_mode!r}")

    def to_flat(self) -> dict:
        doc = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        doc.update(asdict(self.model))
        return doc

    @classmethod
    def from_flat(cls, doc: dict) -> "ExperimentConfig":
        own = {f.name: f for f in fields(cls) if f.name != "model"}
        model_keys = {f.name: f for f in fields(ModelConfig)}
        unknown = set(doc) - set(own) - set(model_keys)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        defaults = cls().to_flat()
        typed = {k: _coerce(k, v, defaults[k]) for k, v in doc.items()}
        model = ModelConfig(**{k: v for k, v in typed.items() if k in model_keys})
        return cls(model=model, **{k: v for k, v in typed.items() if k in own})

    def override(self, assignments: list[str]) -> "ExperimentConfig":
        doc = self.to_flat()
        for item in assignments:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            if key not in doc:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                doc[key] = json.loads(raw)
            except json.JSONDecodeError:
                doc[key] = raw
        return ExperimentConfig.from_flat(doc)

    def smoke(self) -> "ExperimentConfig":
        model = self.model.with_(stage1_epochs=self.smoke_stage1_epochs,
                                 stage2_epochs=self.smoke_stage2_epochs)
        return ExperimentConfig.from_flat({**self.to_flat(), **asdict(model),
                                           "pool_limit": self.smoke_subjects})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_flat(), indent=2, sort_keys=True) + "\n")


def _coerce(key, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{key} must be a boolean, got {value!r}")
    if isinstance(default, int):
        try:
            ok = not isinstance(value, bool) and float(value).is_integer()
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(float(value))
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
    return str(value)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a flat JSON object")
    return ExperimentConfig.from_flat(doc)
