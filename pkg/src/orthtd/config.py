"""Experiment configuration: one JSON document plus a seed fully determines
a run.

Unknown keys are rejected anywhere in the document. The ``profile`` selects
dimension presets ("paper": 240-wide fusion, 4 layers, 8 heads; "desk":
32-wide fusion, 2 layers, 4 heads and a slimmer text encoder) which
individual blocks may override. Seed precedence: CLI --seed, then the config
file, then the ORTHTD_SEED environment variable, then 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .decomposition import DecompConfig
from .encoders import TabularEncoderConfig, TextEncoderConfig
from .errors import ConfigError
from .fusion import FusionConfig
from .losses import LossConfig
from .strategies import ModelConfig, StrategyConfig
from .synthetic import SyntheticSpec
from .training import TrainConfig
from .vitals import VitalFeatureSpec

PROFILES = ("paper", "desk")

_PROFILE_DEFAULTS = {
    "paper": {
        "fusion": {"d_hidden": 240, "layers": 4, "heads": 8},
        "text": {"embed_dim": 64},
    },
    "desk": {
        "fusion": {"d_hidden": 32, "layers": 2, "heads": 4},
        "text": {"embed_dim": 32},
    },
}

DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.7
    stratify_task: Optional[str] = None  # default: first task
    seed: Optional[int] = None  # default: experiment seed

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def to_dict(self) -> dict:
        return {
            "train_fraction": self.train_fraction,
            "stratify_task": self.stratify_task,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class DataConfig:
    synthetic: Optional[SyntheticSpec] = None
    cohort_path: Optional[str] = None
    schema_path: Optional[str] = None

    def __post_init__(self):
        has_files = self.cohort_path is not None or self.schema_path is not None
        if self.synthetic is not None and has_files:
            raise ConfigError("data block must be either synthetic or file-based, not both")
        if self.synthetic is None:
            if self.cohort_path is None or self.schema_path is None:
                raise ConfigError("file-based data needs both cohort_path and schema_path")

    def to_dict(self) -> dict:
        if self.synthetic is not None:
            return {"synthetic": self.synthetic.to_dict()}
        return {"cohort_path": self.cohort_path, "schema_path": self.schema_path}


@dataclass(frozen=True)
class ExperimentConfig:
    profile: str
    seed: int
    out_dir: str
    run_id: Optional[str]
    data: DataConfig
    split: SplitConfig
    vitals: VitalFeatureSpec
    fusion: FusionConfig
    decomp: DecompConfig
    tabular: TabularEncoderConfig
    text: TextEncoderConfig
    loss: LossConfig
    train: TrainConfig
    strategy: StrategyConfig
    seeds: tuple[int, ...]

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            strategy=self.strategy,
            fusion=self.fusion,
            decomp=self.decomp,
            tabular=self.tabular,
            text=self.text,
        )

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "run_id": self.run_id,
            "data": self.data.to_dict(),
            "split": self.split.to_dict(),
            "vitals": self.vitals.to_dict(),
            "fusion": self.fusion.to_dict(),
            "decomp": self.decomp.to_dict(),
            "tabular": self.tabular.to_dict(),
            "text": self.text.to_dict(),
            "loss": self.loss.to_dict(),
            "train": self.train.to_dict(),
            "strategy": self.strategy.to_dict(),
            "seeds": list(self.seeds),
        }


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r} in {where!r}")


def _block(doc: dict, name: str) -> dict:
    block = doc.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"config block {name!r} must be an object")
    return dict(block)


def _dataclass_block(doc: dict, name: str, cls, profile_overrides: dict, banned: set[str] = frozenset()):
    fields = set(cls.__dataclass_fields__) - set(banned)
    merged = dict(profile_overrides.get(name, {}))
    user = _block(doc, name)
    _check_keys(user, fields, name)
    merged.update(user)
    try:
        return cls(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {name!r} block: {e}") from e


def parse_experiment_config(doc: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON document plus CLI overrides
    (profile, seed, strategy, out_dir, seeds)."""
    overrides = overrides or {}
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a JSON object")
    top_keys = {
        "profile", "seed", "out_dir", "run_id", "data", "split", "vitals",
        "fusion", "decomp", "tabular", "text", "loss", "train", "strategy", "seeds",
    }
    _check_keys(doc, top_keys, "top level")

    profile = overrides.get("profile") or doc.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {PROFILES}")
    prof = _PROFILE_DEFAULTS[profile]

    env_seed = os.environ.get("ORTHTD_SEED")
    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])
    elif doc.get("seed") is not None:
        seed = int(doc["seed"])
    elif env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"ORTHTD_SEED must be an integer, got {env_seed!r}") from None
    else:
        seed = 1

    data_doc = _block(doc, "data")
    _check_keys(data_doc, {"synthetic", "cohort_path", "schema_path"}, "data")
    if "synthetic" in data_doc:
        syn_doc = dict(data_doc["synthetic"])
        syn_doc.setdefault("seed", seed)
        try:
            synthetic = SyntheticSpec.from_dict(syn_doc)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid data.synthetic block: {e}") from e
        data = DataConfig(synthetic=synthetic)
    elif data_doc:
        data = DataConfig(
            cohort_path=data_doc.get("cohort_path"), schema_path=data_doc.get("schema_path")
        )
    else:
        data = DataConfig(synthetic=SyntheticSpec(seed=seed))

    split = _dataclass_block(doc, "split", SplitConfig, {})
    fusion = _dataclass_block(doc, "fusion", FusionConfig, prof)
    decomp = _dataclass_block(doc, "decomp", DecompConfig, {})
    tabular = _dataclass_block(doc, "tabular", TabularEncoderConfig, {})

    text_prof = dict(prof.get("text", {}))
    if data.synthetic is not None:
        text_prof.setdefault("vocab_size", data.synthetic.vocab_size)
    text_doc = _block(doc, "text")
    _check_keys(text_doc, set(TextEncoderConfig.__dataclass_fields__), "text")
    text_prof.update(text_doc)
    try:
        text = TextEncoderConfig(**text_prof)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid 'text' block: {e}") from e

    loss = _dataclass_block(doc, "loss", LossConfig, {})
    train = _dataclass_block(doc, "train", TrainConfig, {}, banned={"seed"})
    train = TrainConfig(**{**train.to_dict(), "seed": seed})

    strategy_doc = _block(doc, "strategy")
    if overrides.get("strategy") is not None:
        strategy_doc["name"] = overrides["strategy"]
    _check_keys(strategy_doc, set(StrategyConfig.__dataclass_fields__), "strategy")
    try:
        strategy = StrategyConfig(**strategy_doc)
    except ValueError as e:
        raise ConfigError(f"invalid 'strategy' block: {e}") from e

    vitals_doc = _block(doc, "vitals")
    _check_keys(vitals_doc, {"statistics", "thresholds", "default_thresholds"}, "vitals")
    try:
        vitals = VitalFeatureSpec.from_dict(vitals_doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid 'vitals' block: {e}") from e

    seeds_doc = overrides.get("seeds") or doc.get("seeds", list(DEFAULT_SEEDS))
    if not isinstance(seeds_doc, (list, tuple)) or not seeds_doc:
        raise ConfigError("'seeds' must be a non-empty list of integers")
    seeds = tuple(int(s) for s in seeds_doc)

    out_dir = overrides.get("out_dir") or doc.get("out_dir")
    if not out_dir:
        raise ConfigError("config needs an 'out_dir' (or pass --out)")

    return ExperimentConfig(
        profile=profile,
        seed=seed,
        out_dir=str(out_dir),
        run_id=doc.get("run_id"),
        data=data,
        split=split,
        vitals=vitals,
        fusion=fusion,
        decomp=decomp,
        tabular=tabular,
        text=text,
        loss=loss,
        train=train,
        strategy=strategy,
        seeds=seeds,
    )


def load_experiment_config(path: str | Path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
    return parse_experiment_config(doc, overrides)
