"""The JSON run document behind every CLI command.

See design_docs/run_config.md for the schema. Relative paths are resolved
against the directory holding the config file.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from histcal.data.sensors import FeatureRecipe
from histcal.data.splits import SplitDurations
from histcal.data.synthetic import SyntheticConfig
from histcal.train.config import ABLATION_MODES, TrainConfig, TrainMode
from histcal.utils.errors import ConfigError
from histcal.utils.serializers import config_from_dict

logger = logging.getLogger("HistcalCLI")


@dataclass(frozen=True)
class AblationConfig:
    seeds: Optional[list[int]] = None
    alpha_override: Optional[float] = None
    modes: list[TrainMode] = field(default_factory=lambda: list(ABLATION_MODES))

    def __post_init__(self):
        if self.seeds is not None:
            if not self.seeds or any(int(s) != s or s < 0 for s in self.seeds):
                raise ConfigError(f"ablation seeds must be a non-empty list of non-negative ints, got {self.seeds}")
        if self.alpha_override is not None and not self.alpha_override >= 0:
            raise ConfigError("ablation alpha_override must be >= 0")
        try:
            object.__setattr__(self, "modes", [TrainMode(m) for m in self.modes])
        except ValueError as e:
            raise ConfigError(f"ablation modes: {e}")
        if not self.modes:
            raise ConfigError("ablation needs at least one mode")


@dataclass(frozen=True)
class TargetSpec:
    name: str
    path: Path
    durations: SplitDurations


@dataclass(frozen=True)
class RunConfig:
    source_csv: Optional[str] = None
    target_csvs: list[str] = field(default_factory=list)
    target_locations: Optional[list[int]] = None
    recipe: dict = field(default_factory=dict)
    clip_hi: float = 1000.0
    durations: dict = field(default_factory=dict)
    synthetic: Optional[dict] = None
    train: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)
    output_dir: str = "runs/histcal"
    seed: Optional[int] = None
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def __post_init__(self):
        real = self.source_csv is not None or bool(self.target_csvs)
        if real == (self.synthetic is not None):
            raise ConfigError("run config needs exactly one of source_csv/target_csvs or synthetic")
        if real:
            if self.source_csv is None or not self.target_csvs:
                raise ConfigError("real-data runs need source_csv and at least one entry in target_csvs")
            if self.target_locations is not None and len(self.target_locations) != len(self.target_csvs):
                raise ConfigError("target_locations must align with target_csvs")
        if self.seed is not None and (int(self.seed) != self.seed or self.seed < 0):
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")
        if not self.clip_hi > 0:
            raise ConfigError("clip_hi must be positive")
        # surface nested config errors at load time rather than mid-run
        self.train_config()
        self.feature_recipe()
        self.ablation_config()
        if self.synthetic is not None:
            self.synthetic_config()
        else:
            self.targets()

    @classmethod
    def load(cls, path: Path, seed: Optional[int] = None, output_dir: Optional[Path] = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        if isinstance(data, dict):
            if "base_dir" in data:
                raise ConfigError("base_dir is not a config key")
            data = dict(data, base_dir=path.resolve().parent)
        cfg = config_from_dict(cls, data, str(path))
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(Path(output_dir).resolve()))
        cfg.check_inputs()
        return cfg

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def is_synthetic(self) -> bool:
        return self.synthetic is not None

    @property
    def out_path(self) -> Path:
        return self.resolve(self.output_dir)

    def check_inputs(self):
        """Every input file named by the config must exist."""
        if self.is_synthetic:
            return
        for p in [self.source_csv, *self.target_csvs]:
            if not self.resolve(p).exists():
                raise ConfigError(f"input CSV not found: {self.resolve(p)}")

    def synthetic_config(self, seed: Optional[int] = None) -> SyntheticConfig:
        if self.synthetic is None:
            raise ConfigError("run config has no synthetic section")
        values: dict[str, Any] = dict(self.synthetic)
        seed = seed if seed is not None else self.seed
        if seed is not None:
            values["seed"] = seed
        return config_from_dict(SyntheticConfig, values, "synthetic")

    def train_config(self, seed: Optional[int] = None, **overrides) -> TrainConfig:
        values: dict[str, Any] = dict(self.train)
        seed = seed if seed is not None else self.seed
        if seed is not None:
            values["seed"] = seed
        if self.synthetic is not None:
            # the synthetic label range doubles as histogram support unless set explicitly
            syn = self.synthetic
            values.setdefault("support_lo", syn.get("support_lo", SyntheticConfig.support_lo))
            values.setdefault("support_hi", syn.get("support_hi", SyntheticConfig.support_hi))
        values.update(overrides)
        return config_from_dict(TrainConfig, values, "train")

    def feature_recipe(self) -> FeatureRecipe:
        return config_from_dict(FeatureRecipe, dict(self.recipe), "recipe")

    def ablation_config(self) -> AblationConfig:
        return config_from_dict(AblationConfig, dict(self.ablation), "ablation")

    def ablation_seeds(self) -> list[int]:
        seeds = self.ablation_config().seeds
        if seeds:
            return [int(s) for s in seeds]
        return [self.train_config().seed]

    def targets(self) -> list[TargetSpec]:
        res = []
        durations = dict(self.durations)
        for i, csv in enumerate(self.target_csvs):
            path = self.resolve(csv)
            if self.target_locations is not None:
                labeled = durations.get("target_labeled", SplitDurations.target_labeled)
                source = {k: v for k, v in durations.items() if k.startswith("source_")}
                extra = sorted(set(durations) - set(source) - {"target_labeled"})
                if extra:
                    raise ConfigError(f"durations {extra} conflict with target_locations presets")
                spans = SplitDurations.for_location(self.target_locations[i], labeled, **source)
            else:
                spans = config_from_dict(SplitDurations, durations, "durations")
            res.append(TargetSpec(name=path.stem, path=path, durations=spans))
        names = [t.name for t in res]
        if len(set(names)) != len(names):
            raise ConfigError(f"target CSV file names must be distinct, got {names}")
        return res
