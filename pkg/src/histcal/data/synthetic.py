"""Synthetic covariate-shift and label-gap benchmark with a known ground truth.

Source inputs are Gaussian around ``source_mean``; target inputs are moved by
``target_shift`` along the function's main direction, so the target label
distribution sits higher than the source one. Labels whose noise-free value
falls in the gap interval are withheld from the labeled training pools
(source train and target labeled) but stay in the unlabeled pool.
"""

import logging
from dataclasses import dataclass, asdict
from enum import StrEnum, auto
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from histcal.data.sensors import FeatureMatrix, feature_csv_columns, load_feature_csv
from histcal.data.splits import SplitBundle
from histcal.utils.errors import ConfigError, DataError
from histcal.utils.seeds import derive_rng
from histcal.utils.serializers import config_from_dict, read_json, write_json
from histcal.utils.time_utils import format_timestamp, hourly_range

logger = logging.getLogger("Synthetic")

SIDECAR_NAME = "synthetic.json"
# give up on rejection sampling after this many draws per requested row
MAX_DRAWS_PER_ROW = 200
SPLIT_ORDER = ["source_train", "source_val", "source_test",
               "target_labeled", "target_unlabeled", "target_val", "target_test"]
GAPPED_SPLITS = ("source_train", "target_labeled")


class FunctionFamily(StrEnum):
    logistic = auto()
    quadratic = auto()


@dataclass(frozen=True)
class SyntheticConfig:
    input_dim: int = 8
    family: FunctionFamily = FunctionFamily.logistic
    source_mean: float = 0.0
    source_scale: float = 1.0
    target_shift: float = 1.5
    target_scale: float = 1.0
    support_lo: float = 0.0
    support_hi: float = 200.0
    gap_lo: Optional[float] = 110.0
    gap_hi: Optional[float] = 160.0
    n_source_train: int = 2000
    n_source_val: int = 400
    n_source_test: int = 400
    n_target_labeled: int = 48
    n_target_unlabeled: int = 1500
    n_target_val: int = 300
    n_target_test: int = 600
    noise: float = 2.0
    seed: int = 0
    start: str = "2024-01-01T00:00:00"

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", FunctionFamily(self.family))
        except ValueError:
            raise ConfigError(f"unknown function family '{self.family}', known {[f.value for f in FunctionFamily]}")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if not (self.source_scale > 0 and self.target_scale > 0):
            raise ConfigError("input scales must be positive")
        if not self.support_hi > self.support_lo:
            raise ConfigError("support_hi must exceed support_lo")
        if (self.gap_lo is None) != (self.gap_hi is None):
            raise ConfigError("gap_lo and gap_hi must be given together")
        if self.has_gap:
            if not self.support_lo <= self.gap_lo < self.gap_hi <= self.support_hi:
                raise ConfigError(
                    f"label gap [{self.gap_lo}, {self.gap_hi}] must be a non-empty interval inside "
                    f"[{self.support_lo}, {self.support_hi}]")
        for name, count in self.counts().items():
            if count < 1:
                raise ConfigError(f"sample count for {name} must be positive, got {count}")
        if self.noise < 0:
            raise ConfigError(f"noise must be non-negative, got {self.noise}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @property
    def has_gap(self) -> bool:
        return self.gap_lo is not None

    def counts(self) -> dict[str, int]:
        return {name: getattr(self, f"n_{name}") for name in SPLIT_ORDER}


@dataclass(frozen=True)
class SyntheticOracle:
    """Noise-free ground truth. ``direction`` is the unit vector the target shift follows."""
    family: FunctionFamily
    direction: np.ndarray
    secondary: np.ndarray
    support_lo: float
    support_hi: float

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        t = X @ self.direction
        s = X @ self.secondary
        if self.family == FunctionFamily.logistic:
            unit = 1.0 / (1.0 + np.exp(-(1.5 * t + 0.5 * np.tanh(s))))
        else:
            unit = np.clip(0.35 + 0.2 * t + 0.06 * t * t + 0.05 * np.sin(s), 0.0, 1.0)
        return self.support_lo + (self.support_hi - self.support_lo) * unit

    def to_dict(self) -> dict:
        return {"family": self.family.value, "direction": self.direction.tolist(),
                "secondary": self.secondary.tolist(),
                "support_lo": self.support_lo, "support_hi": self.support_hi}

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticOracle":
        return cls(family=FunctionFamily(data["family"]),
                   direction=np.asarray(data["direction"], dtype=np.float64),
                   secondary=np.asarray(data["secondary"], dtype=np.float64),
                   support_lo=float(data["support_lo"]), support_hi=float(data["support_hi"]))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _make_oracle(cfg: SyntheticConfig, rng: np.random.Generator) -> SyntheticOracle:
    direction = _unit(rng.standard_normal(cfg.input_dim))
    secondary = rng.standard_normal(cfg.input_dim)
    if cfg.input_dim > 1:
        secondary = _unit(secondary - (secondary @ direction) * direction)
    else:
        secondary = np.zeros(1)
    return SyntheticOracle(cfg.family, direction, secondary, cfg.support_lo, cfg.support_hi)


def _draw(cfg: SyntheticConfig, oracle: SyntheticOracle, rng: np.random.Generator,
          target: bool, count: int, gapped: bool) -> tuple[np.ndarray, np.ndarray]:
    if target:
        mean = cfg.source_mean + cfg.target_shift * oracle.direction
        scale = cfg.target_scale
    else:
        mean = np.full(cfg.input_dim, cfg.source_mean)
        scale = cfg.source_scale
    kept_x = []
    have = 0
    draws = 0
    while have < count:
        if draws > MAX_DRAWS_PER_ROW * count:
            raise ConfigError(
                f"label gap [{cfg.gap_lo}, {cfg.gap_hi}] leaves too few samples to draw {count} rows")
        block = max(count - have, 64)
        X = mean + scale * rng.standard_normal((block, cfg.input_dim))
        draws += block
        y_true = oracle(X)
        if gapped and cfg.has_gap:
            keep = (y_true < cfg.gap_lo) | (y_true > cfg.gap_hi)
            X = X[keep]
        kept_x.append(X)
        have += X.shape[0]
    X = np.vstack(kept_x)[:count]
    y = oracle(X)
    if cfg.noise > 0:
        y = y + cfg.noise * rng.standard_normal(count)
    y = np.clip(y, cfg.support_lo, cfg.support_hi)
    return X, y


def synth_domains(cfg: SyntheticConfig) -> tuple[SplitBundle, SyntheticOracle]:
    """Deterministic in cfg.seed: all draws come from one stream in a fixed order."""
    rng = derive_rng(cfg.seed, "synthetic")
    oracle = _make_oracle(cfg, rng)
    names = [f"f{i + 1}" for i in range(cfg.input_dim)]
    parts = {}
    offsets = {"source": 0, "target": 0}
    for name, count in cfg.counts().items():
        domain = name.split("_")[0]
        X, y = _draw(cfg, oracle, rng, target=(domain == "target"), count=count,
                     gapped=name in GAPPED_SPLITS)
        stamps = hourly_range(cfg.start, offsets[domain] + count)[offsets[domain]:]
        offsets[domain] += count
        parts[name] = FeatureMatrix(X=X, feature_names=names, timestamps=stamps,
                                    y=None if name == "target_unlabeled" else y)
    bundle = SplitBundle(**parts)
    logger.info("synthesized %s family, d=%d, sizes %s", cfg.family, cfg.input_dim, bundle.sizes())
    return bundle, oracle


def _feature_frame(fm: FeatureMatrix) -> pd.DataFrame:
    columns = feature_csv_columns(fm.n_features)
    df = pd.DataFrame(fm.X, columns=columns[1:-1])
    df.insert(0, "timestamp", [format_timestamp(t) for t in fm.timestamps])
    df[columns[-1]] = fm.y if fm.y is not None else np.nan
    return df


def export_synthetic(bundle: SplitBundle, oracle: SyntheticOracle, cfg: SyntheticConfig,
                     out_dir: Path) -> list[Path]:
    """One feature CSV per split plus the sidecar JSON holding config, seed and oracle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fm in bundle.parts().items():
        path = out_dir / f"{name}.csv"
        # 17 significant digits so the oracle can be re-evaluated on the read-back rows
        _feature_frame(fm).to_csv(path, index=False, float_format="%.17g", na_rep="")
        written.append(path)
    sidecar = {"config": asdict(cfg), "seed": cfg.seed, "counts": bundle.sizes(),
               "oracle": oracle.to_dict()}
    written.append(write_json(out_dir / SIDECAR_NAME, sidecar))
    logger.info("wrote synthetic dataset to %s", out_dir)
    return written


def load_synthetic_sidecar(out_dir: Path) -> tuple[SyntheticConfig, SyntheticOracle]:
    path = Path(out_dir) / SIDECAR_NAME
    if not path.exists():
        raise DataError(f"no synthetic sidecar at {path}")
    data = read_json(path)
    return config_from_dict(SyntheticConfig, data["config"]), SyntheticOracle.from_dict(data["oracle"])


def load_synthetic_bundle(out_dir: Path) -> SplitBundle:
    """Read back the split CSVs written by export_synthetic."""
    out_dir = Path(out_dir)
    parts = {name: load_feature_csv(out_dir / f"{name}.csv") for name in SPLIT_ORDER}
    return SplitBundle(**parts)
