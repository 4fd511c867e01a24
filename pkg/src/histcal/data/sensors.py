"""Co-located sensor data: CSV ingestion, cleaning and feature derivation."""

import logging
from dataclasses import dataclass, field, replace
from enum import StrEnum, auto
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from histcal.utils.errors import ConfigError, DataError, DimensionError
from histcal.utils.time_utils import parse_timestamp

logger = logging.getLogger("SensorData")

RAW_SIGNALS = ["pm25_lcs", "pm10_lcs", "temperature", "humidity"]
SENSOR_COLUMNS = ["timestamp"] + RAW_SIGNALS + ["ref_pm25"]
PM_COLUMNS = ["pm25_lcs", "pm10_lcs", "ref_pm25"]
LABEL_COLUMN = "ref_pm25"


@dataclass
class SensorFrame:
    """Hourly sensor rows; ``table`` holds SENSOR_COLUMNS, timestamp as datetime64[s] UTC."""
    table: pd.DataFrame
    drop_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in SENSOR_COLUMNS if c not in self.table.columns]
        if missing:
            raise DataError(f"sensor frame lacks columns {missing}")
        ts = self.table["timestamp"].to_numpy(dtype="datetime64[s]")
        if ts.size > 1 and not np.all(ts[1:] > ts[:-1]):
            raise DataError("sensor frame timestamps must be strictly increasing")

    def __len__(self):
        return len(self.table)

    @property
    def timestamps(self) -> np.ndarray:
        return self.table["timestamp"].to_numpy(dtype="datetime64[s]")


@dataclass
class FeatureMatrix:
    X: np.ndarray
    feature_names: list[str]
    timestamps: np.ndarray
    y: Optional[np.ndarray] = None
    uncalibrated: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        m, d = self.X.shape
        if len(self.feature_names) != d:
            raise DimensionError(f"{len(self.feature_names)} feature names for {d} columns")
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        if self.timestamps.shape[0] != m:
            raise DimensionError(f"{self.timestamps.shape[0]} timestamps for {m} rows")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
            if self.y.shape[0] != m:
                raise DimensionError(f"{self.y.shape[0]} labels for {m} rows")
        if self.uncalibrated is not None:
            self.uncalibrated = np.asarray(self.uncalibrated, dtype=np.float64).reshape(-1)
            if self.uncalibrated.shape[0] != m:
                raise DimensionError(f"{self.uncalibrated.shape[0]} uncalibrated readings for {m} rows")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(
            X=self.X[rows],
            feature_names=list(self.feature_names),
            timestamps=self.timestamps[rows],
            y=None if self.y is None else self.y[rows],
            uncalibrated=None if self.uncalibrated is None else self.uncalibrated[rows],
        )

    def without_labels(self) -> "FeatureMatrix":
        return replace(self, y=None)

    def with_features(self, X: np.ndarray) -> "FeatureMatrix":
        return replace(self, X=X)

    def labeled_rows(self) -> "FeatureMatrix":
        """Rows with a finite label; the rest are dropped."""
        if self.y is None:
            raise DataError("feature matrix carries no labels")
        return self.take(np.isfinite(self.y))


def _exact_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_numeric(col: pd.Series) -> tuple[pd.Series, pd.Series]:
    """Returns (values with NaN for blanks, mask of malformed non-blank cells).

    Cells go through float(), which rounds correctly, so values written with
    17 significant digits read back bit for bit.
    """
    text = col.astype(str).str.strip()
    blank = text == ""
    values = pd.Series(np.nan, index=text.index, dtype=np.float64)
    if (~blank).any():
        values[~blank] = text[~blank].map(_exact_float).astype(np.float64)
    malformed = values.isna() & ~blank
    return values, malformed


def _parse_timestamps(col: pd.Series) -> tuple[np.ndarray, np.ndarray]:
    stamps = np.empty(len(col), dtype="datetime64[s]")
    bad = np.zeros(len(col), dtype=bool)
    for i, value in enumerate(col.astype(str)):
        try:
            stamps[i] = parse_timestamp(value)
        except ValueError:
            bad[i] = True
            stamps[i] = np.datetime64("NaT")
    return stamps, bad


def _drop_unordered(stamps: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Rows whose timestamp does not advance past the last kept row are rejected."""
    keep = keep.copy()
    last = None
    for i in range(stamps.shape[0]):
        if not keep[i]:
            continue
        if last is not None and stamps[i] <= last:
            keep[i] = False
            continue
        last = stamps[i]
    return keep


def _read_raw(path: Path, expected: Sequence[str] = None) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"CSV file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"CSV file {path} has no header")
    columns = [c.strip() for c in raw.columns]
    raw.columns = columns
    if expected is not None and columns != list(expected):
        raise DataError(f"CSV header mismatch in {path}: expected {list(expected)}, got {columns}")
    return raw


def load_csv(path: Path) -> SensorFrame:
    """Read a sensor CSV; malformed and out-of-order rows are counted and skipped."""
    raw = _read_raw(path, SENSOR_COLUMNS)
    stamps, bad = _parse_timestamps(raw["timestamp"])
    table = {"timestamp": stamps}
    for name in SENSOR_COLUMNS[1:]:
        values, malformed = _parse_numeric(raw[name])
        table[name] = values.to_numpy()
        bad |= malformed.to_numpy()
    keep = _drop_unordered(stamps, ~bad)
    n_skipped = int((~keep).sum())
    if n_skipped:
        logger.warning("%s: skipped %d malformed or out-of-order row(s)", path, n_skipped)
    df = pd.DataFrame(table).loc[keep].reset_index(drop=True)
    return SensorFrame(table=df, drop_counts={"malformed": n_skipped})


def clean(frame: SensorFrame, clip_hi: float = 1000.0) -> SensorFrame:
    """Drop rows missing a raw signal and rows whose PM readings leave [0, clip_hi].

    A missing reference value is not a reason to drop; such rows stay unlabeled.
    """
    if not clip_hi > 0:
        raise ConfigError(f"clip_hi must be positive, got {clip_hi}")
    df = frame.table
    missing = df[RAW_SIGNALS].isna().any(axis=1)
    out_of_range = pd.Series(False, index=df.index)
    for name in PM_COLUMNS:
        col = df[name]
        out_of_range |= col.notna() & ((col < 0) | (col > clip_hi))
    out_of_range &= ~missing
    keep = ~(missing | out_of_range)
    counts = dict(frame.drop_counts)
    counts["missing"] = counts.get("missing", 0) + int(missing.sum())
    counts["out_of_range"] = counts.get("out_of_range", 0) + int(out_of_range.sum())
    if not keep.all():
        logger.info("clean dropped %d missing and %d out-of-range row(s)",
                    int(missing.sum()), int(out_of_range.sum()))
    return SensorFrame(table=df.loc[keep].reset_index(drop=True), drop_counts=counts)


class RecipeKind(StrEnum):
    default = auto()
    passthrough = auto()


@dataclass(frozen=True)
class FeatureRecipe:
    """Feature derivation recipe.

    ``default`` emits the 4 raw signals, rolling means of each over ``windows``
    hours, pm x humidity/temperature products, the pm25/pm10 ratio and
    hour-of-day sine/cosine: 27 columns with the default windows.
    ``passthrough`` takes precomputed feature files unchanged; ``uncalibrated_column``
    then names the column holding the raw PM2.5 reading, if any.
    """
    kind: RecipeKind = RecipeKind.default
    windows: tuple[int, ...] = (3, 6, 12, 24)
    ratio_eps: float = 1e-6
    uncalibrated_column: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RecipeKind(self.kind))
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        if any(w < 1 for w in self.windows):
            raise ConfigError(f"rolling windows must be >= 1, got {self.windows}")
        if not self.ratio_eps > 0:
            raise ConfigError("ratio_eps must be positive")

    def feature_names(self) -> list[str]:
        names = list(RAW_SIGNALS)
        for w in self.windows:
            names += [f"{s}_mean{w}" for s in RAW_SIGNALS]
        names += ["pm25_x_humidity", "pm25_x_temperature", "pm10_x_humidity", "pm10_x_temperature",
                  "pm25_pm10_ratio", "hour_sin", "hour_cos"]
        return names


def _default_features(frame: SensorFrame, recipe: FeatureRecipe) -> FeatureMatrix:
    df = frame.table
    cols = {s: df[s] for s in RAW_SIGNALS}
    for w in recipe.windows:
        for s in RAW_SIGNALS:
            cols[f"{s}_mean{w}"] = df[s].rolling(window=w, min_periods=w).mean()
    cols["pm25_x_humidity"] = df["pm25_lcs"] * df["humidity"]
    cols["pm25_x_temperature"] = df["pm25_lcs"] * df["temperature"]
    cols["pm10_x_humidity"] = df["pm10_lcs"] * df["humidity"]
    cols["pm10_x_temperature"] = df["pm10_lcs"] * df["temperature"]
    cols["pm25_pm10_ratio"] = df["pm25_lcs"] / (df["pm10_lcs"] + recipe.ratio_eps)
    ts = frame.timestamps
    hour = (ts.astype("datetime64[h]").astype(np.int64) % 24).astype(np.float64)
    cols["hour_sin"] = pd.Series(np.sin(2 * np.pi * hour / 24.0), index=df.index)
    cols["hour_cos"] = pd.Series(np.cos(2 * np.pi * hour / 24.0), index=df.index)
    names = recipe.feature_names()
    feats = pd.DataFrame({n: cols[n] for n in names})
    warm = feats.notna().all(axis=1).to_numpy()
    n_warmup = int((~warm).sum())
    if n_warmup:
        logger.info("dropped %d row(s) lacking history for windowed features", n_warmup)
    return FeatureMatrix(
        X=feats.to_numpy(dtype=np.float64)[warm],
        feature_names=names,
        timestamps=ts[warm],
        y=df[LABEL_COLUMN].to_numpy(dtype=np.float64)[warm],
        uncalibrated=df["pm25_lcs"].to_numpy(dtype=np.float64)[warm],
    )


def derive_features(source: Union[SensorFrame, FeatureMatrix], recipe: FeatureRecipe = None) -> FeatureMatrix:
    recipe = recipe or FeatureRecipe()
    if recipe.kind == RecipeKind.passthrough:
        if not isinstance(source, FeatureMatrix):
            raise ConfigError("passthrough recipe needs a precomputed feature file")
        return source.take(slice(None))
    if not isinstance(source, SensorFrame):
        raise ConfigError("default recipe needs a sensor frame")
    return _default_features(source, recipe)


def feature_csv_columns(n_features: int) -> list[str]:
    return ["timestamp"] + [f"f{i + 1}" for i in range(n_features)] + [LABEL_COLUMN]


def load_feature_csv(path: Path, recipe: FeatureRecipe = None) -> FeatureMatrix:
    """Read a precomputed feature file ``timestamp,f1..fN,ref_pm25``."""
    recipe = recipe or FeatureRecipe(kind=RecipeKind.passthrough)
    raw = _read_raw(path)
    n_features = len(raw.columns) - 2
    expected = feature_csv_columns(n_features)
    if n_features < 1 or list(raw.columns) != expected:
        raise DataError(f"feature CSV header mismatch in {path}: expected timestamp,f1..fN,{LABEL_COLUMN}")
    stamps, bad = _parse_timestamps(raw["timestamp"])
    X = np.empty((len(raw), n_features), dtype=np.float64)
    for j, name in enumerate(expected[1:-1]):
        values, malformed = _parse_numeric(raw[name])
        X[:, j] = values.to_numpy()
        bad |= malformed.to_numpy() | values.isna().to_numpy()
    y, malformed = _parse_numeric(raw[LABEL_COLUMN])
    bad |= malformed.to_numpy()
    keep = _drop_unordered(stamps, ~bad)
    if not keep.all():
        logger.warning("%s: skipped %d malformed or out-of-order row(s)", path, int((~keep).sum()))
    names = expected[1:-1]
    uncal = None
    if recipe.uncalibrated_column is not None:
        if recipe.uncalibrated_column not in names:
            raise ConfigError(f"uncalibrated column '{recipe.uncalibrated_column}' not in {path}")
        uncal = X[keep, names.index(recipe.uncalibrated_column)]
    return FeatureMatrix(X=X[keep], feature_names=names, timestamps=stamps[keep],
                         y=y.to_numpy()[keep], uncalibrated=uncal)
