import logging
from dataclasses import dataclass

import numpy as np

from histcal.data.sensors import FeatureMatrix
from histcal.utils.errors import DataError, DimensionError

logger = logging.getLogger("SensorData")

STD_FLOOR = 1e-8


@dataclass
class StandardScaler:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64).reshape(-1), STD_FLOOR)
        if self.mean.shape != self.std.shape:
            raise DimensionError("scaler mean and std differ in length")

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionError(f"scaler fitted on {self.n_features} features, got shape {X.shape}")
        return (X - self.mean) / self.std


def fit_scaler(*parts: FeatureMatrix) -> StandardScaler:
    """Per-feature mean and population std over the stacked rows of all parts."""
    if not parts:
        raise DataError("fit_scaler needs at least one feature matrix")
    X = np.vstack([p.X for p in parts])
    if X.shape[0] < 2:
        raise DataError(f"fit_scaler needs at least 2 rows, got {X.shape[0]}")
    std = X.std(axis=0)
    n_const = int(np.count_nonzero(std < STD_FLOOR))
    if n_const:
        logger.info("%d constant feature column(s); std floored at %g", n_const, STD_FLOOR)
    return StandardScaler(mean=X.mean(axis=0), std=std)


def apply_scaler(scaler: StandardScaler, fm: FeatureMatrix) -> FeatureMatrix:
    return fm.with_features(scaler.transform(fm.X))
