"""Chronological splitting. Spans are contiguous in time and never shuffled."""

import logging
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from histcal.data.scaling import StandardScaler, apply_scaler, fit_scaler
from histcal.data.sensors import FeatureMatrix
from histcal.utils.errors import ConfigError, DataError

logger = logging.getLogger("Splitter")

DAY = 24.0


def _dh(days: int, hours: int = 0) -> float:
    return days * DAY + hours


# (unlabeled train, validation, test) hours per target location
LOCATION_DURATIONS = {
    1: (_dh(38), _dh(7), _dh(25)),
    2: (_dh(38), _dh(7), _dh(25)),
    3: (_dh(38), _dh(7), _dh(25)),
    4: (_dh(38), _dh(7), _dh(16, 15)),
    5: (_dh(38), _dh(7), _dh(25)),
    6: (_dh(25), _dh(7), _dh(10, 8)),
    7: (_dh(16, 15), _dh(5), _dh(10)),
    8: (_dh(38), _dh(7), _dh(25)),
    9: (_dh(22), _dh(4, 15), _dh(11, 2)),
    10: (_dh(38), _dh(7), _dh(7, 15)),
}


@dataclass(frozen=True)
class SplitDurations:
    """Span lengths in hours. Target spans run labeled, unlabeled, validation, test."""
    source_train: float = _dh(52)
    source_val: float = _dh(14)
    source_test: float = _dh(14)
    target_labeled: float = _dh(2)
    target_unlabeled: float = _dh(38)
    target_val: float = _dh(7)
    target_test: float = _dh(25)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value >= 0:
                raise ConfigError(f"duration {f.name} must be non-negative, got {value}")
        if self.source_train <= 0:
            raise ConfigError("source_train duration must be positive")

    @classmethod
    def for_location(cls, location: int, labeled_hours: float = _dh(2), **source) -> "SplitDurations":
        if location not in LOCATION_DURATIONS:
            raise ConfigError(f"no preset for target location {location}; known {sorted(LOCATION_DURATIONS)}")
        unlabeled, val, test = LOCATION_DURATIONS[location]
        return cls(target_labeled=labeled_hours, target_unlabeled=unlabeled,
                   target_val=val, target_test=test, **source)

    def source_spans(self) -> list[tuple[str, float]]:
        return [("source_train", self.source_train), ("source_val", self.source_val),
                ("source_test", self.source_test)]

    def target_spans(self) -> list[tuple[str, float]]:
        return [("target_labeled", self.target_labeled), ("target_unlabeled", self.target_unlabeled),
                ("target_val", self.target_val), ("target_test", self.target_test)]


@dataclass
class SplitBundle:
    source_train: FeatureMatrix
    source_val: FeatureMatrix
    source_test: FeatureMatrix
    target_labeled: FeatureMatrix
    target_unlabeled: FeatureMatrix
    target_val: FeatureMatrix
    target_test: FeatureMatrix

    def __post_init__(self):
        widths = {len(getattr(self, f.name).feature_names) for f in fields(self)}
        if len(widths) != 1:
            raise DataError(f"bundle splits disagree on feature count: {sorted(widths)}")
        if self.target_unlabeled.y is not None:
            self.target_unlabeled = self.target_unlabeled.without_labels()

    @property
    def n_features(self) -> int:
        return self.source_train.n_features

    def parts(self) -> dict[str, FeatureMatrix]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def sizes(self) -> dict[str, int]:
        return {name: len(fm) for name, fm in self.parts().items()}

    def map_features(self, func) -> "SplitBundle":
        return SplitBundle(**{name: func(fm) for name, fm in self.parts().items()})


def chronological_split(fm: FeatureMatrix, spans: Sequence[tuple[str, float]]) -> dict[str, FeatureMatrix]:
    """Cut consecutive spans of the given lengths (hours) from the first timestamp on.

    A row belongs to the span whose half-open [start, end) window holds its
    timestamp. Raises DataError, without returning anything, when the frame does
    not cover the requested total.
    """
    if len(fm) == 0:
        raise DataError("cannot split an empty frame")
    ts = fm.timestamps
    first = ts[0]
    covered = (ts[-1] - first).astype("timedelta64[s]").astype(np.int64) + 3600
    total = int(round(sum(h for _, h in spans) * 3600))
    if total > covered:
        raise DataError(
            f"frame spans {covered / 3600:.0f} h but the splits need {total / 3600:.0f} h")
    offsets = (ts - first).astype("timedelta64[s]").astype(np.int64)
    res = {}
    start = 0
    for name, length in spans:
        end = start + int(round(length * 3600))
        rows = (offsets >= start) & (offsets < end)
        res[name] = fm.take(rows)
        start = end
    return res


def _labeled_only(name: str, fm: FeatureMatrix) -> FeatureMatrix:
    if fm.y is None:
        raise DataError(f"{name} needs reference labels")
    kept = fm.labeled_rows()
    if len(kept) < len(fm):
        logger.info("%s: dropped %d row(s) without reference value", name, len(fm) - len(kept))
    return kept


def split_bundle(source: FeatureMatrix, target: FeatureMatrix, durations: SplitDurations) -> SplitBundle:
    parts = chronological_split(source, durations.source_spans())
    parts.update(chronological_split(target, durations.target_spans()))
    for name in list(parts):
        if name == "target_unlabeled":
            parts[name] = parts[name].without_labels()
        else:
            parts[name] = _labeled_only(name, parts[name])
    bundle = SplitBundle(**parts)
    logger.info("split sizes %s", bundle.sizes())
    return bundle


def standardize_bundle(bundle: SplitBundle, scaler: Optional[StandardScaler] = None
                       ) -> tuple[SplitBundle, StandardScaler]:
    """Fit on source train plus all target training rows unless a scaler is given, apply everywhere."""
    if scaler is None:
        scaler = fit_scaler(bundle.source_train, bundle.target_labeled, bundle.target_unlabeled)
    return bundle.map_features(lambda fm: apply_scaler(scaler, fm)), scaler
