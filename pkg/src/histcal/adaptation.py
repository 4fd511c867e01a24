"""Semi-supervised weighting for the unlabeled target pool.

Unlabeled rows are scored by how close their encoded features lie to the
nearest labeled row (source or target); the entropy term is weighted by those
scores. Scores are computed from a frozen snapshot of encoder outputs and are
constants with respect to differentiation.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from histcal.model.histogram import entropy_rows, entropy_rows_grad
from histcal.model.nn_core import Model, encode, as_matrix
from histcal.utils.errors import ConfigError, DimensionError, DomainError, StateError

logger = logging.getLogger("Adaptation")

# rows of unlabeled features compared against the labeled pool per cdist call
DISTANCE_CHUNK_ROWS = 1024


@dataclass(frozen=True)
class WeightingConfig:
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class AlphaSchedule:
    """Entropy weight ramp: 0 up to t1, linear to alpha_inf at t2, flat after."""
    t1: int = 15
    t2: int = 80
    alpha_inf: float = 1.0

    def __post_init__(self):
        if not 0 <= self.t1 < self.t2:
            raise ConfigError(f"schedule needs 0 <= t1 < t2, got t1={self.t1} t2={self.t2}")
        if not self.alpha_inf > 0:
            raise ConfigError(f"alpha_inf must be positive, got {self.alpha_inf}")


def nearest_labeled_distances(Z_unlabeled, Z_labeled) -> np.ndarray:
    """Euclidean distance from each unlabeled row to its nearest labeled row."""
    Z_labeled = np.asarray(Z_labeled, dtype=np.float64)
    if Z_labeled.ndim != 2 or Z_labeled.shape[0] == 0:
        raise ConfigError("labeled feature set is empty")
    Z_unlabeled = np.asarray(Z_unlabeled, dtype=np.float64)
    if Z_unlabeled.ndim != 2 or Z_unlabeled.shape[1] != Z_labeled.shape[1]:
        raise DimensionError(
            f"unlabeled features {Z_unlabeled.shape} and labeled features {Z_labeled.shape} differ in width")
    d = np.empty(Z_unlabeled.shape[0], dtype=np.float64)
    for start in range(0, Z_unlabeled.shape[0], DISTANCE_CHUNK_ROWS):
        chunk = Z_unlabeled[start:start + DISTANCE_CHUNK_ROWS]
        d[start:start + chunk.shape[0]] = cdist(chunk, Z_labeled, metric="euclidean").min(axis=1)
    return d


def sample_scores(d, cfg: WeightingConfig) -> np.ndarray:
    """exp(-beta * d), floored at the smallest positive float so scores stay in (0, 1]."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(np.isnan(d)):
        raise DomainError("distances contain NaN")
    if np.any(d < 0):
        raise DomainError("distances must be non-negative")
    return np.maximum(np.exp(-cfg.beta * d), np.finfo(np.float64).tiny)


def _check_scores(Q: np.ndarray, S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64).reshape(-1)
    if Q.ndim != 2 or S.shape[0] != Q.shape[0]:
        raise DimensionError(f"{S.shape[0]} scores for {Q.shape[0]} rows")
    return S


def weighted_entropy_loss(Q_unlabeled, S) -> float:
    """Mean of score-weighted row entropies, normalised by the row count."""
    Q = np.asarray(Q_unlabeled, dtype=np.float64)
    S = _check_scores(Q, S)
    if Q.shape[0] == 0:
        return 0.0
    return float(np.mean(S * entropy_rows(Q)))


def weighted_entropy_grad(Q_unlabeled, S) -> np.ndarray:
    """d weighted_entropy_loss / dQ with S held constant."""
    Q = np.asarray(Q_unlabeled, dtype=np.float64)
    S = _check_scores(Q, S)
    if Q.shape[0] == 0:
        return np.zeros_like(Q)
    return (S[:, None] / Q.shape[0]) * entropy_rows_grad(Q)


def alpha_at(t: float, sched: AlphaSchedule) -> float:
    if t < 0:
        raise DomainError(f"epoch index must be non-negative, got {t}")
    if t <= sched.t1:
        return 0.0
    if t <= sched.t2:
        return sched.alpha_inf * (t - sched.t1) / (sched.t2 - sched.t1)
    return sched.alpha_inf


class LabeledFeatureCache:
    """Encoded labeled pool (source + target labeled), refreshed once per epoch."""

    def __init__(self, X_labeled):
        self.X_labeled = as_matrix(X_labeled, "labeled features")
        if self.X_labeled.shape[0] == 0:
            raise ConfigError("labeled feature set is empty")
        self.Z: Optional[np.ndarray] = None
        self.refreshes = 0

    def refresh(self, model: Model) -> np.ndarray:
        self.Z = encode(model, self.X_labeled)
        self.refreshes += 1
        return self.Z

    def scores(self, Z_unlabeled, cfg: WeightingConfig) -> np.ndarray:
        if self.Z is None:
            raise StateError("labeled feature cache used before refresh")
        return sample_scores(nearest_labeled_distances(Z_unlabeled, self.Z), cfg)
