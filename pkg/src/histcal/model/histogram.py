"""Binned label distributions, histogram loss and entropy.

Natural log everywhere. Probabilities are clamped to PROB_FLOOR before any log.
"""

import logging
from dataclasses import dataclass
from enum import StrEnum, auto
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import ndtr

from histcal.utils.errors import ConfigError, DimensionError

logger = logging.getLogger("Histogram")

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HistogramSpec:
    support_lo: float
    support_hi: float
    n_bins: int

    def __post_init__(self):
        if not np.isfinite(self.support_lo) or not np.isfinite(self.support_hi):
            raise ConfigError("histogram support must be finite")
        if self.support_hi <= self.support_lo:
            raise ConfigError(
                f"histogram support_hi {self.support_hi} must exceed support_lo {self.support_lo}")
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ConfigError(f"n_bins must be an integer >= 2, got {self.n_bins}")

    @property
    def bin_width(self) -> float:
        return (self.support_hi - self.support_lo) / self.n_bins

    @cached_property
    def bin_edges(self) -> np.ndarray:
        return self.support_lo + np.arange(self.n_bins + 1) * self.bin_width

    @cached_property
    def bin_centers(self) -> np.ndarray:
        return self.support_lo + (np.arange(self.n_bins) + 0.5) * self.bin_width


class TargetKind(StrEnum):
    gaussian = auto()
    dirac = auto()


@dataclass(frozen=True)
class TargetMode:
    """Soft label shape. sigma=None on a Gaussian means sqrt(bin width)."""
    kind: TargetKind = TargetKind.gaussian
    sigma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TargetKind(self.kind))
        if self.kind == TargetKind.gaussian and self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"Gaussian target sigma must be positive, got {self.sigma}")

    @classmethod
    def gaussian(cls, sigma: Optional[float] = None) -> "TargetMode":
        return cls(TargetKind.gaussian, sigma)

    @classmethod
    def dirac(cls) -> "TargetMode":
        return cls(TargetKind.dirac)

    def sigma_for(self, spec: HistogramSpec) -> float:
        return self.sigma if self.sigma is not None else float(np.sqrt(spec.bin_width))


@dataclass
class ClampStats:
    """Counts labels pulled back into the support before discretization."""
    clamped: int = 0
    seen: int = 0


def _clamp_labels(y: np.ndarray, spec: HistogramSpec, stats: Optional[ClampStats]) -> np.ndarray:
    out = (y < spec.support_lo) | (y > spec.support_hi)
    n_out = int(np.count_nonzero(out))
    if stats is not None:
        stats.clamped += n_out
        stats.seen += y.size
    if n_out:
        logger.warning("%d label(s) outside support [%g, %g] clamped",
                       n_out, spec.support_lo, spec.support_hi)
    return np.clip(y, spec.support_lo, spec.support_hi)


def _dirac_bins(y: np.ndarray, spec: HistogramSpec) -> np.ndarray:
    idx = np.floor((y - spec.support_lo) / spec.bin_width).astype(np.int64)
    return np.clip(idx, 0, spec.n_bins - 1)


def make_targets(y, spec: HistogramSpec, mode: TargetMode,
                 stats: Optional[ClampStats] = None) -> np.ndarray:
    """Target pmfs for a vector of labels, one row per label (M x K)."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise DimensionError("labels must be finite")
    y = _clamp_labels(y, spec, stats)
    P = np.zeros((y.size, spec.n_bins), dtype=np.float64)
    if y.size == 0:
        return P
    dirac_idx = _dirac_bins(y, spec)
    if mode.kind == TargetKind.dirac:
        P[np.arange(y.size), dirac_idx] = 1.0
        return P
    sigma = mode.sigma_for(spec)
    cdf = ndtr((spec.bin_edges[None, :] - y[:, None]) / sigma)
    mass = np.diff(cdf, axis=1)
    total = mass.sum(axis=1)
    # a sigma far below the bin width can leave no representable mass in range
    degenerate = ~(total > 0.0)
    total[degenerate] = 1.0
    P = mass / total[:, None]
    if np.any(degenerate):
        rows = np.nonzero(degenerate)[0]
        P[rows] = 0.0
        P[rows, dirac_idx[rows]] = 1.0
    return P


def make_target(y: float, spec: HistogramSpec, mode: TargetMode,
                stats: Optional[ClampStats] = None) -> np.ndarray:
    return make_targets(np.array([y]), spec, mode, stats)[0]


def _check_pair(P, Q) -> tuple[np.ndarray, np.ndarray]:
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.ndim != 2 or P.shape != Q.shape:
        raise DimensionError(f"P {P.shape} and Q {Q.shape} must be equal 2-D shapes")
    return P, Q


def histogram_loss(P, Q) -> float:
    """Mean cross entropy between target rows P and predicted rows Q."""
    P, Q = _check_pair(P, Q)
    if P.shape[0] == 0:
        return 0.0
    return float(-np.sum(P * np.log(np.maximum(Q, PROB_FLOOR))) / P.shape[0])


def histogram_loss_grad(P, Q) -> np.ndarray:
    """d histogram_loss / dQ."""
    P, Q = _check_pair(P, Q)
    if P.shape[0] == 0:
        return np.zeros_like(Q)
    clamped = np.maximum(Q, PROB_FLOOR)
    return np.where(Q > PROB_FLOOR, -P / clamped, 0.0) / P.shape[0]


def entropy_rows(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2:
        raise DimensionError(f"Q must be 2-D, got shape {Q.shape}")
    return -np.sum(Q * np.log(np.maximum(Q, PROB_FLOOR)), axis=1)


def entropy_rows_grad(Q) -> np.ndarray:
    """Elementwise d H_j / d Q[j, k] under the same clamp as entropy_rows."""
    Q = np.asarray(Q, dtype=np.float64)
    return -(np.log(np.maximum(Q, PROB_FLOOR)) + np.where(Q > PROB_FLOOR, 1.0, 0.0))


def expectation(q, spec: HistogramSpec) -> float:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != spec.n_bins:
        raise DimensionError(f"pmf has {q.shape[0]} bins, spec has {spec.n_bins}")
    return float(q @ spec.bin_centers)


def expectations(Q, spec: HistogramSpec) -> np.ndarray:
    """Point estimates for every row of Q."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != spec.n_bins:
        raise DimensionError(f"Q shape {Q.shape} does not match {spec.n_bins} bins")
    return Q @ spec.bin_centers
