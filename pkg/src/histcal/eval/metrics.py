import logging
from dataclasses import dataclass

import numpy as np

from histcal.utils.errors import DimensionError, DomainError

logger = logging.getLogger("Metrics")


@dataclass(frozen=True)
class EvalReport:
    r2: float
    r2_x100: float
    mae: float
    mae_std: float
    n: int

    def row(self) -> dict:
        """Display form: R2 x 100 rounded to one decimal as in published tables."""
        return {"r2_x100": round(self.r2_x100, 1), "mae": round(self.mae, 2),
                "mae_std": round(self.mae_std, 2), "n": self.n}


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"y_true has {y_true.size} values, y_pred has {y_pred.size}")
    return y_true, y_pred


def metrics(y_true, y_pred) -> EvalReport:
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.size < 2:
        raise DomainError(f"metrics need at least 2 samples, got {y_true.size}")
    if not (np.all(np.isfinite(y_true)) and np.all(np.isfinite(y_pred))):
        raise DomainError("metrics inputs must be finite")
    abs_err = np.abs(y_true - y_pred)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0.0:
        raise DomainError("R2 is undefined for a constant y_true")
    r2 = 1.0 - np.sum((y_true - y_pred) ** 2) / ss_tot
    return EvalReport(r2=float(r2), r2_x100=float(100.0 * r2), mae=float(abs_err.mean()),
                      mae_std=float(abs_err.std()), n=int(y_true.size))


def cumulative_abs_error(y_true, y_pred) -> np.ndarray:
    """Running total of absolute errors over deployment order."""
    y_true, y_pred = _pair(y_true, y_pred)
    return np.cumsum(np.abs(y_true - y_pred))
