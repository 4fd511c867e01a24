"""Hyperparameter grid search over TrainConfig fields, selected by target validation R2."""

import itertools
import logging
import traceback
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional, Union

import numpy as np

from histcal.data.scaling import StandardScaler
from histcal.data.splits import SplitBundle
from histcal.train.config import NAMED_GRIDS, TrainConfig
from histcal.train.trainer import Checkpoint, evaluate, run_training
from histcal.utils.errors import ConfigError, HistcalError

logger = logging.getLogger("GridSearch")

# fields a grid may not vary; seeds come from the grid index
FIXED_FIELDS = {"seed", "show_progress"}


def _number(text: str) -> Union[int, float]:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"grid value '{text}' is not a number")


def parse_grid_spec(spec: Union[str, list, tuple]) -> list:
    """Expand ``start:stop:step`` (stop inclusive), ``a,b,c``, a JSON list or a name
    from NAMED_GRIDS into values.

    >>> len(parse_grid_spec("20:1220:40"))
    31
    >>> parse_grid_spec("0.1,1")
    [0.1, 1]
    >>> parse_grid_spec("extended_alpha")
    [0.001, 0.01, 0.1, 1.0]
    """
    if isinstance(spec, str) and spec.strip() in NAMED_GRIDS:
        return parse_grid_spec(NAMED_GRIDS[spec.strip()])
    if isinstance(spec, (list, tuple)):
        values = list(spec)
    elif isinstance(spec, str) and ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range grid must be start:stop:step, got '{spec}'")
        start, stop, step = (_number(p) for p in parts)
        if not step > 0:
            raise ConfigError(f"grid step must be positive, got {step}")
        if stop < start:
            raise ConfigError(f"grid stop {stop} is below start {start}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
    elif isinstance(spec, str):
        values = [_number(p) for p in spec.split(",") if p.strip()]
    else:
        values = [spec]
    if not values:
        raise ConfigError(f"grid spec '{spec}' yields no values")
    return values


def expand_grid(grid: dict[str, Any]) -> list[dict[str, Any]]:
    """Cartesian product of the per-field value lists, first field varying slowest."""
    if not grid:
        raise ConfigError("grid is empty")
    known = {f.name for f in fields(TrainConfig)} - FIXED_FIELDS
    unknown = sorted(set(grid) - known)
    if unknown:
        raise ConfigError(f"grid names unknown or fixed TrainConfig fields {unknown}")
    names = list(grid)
    axes = [parse_grid_spec(grid[name]) for name in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


@dataclass
class GridPoint:
    index: int
    params: dict[str, Any]
    seed: int
    val_r2: Optional[float] = None
    val_r2_x100: Optional[float] = None
    best_epoch: Optional[int] = None
    error: Optional[str] = None


@dataclass
class GridReport:
    points: list[GridPoint] = field(default_factory=list)
    best_index: Optional[int] = None

    @property
    def best(self) -> Optional[GridPoint]:
        return None if self.best_index is None else self.points[self.best_index]


def grid_search(bundle: SplitBundle, base_cfg: TrainConfig, grid: dict[str, Any],
                scaler: Optional[StandardScaler] = None) -> tuple[TrainConfig, GridReport, Checkpoint]:
    """Train one model per grid point and pick the best target validation R2.

    Point ``i`` trains with seed ``base_cfg.seed + i``. A point that fails with a
    HistcalError is recorded and the search moves on; if every point fails the
    last error is raised.
    """
    points = expand_grid(grid)
    report = GridReport()
    best_cfg = None
    best_ckpt = None
    last_error = None
    for index, params in enumerate(points):
        seed = base_cfg.seed + index
        point = GridPoint(index=index, params=params, seed=seed)
        report.points.append(point)
        try:
            cfg = replace(base_cfg, **params, seed=seed)
            result = run_training(bundle, cfg, scaler)
        except HistcalError as e:
            logger.error("grid point %d %s failed: %s\n%s", index, params, e, traceback.format_exc())
            point.error = f"{type(e).__name__}: {e}"
            last_error = e
            continue
        ckpt = result.checkpoint
        point.best_epoch = ckpt.epoch
        if ckpt.val_r2 is None:
            # zero epochs: score the initial model
            ckpt.val_r2 = evaluate(ckpt.model, cfg.histogram_spec, bundle.target_val.X, bundle.target_val.y).r2
        point.val_r2 = ckpt.val_r2
        point.val_r2_x100 = 100.0 * ckpt.val_r2
        logger.info("grid point %d %s: validation R2 x100 %.2f", index, params, point.val_r2_x100)
        if report.best is None or point.val_r2 > report.best.val_r2:
            report.best_index = index
            best_cfg = cfg
            best_ckpt = ckpt
    if best_cfg is None:
        raise last_error
    return best_cfg, report, best_ckpt
