import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Optional

from histcal.adaptation import AlphaSchedule, WeightingConfig, alpha_at
from histcal.model.histogram import HistogramSpec, TargetMode
from histcal.utils.errors import ConfigError

logger = logging.getLogger("Trainer")

STANDARD_BIN_GRID = "20:1220:40"
STANDARD_ALPHA_GRID = (0.1, 1.0)
EXTENDED_ALPHA_GRID = (0.001, 0.01, 0.1, 1.0)
# grid specs a run config may name instead of spelling out the values
NAMED_GRIDS = {
    "standard_bins": STANDARD_BIN_GRID,
    "standard_alpha": STANDARD_ALPHA_GRID,
    "extended_alpha": EXTENDED_ALPHA_GRID,
}


class TrainMode(StrEnum):
    """Ablation switch.

    HL          histogram loss on labeled data only
    HL_MME      plus unweighted min-max entropy on unlabeled data
    HL_WME      plus weighted entropy minimized by encoder and head alike
    HL_DD_WMME  weighted min-max entropy with one-hot (Dirac) targets
    HL_WMME     weighted min-max entropy, the full method
    """
    HL = "HL"
    HL_MME = "HL_MME"
    HL_WME = "HL_WME"
    HL_DD_WMME = "HL_DD_WMME"
    HL_WMME = "HL_WMME"

    @property
    def uses_entropy(self) -> bool:
        return self != TrainMode.HL

    @property
    def weighted(self) -> bool:
        return self in (TrainMode.HL_WME, TrainMode.HL_DD_WMME, TrainMode.HL_WMME)

    @property
    def entropy_head_scale(self) -> float:
        """Head gradient scale for the entropy term: -1 where the head maximizes it."""
        return 1.0 if self == TrainMode.HL_WME else -1.0


ABLATION_MODES = [TrainMode.HL, TrainMode.HL_MME, TrainMode.HL_WME,
                  TrainMode.HL_DD_WMME, TrainMode.HL_WMME]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64
    n_bins: int = 200
    support_lo: float = 0.0
    support_hi: float = 800.0
    target_sigma: Optional[float] = None
    hidden_sizes: tuple[int, ...] = (512, 256, 256, 256, 256, 200)
    head_layers: int = 1
    t1: int = 15
    t2: int = 80
    alpha_inf: float = 1.0
    alpha_override: Optional[float] = None
    beta: float = 1.0
    mode: TrainMode = TrainMode.HL_WMME
    seed: int = 0
    divergence_patience: int = 3
    show_progress: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", TrainMode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown mode '{self.mode}', known {[m.value for m in TrainMode]}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError(f"hidden_sizes must be non-empty positive widths, got {self.hidden_sizes}")
        if not 1 <= self.head_layers <= len(self.hidden_sizes):
            raise ConfigError(f"head_layers must be in [1, {len(self.hidden_sizes)}], got {self.head_layers}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.alpha_override is not None and not self.alpha_override >= 0:
            raise ConfigError(f"alpha_override must be >= 0, got {self.alpha_override}")
        if self.divergence_patience < 1:
            raise ConfigError("divergence_patience must be >= 1")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        # build the nested configs once so their validation runs here
        self.histogram_spec
        self.target_mode
        self.schedule
        self.weighting

    @property
    def histogram_spec(self) -> HistogramSpec:
        return HistogramSpec(self.support_lo, self.support_hi, self.n_bins)

    @property
    def target_mode(self) -> TargetMode:
        if self.mode == TrainMode.HL_DD_WMME:
            return TargetMode.dirac()
        return TargetMode.gaussian(self.target_sigma)

    @property
    def schedule(self) -> AlphaSchedule:
        return AlphaSchedule(t1=self.t1, t2=self.t2, alpha_inf=self.alpha_inf)

    @property
    def weighting(self) -> WeightingConfig:
        return WeightingConfig(beta=self.beta)

    def alpha_for(self, epoch: int) -> float:
        if self.alpha_override is not None:
            return float(self.alpha_override)
        return alpha_at(epoch, self.schedule)

    def layer_sizes(self, input_dim: int) -> list[int]:
        return [input_dim, *self.hidden_sizes, self.n_bins]
