"""Training loop for the histogram-loss calibrator.

One optimizer step combines the supervised histogram loss on a source batch and
a target-labeled batch with the entropy term on an unlabeled target batch. The
supervised terms are plain backprop. The entropy term goes through the head
gradient scale: -1 for the min-max modes (head ascends, encoder descends), +1
for HL_WME. All gradients are summed and applied in one Adam step.
"""

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
from tqdm import tqdm

from histcal.adaptation import LabeledFeatureCache, weighted_entropy_grad, weighted_entropy_loss
from histcal.data.scaling import StandardScaler
from histcal.data.splits import SplitBundle
from histcal.eval.metrics import EvalReport, metrics
from histcal.model.checkpoint import decode_container, encode_container
from histcal.model.histogram import (ClampStats, HistogramSpec, expectations, histogram_loss,
                                     histogram_loss_grad, make_targets)
from histcal.model.nn_core import (AdamState, Gradients, Model, adam_step, backward, forward,
                                   init_model, predict_proba)
from histcal.train.config import TrainConfig, TrainMode
from histcal.utils.errors import ConfigError, DataError, DivergenceError, StateError
from histcal.utils.seeds import derive_rng
from histcal.utils.serializers import config_from_dict, serialize_value

logger = logging.getLogger("Trainer")


@dataclass
class LabeledBatch:
    X: np.ndarray
    P: np.ndarray       # target pmfs, one row per sample

    def __len__(self):
        return self.X.shape[0]


@dataclass
class UnlabeledBatch:
    X: np.ndarray
    scores: Optional[np.ndarray] = None     # precomputed S; otherwise taken from the feature cache

    def __len__(self):
        return self.X.shape[0]


@dataclass
class LossComponents:
    source: float = 0.0
    target: float = 0.0
    entropy: float = 0.0

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.source) and np.isfinite(self.target) and np.isfinite(self.entropy))


@dataclass
class StepResult:
    model: Model
    adam: AdamState
    losses: LossComponents
    applied: bool = True


def _supervised_grads(model: Model, batch: Optional[LabeledBatch]) -> tuple[float, Optional[Gradients]]:
    if batch is None or len(batch) == 0:
        return 0.0, None
    Q, cache = forward(model, batch.X)
    return histogram_loss(batch.P, Q), backward(model, cache, histogram_loss_grad(batch.P, Q), 1.0)


def _entropy_scores(batch: UnlabeledBatch, z: np.ndarray, mode: TrainMode,
                    feature_cache: Optional[LabeledFeatureCache], cfg: TrainConfig) -> np.ndarray:
    if not mode.weighted:
        return np.ones(len(batch))
    if batch.scores is not None:
        return batch.scores
    if feature_cache is None:
        raise StateError(f"mode {mode} needs a labeled feature cache or precomputed scores")
    return feature_cache.scores(z, cfg.weighting)


def compute_gradients(model: Model, batch_s: LabeledBatch, batch_tl: Optional[LabeledBatch],
                      batch_tu: Optional[UnlabeledBatch], alpha: float, mode: TrainMode,
                      cfg: TrainConfig, feature_cache: Optional[LabeledFeatureCache] = None
                      ) -> tuple[Gradients, LossComponents]:
    """Summed parameter gradients and loss values for one step, without updating anything."""
    losses = LossComponents()
    losses.source, grads = _supervised_grads(model, batch_s)
    losses.target, g_tl = _supervised_grads(model, batch_tl)
    if grads is None:
        raise DataError("source batch is empty")
    if g_tl is not None:
        grads = grads + g_tl
    if mode.uses_entropy and batch_tu is not None and len(batch_tu) > 0:
        Q_u, cache_u = forward(model, batch_tu.X)
        S = _entropy_scores(batch_tu, cache_u.z, mode, feature_cache, cfg)
        losses.entropy = weighted_entropy_loss(Q_u, S)
        # a zero weight contributes nothing; skipping keeps alpha = 0 bit-identical to HL
        if alpha != 0.0:
            dQ = alpha * weighted_entropy_grad(Q_u, S)
            grads = grads + backward(model, cache_u, dQ, mode.entropy_head_scale)
    return grads, losses


def train_step(model: Model, adam: AdamState, batch_s: LabeledBatch, batch_tl: Optional[LabeledBatch],
               batch_tu: Optional[UnlabeledBatch], alpha: float, mode: TrainMode, cfg: TrainConfig,
               feature_cache: Optional[LabeledFeatureCache] = None) -> StepResult:
    """One Adam step on the combined objective. A non-finite loss or gradient skips the update."""
    grads, losses = compute_gradients(model, batch_s, batch_tl, batch_tu, alpha, mode, cfg, feature_cache)
    if not (losses.is_finite() and grads.is_finite()):
        return StepResult(model=model, adam=adam, losses=losses, applied=False)
    params, adam = adam_step(model.parameters(), grads.as_list(), adam)
    return StepResult(model=model.with_parameters(params), adam=adam, losses=losses)


class BatchCycler:
    """Sequential batches over a seeded permutation, reshuffled whenever a pass ends."""

    def __init__(self, n_rows: int, batch_size: int, rng: np.random.Generator):
        self.n_rows = n_rows
        self.batch_size = batch_size
        self.rng = rng
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.n_rows == 0:
            return np.empty(0, dtype=np.int64)
        if self.pos >= self.order.shape[0]:
            self.order = self.rng.permutation(self.n_rows)
            self.pos = 0
        idx = self.order[self.pos:self.pos + self.batch_size]
        self.pos += idx.shape[0]
        return idx

    def steps_per_pass(self) -> int:
        return -(-self.n_rows // self.batch_size)


@dataclass
class EpochLog:
    epoch: int
    alpha: float
    source_loss: float
    target_loss: float
    entropy: float
    val_r2: float
    val_r2_x100: float
    val_mae: float
    skipped_steps: int = 0


@dataclass
class Checkpoint:
    """Everything needed for inference: weights, run config, scaler, bins, epoch."""
    model: Model
    config: TrainConfig
    epoch: int
    scaler: Optional[StandardScaler] = None
    feature_names: list[str] = field(default_factory=list)
    val_r2: Optional[float] = None

    @property
    def spec(self) -> HistogramSpec:
        return self.config.histogram_spec

    def predict(self, X, scaled: bool = True) -> np.ndarray:
        """Point estimates; ``scaled=False`` applies the stored scaler first."""
        if not scaled:
            if self.scaler is None:
                raise StateError("checkpoint has no scaler to apply")
            X = self.scaler.transform(X)
        return expectations(predict_proba(self.model, X), self.spec)

    def to_bytes(self) -> bytes:
        extra = {
            "train_config": serialize_value(self.config),
            "histogram": serialize_value(self.spec),
            "epoch": self.epoch,
            "feature_names": list(self.feature_names),
            "val_r2": serialize_value(self.val_r2),
        }
        arrays = {}
        if self.scaler is not None:
            arrays = {"scaler.mean": self.scaler.mean, "scaler.std": self.scaler.std}
        return encode_container(self.model, extra, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        model, extra, arrays = decode_container(data)
        scaler = None
        if "scaler.mean" in arrays:
            scaler = StandardScaler(mean=arrays["scaler.mean"], std=arrays["scaler.std"])
        val_r2 = extra.get("val_r2")
        return cls(model=model, config=config_from_dict(TrainConfig, extra["train_config"], "checkpoint"),
                   epoch=int(extra["epoch"]), scaler=scaler,
                   feature_names=list(extra.get("feature_names", [])),
                   val_r2=None if val_r2 is None else float(val_r2))

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        logger.info("wrote checkpoint %s (epoch %d)", path, self.epoch)
        return path

    @classmethod
    def load(cls, path: Path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise DataError(f"checkpoint not found: {path}")
        return cls.from_bytes(path.read_bytes())


class TrainEventListener(Protocol):

    def on_epoch_end(self, log: EpochLog) -> None: ...

    def on_training_end(self, checkpoint: Checkpoint, logs: list[EpochLog]) -> None: ...


class JsonlEpochWriter:
    """Appends one JSON line per epoch; the file is truncated when the writer is made."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.write_text("")

    def on_epoch_end(self, log: EpochLog) -> None:
        with open(self.path, "a") as f:
            f.write(json.dumps(serialize_value(asdict(log)), sort_keys=True) + "\n")

    def on_training_end(self, checkpoint: Checkpoint, logs: list[EpochLog]) -> None:
        pass


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    logs: list[EpochLog]


def _check_bundle(bundle: SplitBundle, cfg: TrainConfig):
    if len(bundle.source_train) == 0:
        raise DataError("source_train split is empty")
    if bundle.source_train.y is None or (len(bundle.target_labeled) and bundle.target_labeled.y is None):
        raise DataError("labeled splits need labels")
    if bundle.target_val.y is None or len(bundle.target_val) < 2:
        raise DataError("target_val needs at least 2 labeled rows for model selection")
    if cfg.mode.uses_entropy and len(bundle.target_unlabeled) == 0:
        raise ConfigError(f"mode {cfg.mode} needs unlabeled target rows")


def evaluate(model: Model, spec: HistogramSpec, X, y) -> EvalReport:
    return metrics(y, expectations(predict_proba(model, X), spec))


def run_training(bundle: SplitBundle, cfg: TrainConfig, scaler: Optional[StandardScaler] = None,
                 listeners: Sequence[TrainEventListener] = ()) -> TrainResult:
    """Train for cfg.epochs (epochs count from 1) and keep the epoch with the best target validation R2.

    The bundle is expected to be standardized already; ``scaler`` is only stored in
    the checkpoint. Ties in validation R2 go to the earlier epoch.
    """
    _check_bundle(bundle, cfg)
    spec = cfg.histogram_spec
    target_mode = cfg.target_mode
    clamp_stats = ClampStats()
    P_s = make_targets(bundle.source_train.y, spec, target_mode, clamp_stats)
    P_tl = make_targets(bundle.target_labeled.y, spec, target_mode, clamp_stats) \
        if len(bundle.target_labeled) else None
    if clamp_stats.clamped:
        logger.warning("%d of %d training label(s) clamped into the histogram support",
                       clamp_stats.clamped, clamp_stats.seen)

    model = init_model(cfg.layer_sizes(bundle.n_features), cfg.seed, cfg.head_layers)
    adam = AdamState.for_params(model.parameters(), learning_rate=cfg.learning_rate)
    feature_names = list(bundle.source_train.feature_names)
    best = Checkpoint(model=model, config=cfg, epoch=0, scaler=scaler, feature_names=feature_names)
    logs: list[EpochLog] = []

    src = BatchCycler(len(bundle.source_train), cfg.batch_size, derive_rng(cfg.seed, "batch_source"))
    tl = BatchCycler(len(bundle.target_labeled), cfg.batch_size, derive_rng(cfg.seed, "batch_target_labeled"))
    tu = BatchCycler(len(bundle.target_unlabeled), cfg.batch_size,
                     derive_rng(cfg.seed, "batch_target_unlabeled"))
    feature_cache = None
    if cfg.mode.weighted:
        labeled_X = np.vstack([bundle.source_train.X, bundle.target_labeled.X])
        feature_cache = LabeledFeatureCache(labeled_X)

    consecutive_bad = 0
    epochs = tqdm(range(1, cfg.epochs + 1), desc=f"train {cfg.mode}", disable=not cfg.show_progress)
    for epoch in epochs:
        alpha = cfg.alpha_for(epoch)
        if feature_cache is not None:
            feature_cache.refresh(model)
        totals = np.zeros(3)
        applied = 0
        skipped = 0
        for step in range(src.steps_per_pass()):
            i_s = src.next()
            batch_s = LabeledBatch(bundle.source_train.X[i_s], P_s[i_s])
            batch_tl = None
            if P_tl is not None:
                i_tl = tl.next()
                batch_tl = LabeledBatch(bundle.target_labeled.X[i_tl], P_tl[i_tl])
            batch_tu = None
            if cfg.mode.uses_entropy:
                batch_tu = UnlabeledBatch(bundle.target_unlabeled.X[tu.next()])
            res = train_step(model, adam, batch_s, batch_tl, batch_tu, alpha, cfg.mode, cfg, feature_cache)
            if not res.applied:
                skipped += 1
                consecutive_bad += 1
                logger.warning("epoch %d step %d: non-finite loss or gradient, update skipped", epoch, step)
                if consecutive_bad >= cfg.divergence_patience:
                    logger.error("training diverged at epoch %d step %d", epoch, step)
                    raise DivergenceError(
                        f"non-finite loss for {consecutive_bad} consecutive steps "
                        f"(epoch {epoch}, step {step}, losses {res.losses})", epoch=epoch, step=step)
                continue
            consecutive_bad = 0
            model, adam = res.model, res.adam
            totals += (res.losses.source, res.losses.target, res.losses.entropy)
            applied += 1

        val = evaluate(model, spec, bundle.target_val.X, bundle.target_val.y)
        means = totals / max(applied, 1)
        log = EpochLog(epoch=epoch, alpha=alpha, source_loss=float(means[0]), target_loss=float(means[1]),
                       entropy=float(means[2]), val_r2=val.r2, val_r2_x100=val.r2_x100, val_mae=val.mae,
                       skipped_steps=skipped)
        logs.append(log)
        logger.info("epoch %d alpha=%.4f source=%.4f target=%.4f entropy=%.4f val_r2x100=%.2f val_mae=%.3f",
                    epoch, alpha, log.source_loss, log.target_loss, log.entropy, val.r2_x100, val.mae)
        if best.val_r2 is None or val.r2 > best.val_r2:
            best = Checkpoint(model=model, config=cfg, epoch=epoch, scaler=scaler,
                              feature_names=feature_names, val_r2=val.r2)
        for listener in listeners:
            listener.on_epoch_end(log)

    if logs:
        logger.info("selected epoch %d with validation R2 x100 %.2f", best.epoch, 100.0 * best.val_r2)
    for listener in listeners:
        listener.on_training_end(best, logs)
    return TrainResult(checkpoint=best, logs=logs)
