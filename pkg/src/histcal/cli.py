#!/usr/bin/env python3
"""histcal command line: train, ablate, gridsearch and synth.

Every command reads one JSON run config; the only flags are --config, --out,
--seed and --log-level. Artifacts land under the output directory with fixed
names. A command that fails removes the output directory it created.
"""

import argparse
import io
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from histcal.data.scaling import StandardScaler
from histcal.data.sensors import FeatureMatrix, RecipeKind, clean, derive_features, load_csv, load_feature_csv
from histcal.data.splits import SplitBundle, split_bundle, standardize_bundle
from histcal.data.synthetic import export_synthetic, synth_domains
from histcal.eval.metrics import EvalReport, cumulative_abs_error, metrics
from histcal.eval.series import export_cumulative, export_series
from histcal.run_config import RunConfig
from histcal.train.grid import expand_grid, grid_search
from histcal.train.trainer import Checkpoint, JsonlEpochWriter, run_training
from histcal.utils.errors import ConfigError, DataError, HistcalError
from histcal.utils.loggers import setup_logging
from histcal.utils.serializers import write_json
from histcal.utils.top_error import RemovePartialOutputs, TopErrorHandler, track_output

logger = logging.getLogger("HistcalCLI")

CHECKPOINT_FILE = "checkpoint.bin"
EPOCHS_FILE = "epochs.jsonl"
REPORT_FILE = "report.json"
SERIES_FILE = "series.csv"
CUMERR_FILE = "cumerr.csv"
ABLATION_FILE = "ablation.json"
ABLATION_TEXT_FILE = "ablation.txt"
GRIDSEARCH_FILE = "gridsearch.json"


@dataclass
class PreparedTarget:
    name: str
    bundle: SplitBundle         # standardized
    scaler: StandardScaler


def _load_features(path: Path, run_cfg: RunConfig) -> FeatureMatrix:
    recipe = run_cfg.feature_recipe()
    if recipe.kind == RecipeKind.passthrough:
        return derive_features(load_feature_csv(path, recipe), recipe)
    return derive_features(clean(load_csv(path), run_cfg.clip_hi), recipe)


def prepare_targets(run_cfg: RunConfig, seed: Optional[int] = None) -> Iterator[PreparedTarget]:
    """Standardized bundles, one per target location (a single one for synthetic runs)."""
    if run_cfg.is_synthetic:
        bundle, _ = synth_domains(run_cfg.synthetic_config(seed))
        std_bundle, scaler = standardize_bundle(bundle)
        yield PreparedTarget("synthetic", std_bundle, scaler)
        return
    source = _load_features(run_cfg.resolve(run_cfg.source_csv), run_cfg)
    for target in run_cfg.targets():
        bundle = split_bundle(source, _load_features(target.path, run_cfg), target.durations)
        std_bundle, scaler = standardize_bundle(bundle)
        yield PreparedTarget(target.name, std_bundle, scaler)


def make_output_dir(path: Path) -> Path:
    path = Path(path)
    existed = path.exists()
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {path}: {e}")
    if not existed:
        track_output(path)
    return path


def _target_dir(out: Path, name: str, n_targets: int) -> Path:
    if n_targets == 1:
        return out
    return make_output_dir(out / name)


def evaluate_test(ckpt: Checkpoint, bundle: SplitBundle) -> tuple[np.ndarray, EvalReport, Optional[EvalReport]]:
    test = bundle.target_test
    if test.y is None or len(test) < 2:
        raise DataError("target_test needs at least 2 labeled rows")
    y_cal = ckpt.predict(test.X)
    uncal = metrics(test.y, test.uncalibrated) if test.uncalibrated is not None else None
    return y_cal, metrics(test.y, y_cal), uncal


def cmd_train(run_cfg: RunConfig) -> list[Path]:
    """Train, select on target validation, evaluate on target test, write the five artifacts."""
    out = make_output_dir(run_cfg.out_path)
    targets = list(prepare_targets(run_cfg))
    written = []
    for prepared in targets:
        target_out = _target_dir(out, prepared.name, len(targets))
        cfg = run_cfg.train_config()
        result = run_training(prepared.bundle, cfg, prepared.scaler,
                              listeners=[JsonlEpochWriter(target_out / EPOCHS_FILE)])
        ckpt = result.checkpoint
        ckpt.save(target_out / CHECKPOINT_FILE)
        y_cal, test_report, uncal_report = evaluate_test(ckpt, prepared.bundle)
        report = {
            "target": prepared.name,
            "mode": cfg.mode.value,
            "seed": cfg.seed,
            "epochs_run": len(result.logs),
            "best_epoch": ckpt.epoch,
            "val_r2": ckpt.val_r2,
            "test": test_report,
            "uncalibrated": uncal_report,
            "split_sizes": prepared.bundle.sizes(),
        }
        write_json(target_out / REPORT_FILE, report)
        test = prepared.bundle.target_test
        export_series(test.timestamps, test.y, test.uncalibrated, y_cal, target_out / SERIES_FILE)
        export_cumulative(test.timestamps, cumulative_abs_error(test.y, y_cal), target_out / CUMERR_FILE)
        print(f"{prepared.name}: {cfg.mode} test R2x100 {test_report.r2_x100:.1f} "
              f"MAE {test_report.mae:.2f} (epoch {ckpt.epoch})")
        written.append(target_out)
    return written


def _median(values: list[float]) -> Optional[float]:
    return float(np.median(values)) if values else None


def ablation_table(runs: list[dict], modes: list[str]) -> list[dict]:
    rows = []
    for mode in modes:
        ok = [r for r in runs if r["mode"] == mode and r["error"] is None]
        rows.append({
            "mode": mode,
            "r2_x100": _median([r["r2_x100"] for r in ok]),
            "mae": _median([r["mae"] for r in ok]),
            "n_runs": len(ok),
            "n_failed": sum(1 for r in runs if r["mode"] == mode and r["error"] is not None),
        })
    return rows


def render_ablation(rows: list[dict], seeds: list[int]) -> str:
    table = Table(title=f"Ablation (median over seeds {seeds})")
    table.add_column("Mode")
    table.add_column("R2 x100", justify="right")
    table.add_column("MAE", justify="right")
    table.add_column("Runs", justify="right")
    for row in rows:
        r2 = "failed" if row["r2_x100"] is None else f"{row['r2_x100']:.1f}"
        mae = "failed" if row["mae"] is None else f"{row['mae']:.2f}"
        table.add_row(row["mode"], r2, mae, f"{row['n_runs']}/{row['n_runs'] + row['n_failed']}")
    console = Console(record=True, width=80, file=io.StringIO())
    console.print(table)
    return console.export_text()


def cmd_ablate(run_cfg: RunConfig) -> Path:
    """Every ablation mode on identical splits and seeds; per-mode medians in a table."""
    out = make_output_dir(run_cfg.out_path)
    ablation = run_cfg.ablation_config()
    seeds = run_cfg.ablation_seeds()
    modes = [m.value for m in ablation.modes]
    runs = []
    for seed in seeds:
        for prepared in prepare_targets(run_cfg, seed):
            for mode in ablation.modes:
                run = {"target": prepared.name, "seed": seed, "mode": mode.value,
                       "r2_x100": None, "mae": None, "mae_std": None, "error": None}
                runs.append(run)
                try:
                    overrides = {"mode": mode}
                    if ablation.alpha_override is not None:
                        overrides["alpha_override"] = ablation.alpha_override
                    cfg = run_cfg.train_config(seed, **overrides)
                    result = run_training(prepared.bundle, cfg, prepared.scaler)
                    _, test_report, _ = evaluate_test(result.checkpoint, prepared.bundle)
                except HistcalError as e:
                    logger.error("ablation %s seed %d mode %s failed: %s", prepared.name, seed, mode, e)
                    run["error"] = f"{type(e).__name__}: {e}"
                    continue
                run.update(r2_x100=test_report.r2_x100, mae=test_report.mae, mae_std=test_report.mae_std)
                logger.info("ablation %s seed %d %s: R2x100 %.2f MAE %.3f",
                            prepared.name, seed, mode, test_report.r2_x100, test_report.mae)
    rows = ablation_table(runs, modes)
    write_json(out / ABLATION_FILE, {"modes": modes, "seeds": seeds,
                                      "alpha_override": ablation.alpha_override,
                                      "table": rows, "runs": runs})
    text = render_ablation(rows, seeds)
    (out / ABLATION_TEXT_FILE).write_text(text)
    print(text, end="")
    return out


def cmd_gridsearch(run_cfg: RunConfig) -> list[Path]:
    if not run_cfg.grid:
        raise ConfigError("gridsearch needs a non-empty 'grid' section")
    expand_grid(run_cfg.grid)
    out = make_output_dir(run_cfg.out_path)
    base_cfg = run_cfg.train_config()
    prepared_all = list(prepare_targets(run_cfg))
    written = []
    for prepared in prepared_all:
        target_out = _target_dir(out, prepared.name, len(prepared_all))
        best_cfg, report, best_ckpt = grid_search(prepared.bundle, base_cfg, run_cfg.grid, prepared.scaler)
        best_ckpt.save(target_out / CHECKPOINT_FILE)
        write_json(target_out / GRIDSEARCH_FILE, {
            "target": prepared.name,
            "grid": run_cfg.grid,
            "n_points": len(report.points),
            "best_index": report.best_index,
            "best_config": best_cfg,
            "points": report.points,
        })
        best = report.best
        print(f"{prepared.name}: best of {len(report.points)} grid points is #{best.index} "
              f"{best.params} with validation R2x100 {best.val_r2_x100:.1f}")
        written.append(target_out)
    return written


def cmd_synth(run_cfg: RunConfig) -> list[Path]:
    syn_cfg = run_cfg.synthetic_config()
    out = make_output_dir(run_cfg.out_path)
    bundle, oracle = synth_domains(syn_cfg)
    written = export_synthetic(bundle, oracle, syn_cfg, out)
    print(f"wrote {len(written)} files to {out}")
    return written


COMMANDS = {
    "train": cmd_train,
    "ablate": cmd_ablate,
    "gridsearch": cmd_gridsearch,
    "synth": cmd_synth,
}


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histcal",
        description="Histogram-loss calibration with weighted min-max entropy domain adaptation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "Train one model per target and evaluate on the target test split",
        "ablate": "Run every ablation mode on identical splits and seeds",
        "gridsearch": "Search TrainConfig values, selecting on target validation R2",
        "synth": "Write the synthetic domain-shift benchmark as feature CSVs",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument('--config', type=Path, required=True, help='JSON run config file')
        p.add_argument('--out', type=Path, default=None,
                       help='Output directory (overrides output_dir in the config)')
        p.add_argument('--seed', type=int, default=None, help='Run seed (overrides seed in the config)')
        p.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                       default='WARNING', help='Set logging level')
    return parser


def run_command(args: argparse.Namespace):
    run_cfg = RunConfig.load(args.config, seed=args.seed, output_dir=args.out)
    return COMMANDS[args.command](run_cfg)


def main(argv=None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    setup_logging(default_level=args.log_level, more_loggers=[logger])
    handler = TopErrorHandler(logger=logger)
    handler.clean_shutdown = RemovePartialOutputs(handler)
    return handler.run(run_command, args)


if __name__ == "__main__":
    sys.exit(main())
