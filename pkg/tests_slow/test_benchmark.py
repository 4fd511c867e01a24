#!/usr/bin/env python
"""
tests_slow/test_benchmark.py
Synthetic shift-and-gap benchmark: five modes over five seeds with the shipped ablation config.

The ablation artifacts are kept under the pytest temp directory and their path
is logged, so a missed margin can be inspected after the run.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pytest

from histcal.cli import ABLATION_FILE, ABLATION_TEXT_FILE, CHECKPOINT_FILE, REPORT_FILE, cmd_ablate, cmd_train
from histcal.run_config import RunConfig

logger = logging.getLogger("test_code")

CONFIGS = Path(__file__).parents[1] / "configs"
# R2 x 100 points the full method should gain over plain histogram loss, in median
MIN_MARGIN = 2.0


@pytest.fixture(scope="module")
def ablation(tmp_path_factory):
    out = tmp_path_factory.mktemp("benchmark") / "ablate"
    run_cfg = RunConfig.load(CONFIGS / "synthetic_ablate.json", output_dir=out)
    cmd_ablate(run_cfg)
    logger.warning("benchmark ablation artifacts in %s", out)
    return out, json.loads((out / ABLATION_FILE).read_text())


def medians(result) -> dict[str, float]:
    return {row["mode"]: row["r2_x100"] for row in result["table"]}


@pytest.mark.slow
def test_ablation_runs_complete(ablation):
    out, result = ablation
    assert (out / ABLATION_TEXT_FILE).exists()
    assert result["seeds"] == [0, 1, 2, 3, 4]
    assert len(result["runs"]) == 25
    assert all(row["n_failed"] == 0 for row in result["table"])
    assert all(np.isfinite(v) for v in medians(result).values())


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="margin depends on the synthetic draw; artifacts kept for inspection")
def test_weighted_min_max_beats_baselines(ablation):
    _, result = ablation
    r2 = medians(result)
    logger.warning("median target-test R2 x100 per mode: %s", r2)
    assert r2["HL_WMME"] >= r2["HL_MME"]
    assert r2["HL_WMME"] >= r2["HL"]
    assert r2["HL_WMME"] - r2["HL"] >= MIN_MARGIN


@pytest.mark.slow
def test_train_run_is_reproducible(tmp_path):
    outs = []
    for name in ("a", "b"):
        run_cfg = RunConfig.load(CONFIGS / "synthetic_train.json", output_dir=tmp_path / name)
        cmd_train(run_cfg)
        outs.append(tmp_path / name)
    a, b = outs
    assert (a / CHECKPOINT_FILE).read_bytes() == (b / CHECKPOINT_FILE).read_bytes()
    assert (a / REPORT_FILE).read_text() == (b / REPORT_FILE).read_text()
