import logging

import numpy as np
import pytest

from histcal.data.sensors import (SENSOR_COLUMNS, FeatureMatrix, FeatureRecipe, RecipeKind, clean,
                                  derive_features, feature_csv_columns, load_csv, load_feature_csv)
from histcal.utils.errors import ConfigError, DataError, DimensionError
from histcal.utils.time_utils import hourly_range
from tests.test_utils import make_fm, sensor_rows, write_sensor_csv

logger = logging.getLogger('test_code')


def sensor_stamps(n: int):
    return hourly_range("2024-01-01T00:00:00", n)


def test_load_valid_csv(tmp_path):
    path = write_sensor_csv(tmp_path / "site.csv", sensor_rows(30))
    frame = load_csv(path)
    assert len(frame) == 30
    assert list(frame.table.columns) == SENSOR_COLUMNS
    assert frame.timestamps[0] == np.datetime64("2024-01-01T00:00:00")
    assert frame.drop_counts["malformed"] == 0


def test_load_skips_malformed_and_unordered_rows(tmp_path, caplog):
    rows = sensor_rows(10)
    rows[2][1] = "abc"
    rows[5][0] = "not-a-time"
    rows[7][0] = rows[3][0]  # goes back in time
    path = write_sensor_csv(tmp_path / "site.csv", rows)
    with caplog.at_level(logging.WARNING, logger="SensorData"):
        frame = load_csv(path)
    assert len(frame) == 7
    assert frame.drop_counts["malformed"] == 3
    assert "skipped 3" in caplog.text
    assert np.all(np.diff(frame.timestamps.astype(np.int64)) > 0)


def test_full_precision_values_read_back_exactly(tmp_path):
    rng = np.random.default_rng(5)
    values = rng.uniform(0, 500, size=(200, 5))
    rows = [[str(ts) + "Z"] + [repr(float(v)) for v in row]
            for ts, row in zip(sensor_stamps(200), values)]
    frame = load_csv(write_sensor_csv(tmp_path / "site.csv", rows))
    assert len(frame) == 200
    assert np.array_equal(frame.table[SENSOR_COLUMNS[1:]].to_numpy(), values)


def test_full_precision_feature_file_reads_back_exactly(tmp_path):
    rng = np.random.default_rng(6)
    X = rng.standard_normal((50, 3)) * 1e3
    y = rng.uniform(0, 500, size=50)
    rows = [[str(ts)] + [repr(float(v)) for v in x] + [repr(float(t))]
            for ts, x, t in zip(sensor_stamps(50), X, y)]
    path = write_sensor_csv(tmp_path / "feat.csv", rows, header=feature_csv_columns(3))
    fm = load_feature_csv(path)
    assert np.array_equal(fm.X, X)
    assert np.array_equal(fm.y, y)


def test_blank_reference_kept_as_nan(tmp_path):
    path = write_sensor_csv(tmp_path / "site.csv", sensor_rows(5, with_ref=False))
    frame = clean(load_csv(path))
    assert len(frame) == 5
    assert frame.table["ref_pm25"].isna().all()


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")
    bad = write_sensor_csv(tmp_path / "bad.csv", sensor_rows(3), header=["time", "a", "b", "c", "d", "e"])
    with pytest.raises(DataError):
        load_csv(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError):
        load_csv(empty)


def test_clean_drops_missing_and_out_of_range(tmp_path):
    rows = sensor_rows(8)
    rows[1][3] = ""         # temperature missing
    rows[2][1] = "-1.0"     # negative pm25
    rows[3][2] = "1500"     # pm10 above clip
    rows[4][5] = "2000"     # reference above clip
    frame = clean(load_csv(write_sensor_csv(tmp_path / "site.csv", rows)))
    assert len(frame) == 4
    assert frame.drop_counts["missing"] == 1
    assert frame.drop_counts["out_of_range"] == 3
    pm = frame.table[["pm25_lcs", "pm10_lcs"]].to_numpy()
    assert np.all((pm >= 0) & (pm <= 1000))


def test_clean_custom_clip(tmp_path):
    frame = load_csv(write_sensor_csv(tmp_path / "site.csv", sensor_rows(10)))
    assert len(clean(frame, clip_hi=5.0)) == 0
    with pytest.raises(ConfigError):
        clean(frame, clip_hi=0.0)


def test_default_recipe_has_27_features(tmp_path):
    frame = clean(load_csv(write_sensor_csv(tmp_path / "site.csv", sensor_rows(60))))
    fm = derive_features(frame)
    assert fm.n_features == 27
    assert len(FeatureRecipe().feature_names()) == 27
    # the 24 hour window needs 23 rows of history
    assert len(fm) == 60 - 23
    assert fm.timestamps[0] == np.datetime64("2024-01-01T23:00:00")
    assert np.all(np.isfinite(fm.X))


def test_default_features_values(tmp_path):
    frame = clean(load_csv(write_sensor_csv(tmp_path / "site.csv", sensor_rows(40, seed=3))))
    fm = derive_features(frame)
    names = fm.feature_names
    raw = frame.table
    i = 10                  # feature row
    r = i + 23              # matching raw row
    pm25 = raw["pm25_lcs"].to_numpy()
    assert fm.X[i, names.index("pm25_lcs")] == pm25[r]
    assert fm.X[i, names.index("pm25_lcs_mean3")] == pytest.approx(pm25[r - 2:r + 1].mean(), rel=1e-12)
    assert fm.X[i, names.index("pm25_lcs_mean24")] == pytest.approx(pm25[r - 23:r + 1].mean(), rel=1e-12)
    ratio = pm25[r] / (raw["pm10_lcs"].to_numpy()[r] + 1e-6)
    assert fm.X[i, names.index("pm25_pm10_ratio")] == pytest.approx(ratio, rel=1e-12)
    hour = r % 24
    assert fm.X[i, names.index("hour_sin")] == pytest.approx(np.sin(2 * np.pi * hour / 24), abs=1e-12)
    assert fm.y[i] == raw["ref_pm25"].to_numpy()[r]
    assert fm.uncalibrated[i] == pm25[r]


def test_recipe_windows_change_width():
    recipe = FeatureRecipe(windows=(2,))
    assert len(recipe.feature_names()) == 4 + 4 + 7
    with pytest.raises(ConfigError):
        FeatureRecipe(windows=(0,))


def test_passthrough_feature_file(tmp_path):
    rows = [["2024-01-01T00:00:00Z", "1.5", "2.0", "10.0"],
            ["2024-01-01T01:00:00Z", "1.0", "x", "11.0"],
            ["2024-01-01T02:00:00Z", "0.5", "3.0", ""]]
    path = write_sensor_csv(tmp_path / "feat.csv", rows, header=feature_csv_columns(2))
    recipe = FeatureRecipe(kind=RecipeKind.passthrough, uncalibrated_column="f1")
    fm = derive_features(load_feature_csv(path, recipe), recipe)
    assert fm.feature_names == ["f1", "f2"]
    assert len(fm) == 2
    assert np.array_equal(fm.X, [[1.5, 2.0], [0.5, 3.0]])
    assert fm.y[0] == 10.0 and np.isnan(fm.y[1])
    assert np.array_equal(fm.uncalibrated, [1.5, 0.5])


def test_passthrough_errors(tmp_path):
    path = write_sensor_csv(tmp_path / "feat.csv", [["2024-01-01T00:00:00", "1", "2"]],
                            header=["timestamp", "a", "ref_pm25"])
    with pytest.raises(DataError):
        load_feature_csv(path)
    good = write_sensor_csv(tmp_path / "good.csv", [["2024-01-01T00:00:00", "1", "2"]],
                            header=feature_csv_columns(1))
    with pytest.raises(ConfigError):
        load_feature_csv(good, FeatureRecipe(kind=RecipeKind.passthrough, uncalibrated_column="f9"))
    with pytest.raises(ConfigError):
        derive_features(load_feature_csv(good), FeatureRecipe())


def test_feature_matrix_validation():
    with pytest.raises(DimensionError):
        make_fm(np.zeros((3, 2)), y=np.zeros(2))
    with pytest.raises(DimensionError):
        make_fm(np.zeros((3, 2)), names=["a"])
    with pytest.raises(DimensionError):
        FeatureMatrix(X=np.zeros(3), feature_names=["a"], timestamps=np.zeros(3, dtype="datetime64[s]"))


def test_feature_matrix_helpers():
    fm = make_fm(np.arange(8.0).reshape(4, 2), y=[1.0, np.nan, 3.0, 4.0])
    kept = fm.labeled_rows()
    assert len(kept) == 3
    assert np.array_equal(kept.X[:, 0], [0.0, 4.0, 6.0])
    assert fm.without_labels().y is None
    with pytest.raises(DataError):
        fm.without_labels().labeled_rows()
