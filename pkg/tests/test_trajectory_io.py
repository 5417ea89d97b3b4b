import pickle

import numpy as np
import pandas as pd
import pytest

from modelvalidity.errors import DataError, TrajectoryParseError
from modelvalidity.trajectory import (
    SENSOR_COLUMNS,
    TRUTH_COLUMNS,
    Trajectory,
    list_bundles,
    read_trajectory,
    write_trajectory,
)


def _trajectory(name="unit", n=40, seed=0):
    rng = np.random.default_rng(seed)
    truth = pd.DataFrame(rng.normal(size=(n, len(TRUTH_COLUMNS))), columns=TRUTH_COLUMNS)
    truth["t"] = np.arange(n) * 0.01
    sensors = pd.DataFrame(rng.normal(size=(n // 2, len(SENSOR_COLUMNS))), columns=SENSOR_COLUMNS)
    sensors["t"] = np.arange(n // 2) * 0.02
    return Trajectory(name=name, truth=truth, sensors=sensors, meta={"name": name, "seed": seed})


def test_bundle_survives_disk_at_full_precision(tmp_path):
    traj = _trajectory()
    traj.truth.loc[3, "Vy"] = 0.1 + 0.2  # needs all 17 significant digits
    write_trajectory(traj, tmp_path / "unit")
    back = read_trajectory(tmp_path / "unit")
    assert back.equals(traj)
    assert back.truth.loc[3, "Vy"] == 0.1 + 0.2


def test_write_returns_the_bundle_files(tmp_path):
    paths = write_trajectory(_trajectory(), tmp_path / "b")
    assert [p.name for p in paths] == ["truth.csv", "sensors.csv", "meta.json"]
    assert (tmp_path / "b" / "truth.csv").read_text().splitlines()[0] == ",".join(TRUTH_COLUMNS)


def test_frames_are_typed_rows():
    traj = _trajectory()
    frame = traj.truth_frame(2)
    assert frame.t == pytest.approx(0.02)
    assert frame.Vx == traj.truth["Vx"].iloc[2]
    control = traj.sensor_frame(1).control()
    assert control.delta == traj.sensors["delta"].iloc[1]
    assert control.w_rr == traj.sensors["w_rr"].iloc[1]


def test_missing_column_names_the_column(tmp_path):
    traj = _trajectory()
    write_trajectory(traj, tmp_path / "b")
    traj.truth.drop(columns=["yaw_rate"]).to_csv(tmp_path / "b" / "truth.csv", index=False)
    with pytest.raises(TrajectoryParseError, match="yaw_rate") as info:
        read_trajectory(tmp_path / "b")
    assert info.value.column == "yaw_rate"
    assert info.value.line == 1


def test_non_numeric_value_reports_its_line(tmp_path):
    write_trajectory(_trajectory(), tmp_path / "b")
    path = tmp_path / "b" / "sensors.csv"
    lines = path.read_text().splitlines()
    row = lines[5].split(",")
    row[2] = "oops"
    lines[5] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TrajectoryParseError) as info:
        read_trajectory(tmp_path / "b")
    assert info.value.line == 6
    assert info.value.column == "ay_meas"
    assert "line 6" in str(info.value)


def test_timestamps_must_increase(tmp_path):
    traj = _trajectory()
    traj.truth.loc[10, "t"] = traj.truth.loc[9, "t"]
    write_trajectory(traj, tmp_path / "b")
    with pytest.raises(TrajectoryParseError, match="strictly increasing") as info:
        read_trajectory(tmp_path / "b")
    assert info.value.line == 12


def test_empty_file_is_a_parse_error(tmp_path):
    write_trajectory(_trajectory(), tmp_path / "b")
    (tmp_path / "b" / "truth.csv").write_text("")
    with pytest.raises(TrajectoryParseError):
        read_trajectory(tmp_path / "b")


def test_missing_bundle_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        read_trajectory(tmp_path / "nowhere")


def test_external_csv_without_meta_is_ingested(tmp_path):
    traj = _trajectory(name="recorded")
    bundle = tmp_path / "recorded"
    bundle.mkdir()
    traj.truth.to_csv(bundle / "truth.csv", index=False, float_format="%.17g")
    traj.sensors.to_csv(bundle / "sensors.csv", index=False, float_format="%.17g")
    back = read_trajectory(bundle)
    assert back.name == "recorded"
    assert back.meta == {}
    pd.testing.assert_frame_equal(back.truth, traj.truth)
    pd.testing.assert_frame_equal(back.sensors, traj.sensors)


def test_extra_columns_are_ignored(tmp_path):
    traj = _trajectory()
    write_trajectory(traj, tmp_path / "b")
    extended = traj.truth.assign(comment=1.0)
    extended.to_csv(tmp_path / "b" / "truth.csv", index=False, float_format="%.17g")
    assert list(read_trajectory(tmp_path / "b").truth.columns) == TRUTH_COLUMNS


def test_list_bundles_is_sorted_and_skips_stray_dirs(tmp_path):
    for name in ("b", "a"):
        write_trajectory(_trajectory(name=name), tmp_path / name)
    (tmp_path / "notes").mkdir()
    assert [p.name for p in list_bundles(tmp_path)] == ["a", "b"]
    assert list_bundles(tmp_path / "missing") == []


def test_parse_error_pickles():
    exc = TrajectoryParseError("x/truth.csv", "bad", line=4, column="t")
    clone = pickle.loads(pickle.dumps(exc))
    assert (clone.path, clone.line, clone.column, str(clone)) == (exc.path, exc.line, exc.column, str(exc))
