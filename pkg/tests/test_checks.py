import json
import pickle

import pandas as pd
import pytest

from modelvalidity.checks import validate_bundle, validate_domain_report, validate_run
from modelvalidity.errors import (
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_USAGE,
    AlignmentError,
    ConfigError,
    FilterFault,
    IntegrationFault,
    PlantEnvelopeError,
    TireLoadError,
)
from modelvalidity.plant import ManeuverSpec
from modelvalidity.trajectory import write_trajectory
from modelvalidity.validity import DOMAIN_COLUMNS, ModelId, TrajectoryErrors, compare_trajectory, split_by_domain

SHORT = ManeuverSpec("slalom", 3.0, duration=2.0)


@pytest.fixture
def bundle(tmp_path, model_trajectory):
    traj = model_trajectory("dbm-linear", spec=SHORT, name="b")
    traj.meta["realized_ay_max"] = traj.ay_max
    write_trajectory(traj, tmp_path / "trajectories" / "b")
    return tmp_path / "trajectories" / "b"


def _report(tmp_path, traj_errors):
    report = split_by_domain(traj_errors)
    path = tmp_path / "validity_domain_report.csv"
    report.domain[DOMAIN_COLUMNS].to_csv(path, index=False)
    return path


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------


def test_valid_bundle_passes(bundle):
    r = validate_bundle(bundle)
    assert r.failed == 0
    assert r.warned == 0
    assert r.target == "bundle b"
    assert set(r.by_check()) == {"schema", "grid", "sensor_count", "provenance"}
    assert "[PASS] bundle b" in r.summary()


def test_meta_ay_max_must_match_the_truth(bundle):
    meta_path = bundle / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["realized_ay_max"] += 0.01
    meta_path.write_text(json.dumps(meta))
    r = validate_bundle(bundle)
    assert r.failed == 1
    assert r.failing_checks == ["provenance"]
    assert r.by_check()["grid"] == "pass"
    summary = r.summary()
    assert "[FAIL]" in summary
    assert "failing: provenance" in summary
    assert "❌ [provenance] Recorded a_y^max" in summary


def test_short_sensor_stream_only_warns(bundle):
    sensors = pd.read_csv(bundle / "sensors.csv")
    sensors.iloc[:-3].to_csv(bundle / "sensors.csv", index=False, float_format="%.17g")
    r = validate_bundle(bundle)
    assert r.failed == 0
    assert r.warned == 1
    assert r.by_check()["sensor_count"] == "warn"


def test_unreadable_bundle_fails(bundle):
    (bundle / "truth.csv").write_text("t,Vx\n0,1\n")
    r = validate_bundle(bundle)
    assert r.failed == 1
    assert r.passed == 0
    assert r.failing_checks == ["schema"]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def test_domain_report_from_real_errors_passes(tmp_path, model_trajectory):
    traj = model_trajectory("dbm-pacejka", spec=SHORT)
    errors = compare_trajectory(traj, "dbm-linear")
    steps = tmp_path / "step_errors"
    steps.mkdir()
    errors.assign(model="dbm-linear").to_csv(steps / "t.csv", index=False)
    path = _report(tmp_path, [TrajectoryErrors(traj.name, ModelId.DBM_LINEAR, traj.ay_max, errors)])
    r = validate_domain_report(path, [steps / "t.csv"], "step_errors")
    assert r.failed == 0
    # one domain is empty for a single trajectory
    assert r.warned == 1


def test_missing_rows_fail_the_cardinality_check(tmp_path, model_trajectory):
    traj = model_trajectory("dbm-linear", spec=SHORT)
    errors = compare_trajectory(traj, "dbm-linear")
    path = _report(tmp_path, [TrajectoryErrors(traj.name, ModelId.DBM_LINEAR, traj.ay_max, errors)])
    pd.read_csv(path).iloc[:-1].to_csv(path, index=False)
    r = validate_domain_report(path, [], "step_errors")
    assert "cardinality" in r.failing_checks


def test_negative_mae_fails(tmp_path, model_trajectory):
    traj = model_trajectory("dbm-linear", spec=SHORT)
    errors = compare_trajectory(traj, "dbm-linear")
    path = _report(tmp_path, [TrajectoryErrors(traj.name, ModelId.DBM_LINEAR, traj.ay_max, errors)])
    df = pd.read_csv(path)
    df.loc[0, "mae"] = -1.0
    df.to_csv(path, index=False)
    r = validate_domain_report(path, [], "step_errors")
    assert r.failed == 1
    assert r.failing_checks == ["non_negative"]


def test_missing_report_fails(tmp_path):
    r = validate_domain_report(tmp_path / "absent.csv", [], "step_errors")
    assert r.failed == 1


def test_empty_run_directory_fails(tmp_path):
    (result,) = validate_run(tmp_path)
    assert result.failed == 1
    assert result.failing_checks == ["run"]


def test_run_validates_every_bundle(bundle):
    results = validate_run(bundle.parent.parent)
    assert len(results) == 1
    assert results[0].failed == 0


# ---------------------------------------------------------------------------
# Error families
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "exc,code",
    [
        (ConfigError("bad"), EXIT_USAGE),
        (TireLoadError("negative load"), EXIT_USAGE),
        (AlignmentError("off grid"), EXIT_DATA),
        (IntegrationFault("non-finite derivative"), EXIT_NUMERICAL),
        (FilterFault("singular S", step=3), EXIT_NUMERICAL),
    ],
)
def test_exit_codes_follow_the_error_family(exc, code):
    assert exc.exit_code == code


@pytest.mark.parametrize(
    "exc",
    [
        IntegrationFault("non-finite derivative", state=(1.0, 2.0)),
        PlantEnvelopeError("roll beyond the envelope", t=1.25, state=(0.5,)),
        FilterFault("singular S", step=12, condition=1e13),
    ],
)
def test_numerical_faults_survive_pickling(exc):
    clone = pickle.loads(pickle.dumps(exc))
    assert type(clone) is type(exc)
    assert str(clone) == str(exc)


def test_envelope_error_names_the_time():
    assert str(PlantEnvelopeError("roll beyond the envelope", t=1.25)).startswith("t=1.250s")
