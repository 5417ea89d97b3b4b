import math

import numpy as np
import pandas as pd
import pytest

from modelvalidity.errors import AlignmentError, DataError, ParameterError
from modelvalidity.plant import ManeuverSpec, NoiseSigmas, generate_maneuver, sample_sensors
from modelvalidity.trajectory import Trajectory
from modelvalidity.validity import (
    DEFAULT_THRESHOLD,
    DOMAINS,
    CandidateModel,
    ModelId,
    TrajectoryErrors,
    compare_trajectory,
    domain_of,
    evaluate_trajectory,
    model_controls,
    one_step_residuals,
    pct_change,
    percent_increase,
    split_by_domain,
)

ERROR_COLUMNS = ["e_Vx", "e_Vy", "e_yaw_rate"]


def _errors(name, ay_max, values, model=ModelId.DBM_LINEAR):
    values = np.asarray(values, dtype=float)
    frame = pd.DataFrame({col: values for col in ERROR_COLUMNS})
    return TrajectoryErrors(name, model, ay_max, frame)


# ---------------------------------------------------------------------------
# Model ids
# ---------------------------------------------------------------------------


def test_model_ids_and_labels():
    assert [m.value for m in ModelId] == ["dbm-linear", "dbm-dugoff", "dbm-pacejka", "fwm-pacejka"]
    assert ModelId.DBM_LINEAR.label == "DBM-Linear"
    assert ModelId.FWM_PACEJKA.label == "4WM-Pacejka"
    assert ModelId.FWM_PACEJKA.four_wheel and not ModelId.DBM_PACEJKA.four_wheel


def test_parse_list_is_canonical_and_checked():
    assert ModelId.parse_list("fwm-pacejka, dbm-linear") == (ModelId.DBM_LINEAR, ModelId.FWM_PACEJKA)
    assert ModelId.parse_list(None) == tuple(ModelId)
    with pytest.raises(ParameterError, match="unknown model id"):
        ModelId.parse_list("dbm-linear,brush")
    with pytest.raises(ParameterError):
        ModelId.parse_list(" , ")


def test_candidate_binds_the_matching_tire():
    assert CandidateModel(ModelId.DBM_DUGOFF).tire.variant.value == "dugoff"
    assert CandidateModel("fwm-pacejka").model_id is ModelId.FWM_PACEJKA
    with pytest.raises(ParameterError):
        CandidateModel(ModelId.DBM_LINEAR, dt=0.0)


# ---------------------------------------------------------------------------
# Model-generated data
# ---------------------------------------------------------------------------


def test_model_trajectory_layout(model_trajectory):
    traj = model_trajectory("dbm-linear", spec=ManeuverSpec("slalom", 3.0, duration=2.0))
    assert len(traj.sensors) == 101
    assert len(traj.truth) == 202
    np.testing.assert_array_equal(traj.truth["t"].to_numpy()[::2], traj.sensors["t"].to_numpy())
    # odd rows are midpoints of their neighbours
    mid = 0.5 * (traj.truth["Vy"].iloc[0] + traj.truth["Vy"].iloc[2])
    assert traj.truth["Vy"].iloc[1] == pytest.approx(mid)


def test_model_controls_respect_the_steering_stop():
    model = CandidateModel(ModelId.DBM_PACEJKA)
    controls = model_controls(ManeuverSpec("step_steer", 10.5, initial_speed=5.0, duration=3.0), model)
    assert max(abs(c.delta) for c in controls) <= model.vehicle.steer_limit


# ---------------------------------------------------------------------------
# One-step comparison
# ---------------------------------------------------------------------------


def test_model_compared_against_its_own_data_has_zero_error(candidate, model_trajectory):
    traj = model_trajectory(candidate)
    errors = compare_trajectory(traj, candidate)
    assert errors[ERROR_COLUMNS].mean().max() < 1e-6


def test_comparison_has_one_row_fewer_than_sensor_frames(model_trajectory):
    traj = model_trajectory("dbm-dugoff", spec=ManeuverSpec("slalom", 3.0, duration=4.0))
    errors = compare_trajectory(traj, "dbm-linear")
    assert len(errors) == len(traj.sensors) - 1
    assert (errors[ERROR_COLUMNS] >= 0).all().all()
    np.testing.assert_allclose(errors["t"], traj.sensors["t"].iloc[1:])


def test_each_step_only_depends_on_its_own_frames(model_trajectory):
    traj = model_trajectory("fwm-pacejka", noise=NoiseSigmas(), seed=1)
    full = one_step_residuals(traj, "dbm-pacejka")
    k = 137
    piece = Trajectory(
        "piece",
        traj.truth.iloc[2 * k: 2 * k + 3].reset_index(drop=True),
        traj.sensors.iloc[k: k + 2].reset_index(drop=True),
    )
    single = one_step_residuals(piece, "dbm-pacejka")
    assert len(single) == 1
    np.testing.assert_array_equal(single.iloc[0].to_numpy(), full.iloc[k].to_numpy())


def test_abs_errors_match_signed_residuals(model_trajectory):
    traj = model_trajectory("dbm-pacejka", spec=ManeuverSpec("slalom", 5.0, duration=4.0))
    signed = one_step_residuals(traj, "dbm-linear")
    absolute = compare_trajectory(traj, "dbm-linear")
    np.testing.assert_array_equal(absolute[ERROR_COLUMNS], signed[ERROR_COLUMNS].abs())


def test_sensor_frame_off_the_truth_grid_is_rejected(model_trajectory):
    traj = model_trajectory("dbm-linear", spec=ManeuverSpec("slalom", 3.0, duration=2.0))
    traj.sensors.loc[20, "t"] += 0.005
    with pytest.raises(AlignmentError, match="sensor frame 20"):
        compare_trajectory(traj, "dbm-linear")


def test_short_truth_stream_is_rejected(model_trajectory):
    traj = model_trajectory("dbm-linear", spec=ManeuverSpec("slalom", 3.0, duration=2.0))
    clipped = Trajectory("clipped", traj.truth.iloc[:100], traj.sensors)
    with pytest.raises(AlignmentError):
        compare_trajectory(clipped, "dbm-linear")


def test_single_sensor_frame_is_a_data_error(model_trajectory):
    traj = model_trajectory("dbm-linear", spec=ManeuverSpec("slalom", 3.0, duration=2.0))
    single = Trajectory("single", traj.truth.iloc[:2], traj.sensors.iloc[:1])
    with pytest.raises(DataError, match="at least 2"):
        compare_trajectory(single, "dbm-linear")


def test_numerical_fault_is_isolated_to_its_trajectory(model_trajectory):
    traj = model_trajectory("dbm-linear", spec=ManeuverSpec("slalom", 3.0, duration=2.0))
    traj.truth.loc[40, "Vx"] = 250.0
    result = evaluate_trajectory(traj, CandidateModel(ModelId.DBM_LINEAR))
    assert result.failed
    assert result.errors is None
    assert "envelope" in result.failure


# ---------------------------------------------------------------------------
# Domain split
# ---------------------------------------------------------------------------


def test_domain_boundary_belongs_below():
    assert domain_of(DEFAULT_THRESHOLD) == DOMAINS[0]
    assert domain_of(DEFAULT_THRESHOLD + 1e-9) == DOMAINS[1]
    assert domain_of(3.0, threshold=2.0) == DOMAINS[1]


def test_single_trajectory_report_is_its_own_mae():
    report = split_by_domain([_errors("a", 3.0, [0.1, 0.2, 0.3])])
    row = report.row("dbm-linear", "Vy", DOMAINS[0])
    assert row["mae"] == pytest.approx(0.2)
    assert row["n"] == 3
    assert report.empty_domains() == [DOMAINS[1]]
    above = report.row("dbm-linear", "Vy", DOMAINS[1])
    assert above["n"] == 0 and math.isnan(above["mae"])
    assert math.isnan(row["pct_increase"])


def test_report_has_every_model_variable_domain_row():
    results = [
        _errors("a", 2.0, [0.1, 0.1], ModelId.DBM_LINEAR),
        _errors("b", 8.0, [0.4], ModelId.DBM_LINEAR),
        _errors("a", 2.0, [0.05], ModelId.FWM_PACEJKA),
    ]
    report = split_by_domain(results)
    assert len(report.domain) == 2 * 3 * 2
    assert set(report.domain["model"]) == {"dbm-linear", "fwm-pacejka"}


def test_domain_counts_are_conserved():
    rng = np.random.default_rng(0)
    results = [
        _errors(f"t{i}", ay, rng.uniform(0, 1, size=10 + i))
        for i, ay in enumerate(np.linspace(2.0, 10.1, 12))
    ]
    report = split_by_domain(results)
    total = sum(len(r.errors) for r in results)
    for var in ("Vx", "Vy", "yaw_rate"):
        assert report.domain.loc[report.domain["variable"] == var, "n"].sum() == total


def test_domains_pool_steps_not_trajectory_means():
    report = split_by_domain([_errors("a", 2.0, [1.0]), _errors("b", 3.0, [0.0, 0.0, 0.0])])
    assert report.mae("dbm-linear", "Vx", DOMAINS[0]) == pytest.approx(0.25)


def test_percent_increase_from_the_two_domains():
    report = split_by_domain([_errors("a", 2.0, [1.0]), _errors("b", 8.0, [1.627])])
    pct = percent_increase(report)
    assert len(pct) == 3
    assert pct["pct_increase"].iloc[0] == pytest.approx(62.7)
    assert report.row("dbm-linear", "Vx", DOMAINS[0])["pct_increase"] == pytest.approx(62.7)


def test_per_trajectory_rows_are_sorted_by_ay_max():
    report = split_by_domain([_errors("hi", 9.0, [0.3]), _errors("lo", 2.0, [0.1])])
    per = report.per_trajectory
    assert list(per["trajectory"]) == ["lo"] * 3 + ["hi"] * 3
    assert list(per["variable"][:3]) == ["Vx", "Vy", "yaw_rate"]


def test_failed_runs_are_listed_not_pooled():
    failed = TrajectoryErrors("bad", ModelId.DBM_LINEAR, 5.0, None, "state left the envelope")
    report = split_by_domain([_errors("a", 2.0, [0.1]), failed])
    assert list(report.failures["trajectory"]) == ["bad"]
    assert report.domain["n"].sum() == 3


def test_threshold_must_be_positive():
    with pytest.raises(ParameterError):
        split_by_domain([_errors("a", 2.0, [0.1])], threshold=0.0)


@pytest.mark.parametrize(
    "below,above,expected",
    [(1.0, 1.627, 62.7), (0.5, 0.5, 0.0), (2.0, 1.0, -50.0)],
)
def test_pct_change(below, above, expected):
    assert pct_change(below, above) == pytest.approx(expected)


@pytest.mark.parametrize("below,above", [(0.0, 1.0), (1e-15, 1.0), (float("nan"), 1.0), (1.0, float("nan"))])
def test_pct_change_is_nan_when_undefined(below, above):
    assert math.isnan(pct_change(below, above))


# ---------------------------------------------------------------------------
# Against the plant
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_linear_tire_degrades_above_the_threshold():
    maneuver = generate_maneuver(ManeuverSpec("step_steer", 8.0, duration=8.0, seed=2))
    sensors = sample_sensors(maneuver.run.truth, maneuver.run.signals, NoiseSigmas.zero(), seed=0)
    traj = Trajectory("high", maneuver.run.truth, sensors)
    assert traj.ay_max > DEFAULT_THRESHOLD
    linear = compare_trajectory(traj, "dbm-linear")["e_Vy"].mean()
    pacejka = compare_trajectory(traj, "dbm-pacejka")["e_Vy"].mean()
    assert linear > pacejka
