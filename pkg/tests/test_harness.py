import json
import shutil

import duckdb
import pandas as pd
import pytest

from modelvalidity.config import load_config
from modelvalidity.harness import MANIFEST, main, sha256_file

PIPELINE_YAML = """\
suite:
  maneuvers:
    - {name: low, kind: slalom, target_ay_max: 3.0, initial_speed: 20.0, duration: 6.0}
    - {name: high, kind: step_steer, target_ay_max: 7.0, initial_speed: 20.0, duration: 6.0}
seed: 11
jobs: 1
"""


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """One small run through simulate, compare, observe, report."""
    root = tmp_path_factory.mktemp("pipeline")
    config = root / "pipeline.yaml"
    config.write_text(PIPELINE_YAML)
    out = root / "run"
    common = ["--config", str(config), "--out", str(out)]
    codes = {cmd: main([cmd, *common]) for cmd in ("simulate", "compare", "observe", "report")}
    return {"config": config, "out": out, "common": common, "codes": codes}


def _run(pipeline, *args, out=None):
    target = out if out is not None else pipeline["out"]
    return main([*args, "--config", str(pipeline["config"]), "--out", str(target)])


# ---------------------------------------------------------------------------
# Happy path
# ---------------------------------------------------------------------------


def test_pipeline_commands_succeed(pipeline):
    assert pipeline["codes"] == {"simulate": 0, "compare": 0, "observe": 0, "report": 0}


def test_simulate_writes_bundles(pipeline):
    bundles = pipeline["out"] / "trajectories"
    for name in ("low", "high"):
        for f in ("truth.csv", "sensors.csv", "meta.json"):
            assert (bundles / name / f).exists()
    meta = json.loads((bundles / "high" / "meta.json").read_text())
    assert meta["maneuver"]["kind"] == "step_steer"
    assert meta["realized_ay_max"] > 4.905


def test_domain_report_has_24_rows(pipeline):
    domain = pd.read_csv(pipeline["out"] / "compare" / "validity_domain_report.csv")
    assert len(domain) == 24
    assert list(domain.columns) == ["model", "variable", "domain", "mae", "std", "n", "pct_increase"]
    assert (domain["n"] > 0).all()
    assert (domain["mae"] >= 0).all()


def test_step_errors_are_one_row_per_step_and_model(pipeline):
    out = pipeline["out"]
    sensors = pd.read_csv(out / "trajectories" / "low" / "sensors.csv")
    steps = pd.read_csv(out / "compare" / "step_errors" / "low.csv")
    assert len(steps) == 4 * (len(sensors) - 1)
    assert set(steps["model"]) == {"dbm-linear", "dbm-dugoff", "dbm-pacejka", "fwm-pacejka"}


def test_observer_outputs(pipeline):
    folder = pipeline["out"] / "observer"
    assert len(pd.read_csv(folder / "observer_domain_report.csv")) == 24
    noise = pd.read_csv(folder / "noise.csv")
    assert len(noise) == 8
    assert (noise[["Q_Vx", "Q_Vy", "Q_yaw_rate", "R_ax", "R_ay", "R_yaw_rate"]] >= 1e-8).all().all()
    assert (noise["nis_lo"] < noise["nis_hi"]).all()
    estimates = pd.read_csv(folder / "estimates" / "high__dbm-pacejka.csv")
    assert list(estimates.columns) == ["t", "Vx_hat", "Vy_hat", "yaw_rate_hat", "Vx_err", "Vy_err", "yaw_rate_err"]


def test_report_consolidates_both_sources(pipeline):
    report = pipeline["out"] / "report"
    consolidated = pd.read_csv(report / "consolidated_domain_report.csv")
    assert len(consolidated) == 48
    assert set(consolidated["source"]) == {"validity", "observer"}
    for png in ("validity_per_trajectory.png", "observer_domains.png", "tire_curves.png"):
        assert (report / png).stat().st_size > 0
    con = duckdb.connect(str(report / "modelvalidity.duckdb"), read_only=True)
    try:
        assert con.execute("SELECT count(*) FROM domain_report").fetchone()[0] == 48
        assert con.execute("SELECT count(*) FROM domain_overview").fetchone()[0] == 24
    finally:
        con.close()


def test_manifest_lists_every_output_with_its_hash(pipeline):
    out = pipeline["out"]
    manifest = json.loads((out / MANIFEST).read_text())
    assert manifest["config_hash"] == load_config(pipeline["config"], environ={}).config_hash
    assert set(manifest["trajectories"]) == {"low", "high"}
    assert all(t["status"] == "ok" for t in manifest["trajectories"].values())
    files = manifest["files"]
    for rel in ("trajectories/low/truth.csv", "compare/validity_domain_report.csv",
                "observer/noise.csv", "report/consolidated_domain_report.csv"):
        assert rel in files
    for rel, entry in files.items():
        assert sha256_file(out / rel) == entry["sha256"]


def test_validate_passes_on_the_run(pipeline):
    assert _run(pipeline, "validate") == 0


# ---------------------------------------------------------------------------
# Flags
# ---------------------------------------------------------------------------


def _copy_bundles(pipeline, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(pipeline["out"] / "trajectories", out / "trajectories")
    return out


def test_models_flag_limits_the_report(pipeline, tmp_path):
    out = _copy_bundles(pipeline, tmp_path)
    assert _run(pipeline, "compare", "--models", "dbm-linear", out=out) == 0
    domain = pd.read_csv(out / "compare" / "validity_domain_report.csv")
    assert len(domain) == 6
    assert set(domain["model"]) == {"dbm-linear"}


def test_explicit_default_threshold_is_byte_identical(pipeline, tmp_path):
    out = _copy_bundles(pipeline, tmp_path)
    assert _run(pipeline, "compare", "--threshold", "4.905", out=out) == 0
    for name in ("validity_domain_report.csv", "validity_per_trajectory.csv", "validity_pct_increase.csv"):
        assert (out / "compare" / name).read_bytes() == (pipeline["out"] / "compare" / name).read_bytes()


def test_env_var_sets_the_output_dir(pipeline, tmp_path, monkeypatch):
    out = _copy_bundles(pipeline, tmp_path)
    monkeypatch.setenv("MODELVALIDITY_OUT", str(out))
    assert main(["compare", "--config", str(pipeline["config"]), "--models", "dbm-linear"]) == 0
    assert (out / "compare" / "validity_domain_report.csv").exists()


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


def test_unknown_model_is_a_usage_error(tmp_path):
    assert main(["compare", "--models", "dbm-brush", "--out", str(tmp_path)]) == 1


def test_bad_arguments_exit_with_usage_code():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_missing_bundles_are_a_data_error(tmp_path):
    assert main(["compare", "--out", str(tmp_path / "empty")]) == 2


def test_unwritable_output_is_a_data_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    assert main(["compare", "--out", str(blocker / "run")]) == 2
    assert blocker.read_text() == "not a directory"


def test_report_without_inputs_is_a_data_error(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_validate_fails_on_a_tampered_bundle(pipeline, tmp_path):
    out = _copy_bundles(pipeline, tmp_path)
    meta_path = out / "trajectories" / "low" / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["realized_ay_max"] += 1.0
    meta_path.write_text(json.dumps(meta))
    assert _run(pipeline, "validate", out=out) == 2


@pytest.mark.slow
def test_self_check_passes(tmp_path):
    assert main(["self-check", "--out", str(tmp_path), "--models", "dbm-linear,fwm-pacejka"]) == 0
    rows = pd.read_csv(tmp_path / "self_check" / "self_check.csv")
    assert list(rows["model"]) == ["dbm-linear", "fwm-pacejka"]
    assert rows["passed"].all()
    assert (tmp_path / MANIFEST).exists()



# ---------------------------------------------------------------------------
# Reproducibility
# ---------------------------------------------------------------------------


def _report_csvs(out):
    return sorted(p.relative_to(out) for folder in ("compare", "observer", "report") for p in (out / folder).rglob("*.csv"))


@pytest.mark.slow
def test_full_pipeline_is_byte_identical_across_runs(pipeline, tmp_path):
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        for cmd in ("simulate", "compare", "observe", "report"):
            assert _run(pipeline, cmd, "--jobs", "2", out=out) == 0
        runs.append(out)

    first, second = runs
    names = _report_csvs(first)
    assert names == _report_csvs(second) == _report_csvs(pipeline["out"])
    assert len(names) > 10
    for rel in names:
        # a pooled run must also match the serial one
        expected = (pipeline["out"] / rel).read_bytes()
        assert (first / rel).read_bytes() == expected, rel
        assert (second / rel).read_bytes() == expected, rel


# ---------------------------------------------------------------------------
# Standard suite: shape of the validity gap
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def standard_run(tmp_path_factory):
    """The default 28-trajectory suite through simulate, compare, observe."""
    out = tmp_path_factory.mktemp("standard")
    codes = {cmd: main([cmd, "--out", str(out), "--jobs", "4"]) for cmd in ("simulate", "compare", "observe")}
    return {"out": out, "codes": codes}


def _vy(out, source):
    pct = pd.read_csv(out / source / f"{'validity' if source == 'compare' else 'observer'}_pct_increase.csv")
    return pct[pct["variable"] == "Vy"].set_index("model")


@pytest.mark.slow
def test_standard_suite_spans_both_domains(standard_run):
    assert len(load_config(environ={}).suite) == 28
    assert standard_run["codes"] == {"simulate": 0, "compare": 0, "observe": 0}
    domain = pd.read_csv(standard_run["out"] / "compare" / "validity_domain_report.csv")
    assert len(domain) == 24
    assert (domain["n"] > 0).all()


@pytest.mark.slow
def test_vy_error_grows_above_the_threshold(standard_run):
    vy = _vy(standard_run["out"], "compare")
    assert (vy["mae_above"] > vy["mae_below"]).all()
    above = vy["mae_above"]
    assert above["dbm-linear"] >= above["dbm-dugoff"] >= above["dbm-pacejka"]
    assert vy.loc["dbm-linear", "pct_increase"] > vy.loc["dbm-pacejka", "pct_increase"]


@pytest.mark.slow
def test_pacejka_observers_track_vy_best_above_the_threshold(standard_run):
    vy = _vy(standard_run["out"], "observer")
    pacejka = ["dbm-pacejka", "fwm-pacejka"]
    others = ["dbm-linear", "dbm-dugoff"]
    for model in pacejka:
        assert vy.loc["dbm-linear", "pct_increase"] > vy.loc[model, "pct_increase"]
    assert vy.loc[pacejka, "mae_above"].max() < vy.loc[others, "mae_above"].min()
