"""Command-line entry point.

Usage:
  python -m modelvalidity simulate  --config configs/default.yaml --out runs/default
  python -m modelvalidity compare   --out runs/default [--models dbm-linear,dbm-pacejka] [--threshold 4.905]
  python -m modelvalidity observe   --out runs/default [--self-check]
  python -m modelvalidity report    --out runs/default
  python -m modelvalidity self-check
  python -m modelvalidity validate  --out runs/default

Every command that writes files merges its outputs into <out>/manifest.json,
written last. Exit codes: 0 ok, 1 usage, 2 data, 3 numerical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .config import ExperimentConfig, SuiteEntry, load_config
from .errors import (
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    DataError,
    ModelValidityError,
    NumericalFault,
    PlantEnvelopeError,
)
from .estimation import ESTIMATE_COLUMNS, NoiseConfig, covariance_from_errors, run_observer
from .plant import SENSOR_DT, TRUTH_DT, ManeuverSpec, NoiseSigmas, generate_maneuver, plant_summary, sample_sensors
from .trajectory import Trajectory, list_bundles, read_trajectory, write_trajectory
from .validity import (
    DOMAIN_COLUMNS,
    PER_TRAJECTORY_COLUMNS,
    CandidateModel,
    TrajectoryErrors,
    compare_trajectory,
    evaluate_trajectory,
    model_controls,
    percent_increase,
    simulate_model_trajectory,
    split_by_domain,
)

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRAJECTORIES = "trajectories"
FAILURE_COLUMNS = ["trajectory", "model", "error"]
NOISE_COLUMNS = [
    "trajectory", "model", "Q_Vx", "Q_Vy", "Q_yaw_rate", "R_ax", "R_ay", "R_yaw_rate", "mean_nis", "nis_lo", "nis_hi",
]
SELF_CHECK_COMPARE_TOL = 1e-6
SELF_CHECK_OBSERVER_TOL = 1e-3


# ---------------------------------------------------------------------------
# Plumbing: worker pool, output dir, manifest
# ---------------------------------------------------------------------------


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map over a bounded process pool (serial for jobs=1)."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _ensure_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        marker = out / ".write_check"
        marker.write_text("")
        marker.unlink()
    except OSError as exc:
        raise DataError(f"output directory {out} is not writable: {exc.strerror or exc}") from None


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_manifest(out: Path) -> Dict[str, Any]:
    path = out / MANIFEST
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc.msg}") from None


def update_manifest(out: Path, cfg: ExperimentConfig, files: Iterable[Path],
                    trajectories: Optional[Dict[str, Dict[str, Any]]] = None) -> Path:
    """Merge ``files`` (and per-trajectory provenance) into the manifest."""
    manifest = read_manifest(out)
    inventory = {k: v for k, v in manifest.get("files", {}).items() if (out / k).exists()}
    for f in files:
        f = Path(f)
        inventory[f.relative_to(out).as_posix()] = {"sha256": sha256_file(f), "bytes": f.stat().st_size}
    merged_traj = dict(manifest.get("trajectories", {}))
    for name, entry in (trajectories or {}).items():
        merged_traj[name] = {**merged_traj.get(name, {}), **entry}
    manifest = {
        "tool_version": __version__,
        "config_hash": cfg.config_hash,
        "generated_at_utc": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "trajectories": dict(sorted(merged_traj.items())),
        "files": dict(sorted(inventory.items())),
    }
    path = out / MANIFEST
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)
    return path


def _write_csv(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def _exit_for(total: int, failed: int) -> int:
    return EXIT_NUMERICAL if total and failed == total else EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _simulate_one(job: Tuple[SuiteEntry, Any, Any, NoiseSigmas]):
    entry, setup, road, noise = job
    try:
        m = generate_maneuver(entry.spec, setup, road)
    except PlantEnvelopeError as exc:
        return entry, None, str(exc)
    sensors = sample_sensors(m.run.truth, m.run.signals, noise, entry.sensor_seed)
    meta = {
        "name": entry.name,
        "maneuver": asdict(entry.spec),
        "maneuver_seed": entry.spec.seed,
        "sensor_seed": entry.sensor_seed,
        "realized_ay_max": m.realized_ay_max,
        "target_reached": m.reachable,
        "iterations": m.iterations,
        "steer_amplitude": m.amplitude,
        "noise": noise.as_dict(),
        "plant": plant_summary(setup, road),
        "dt_truth": TRUTH_DT,
        "dt_sensor": SENSOR_DT,
    }
    return entry, Trajectory(entry.name, m.run.truth, sensors, meta), None


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = cfg.out
    _ensure_writable(out)
    if not cfg.suite:
        raise DataError("empty maneuver suite")
    print(f"\n📋 Simulating {len(cfg.suite)} trajectories → {out / TRAJECTORIES}")

    jobs = [(entry, cfg.plant, cfg.road, cfg.noise) for entry in cfg.suite]
    files: List[Path] = []
    provenance: Dict[str, Dict[str, Any]] = {}
    failed = 0
    for entry, traj, error in _map(_simulate_one, jobs, cfg.jobs):
        seeds = {"maneuver_seed": entry.spec.seed, "sensor_seed": entry.sensor_seed, "target_ay_max": entry.spec.target_ay_max}
        if traj is None:
            failed += 1
            provenance[entry.name] = {**seeds, "status": "failed", "error": error}
            print(f"  ❌ {entry.name}: {error}")
            continue
        files += write_trajectory(traj, out / TRAJECTORIES / entry.name)
        reached = traj.meta["target_reached"]
        provenance[entry.name] = {**seeds, "status": "ok", "realized_ay_max": traj.meta["realized_ay_max"], "target_reached": reached}
        marker = "✅" if reached else "⚠️ "
        note = "" if reached else " (target not reachable, achievable max reported)"
        print(f"  {marker} {entry.name}: a_y^max {traj.meta['realized_ay_max']:.2f} m/s² (target {entry.spec.target_ay_max:.2f}){note}")

    update_manifest(out, cfg, files, provenance)
    print(f"\n{'✅' if not failed else '⚠️ '} {len(cfg.suite) - failed}/{len(cfg.suite)} trajectories written")
    return _exit_for(len(cfg.suite), failed)


# ---------------------------------------------------------------------------
# compare / observe
# ---------------------------------------------------------------------------


def bundle_dirs(cfg: ExperimentConfig) -> List[Path]:
    """Suite bundles in suite order, then any extra bundles on disk."""
    root = cfg.out / TRAJECTORIES
    manifest = read_manifest(cfg.out)
    skipped = {n for n, e in manifest.get("trajectories", {}).items() if e.get("status") == "failed"}
    on_disk = {p.name: p for p in list_bundles(root)}
    if not on_disk:
        raise DataError(f"no trajectory bundles under {root} (run `simulate` first)")
    ordered = []
    for entry in cfg.suite:
        if entry.name in skipped:
            continue
        if entry.name not in on_disk:
            raise DataError(f"missing trajectory bundle {entry.name!r} under {root}")
        ordered.append(on_disk.pop(entry.name))
    return ordered + [on_disk[n] for n in sorted(on_disk)]


def _compare_one(job: Tuple[Path, Tuple[CandidateModel, ...]]) -> Tuple[str, List[TrajectoryErrors]]:
    path, models = job
    traj = read_trajectory(path)
    logger.info("compare %s (a_y^max %.2f)", traj.name, traj.ay_max)
    return traj.name, [evaluate_trajectory(traj, m) for m in models]


def _report_files(folder: Path, prefix: str, report) -> List[Path]:
    return [
        _write_csv(report.domain[DOMAIN_COLUMNS], folder / f"{prefix}_domain_report.csv"),
        _write_csv(report.per_trajectory[PER_TRAJECTORY_COLUMNS], folder / f"{prefix}_per_trajectory.csv"),
        _write_csv(percent_increase(report), folder / f"{prefix}_pct_increase.csv"),
        _write_csv(report.failures[FAILURE_COLUMNS], folder / f"{prefix}_failures.csv"),
    ]


def _print_report(report) -> None:
    with pd.option_context("display.width", 120, "display.float_format", "{:.6g}".format):
        print(report.domain.to_string(index=False))
    for dom in report.empty_domains():
        print(f"  ⚠️  domain {dom} is empty (n=0)")


def cmd_compare(cfg: ExperimentConfig) -> int:
    out = cfg.out
    _ensure_writable(out)
    bundles = bundle_dirs(cfg)
    models = tuple(cfg.candidate(m) for m in cfg.models)
    print(f"\n📋 Comparing {len(models)} models on {len(bundles)} trajectories")

    results: List[TrajectoryErrors] = []
    files: List[Path] = []
    step_dir = out / "compare" / "step_errors"
    for name, per_model in _map(_compare_one, [(p, models) for p in bundles], cfg.jobs):
        frames = [r.errors.assign(model=r.model.value) for r in per_model if not r.failed]
        if frames:
            long = pd.concat(frames, ignore_index=True)[["model", "t", "e_Vx", "e_Vy", "e_yaw_rate", "ay_truth"]]
            files.append(_write_csv(long, step_dir / f"{name}.csv"))
        for r in per_model:
            print(f"  {'❌' if r.failed else '✅'} {name} / {r.model.value}" + (f": {r.failure}" if r.failed else ""))
        results += per_model

    report = split_by_domain(results, cfg.threshold)
    files += _report_files(out / "compare", "validity", report)
    print()
    _print_report(report)
    update_manifest(out, cfg, files)
    failed = sum(r.failed for r in results)
    return _exit_for(len(results), failed)


def _observe_one(job: Tuple[Path, Tuple[CandidateModel, ...]]):
    path, models = job
    traj = read_trajectory(path)
    logger.info("observe %s (a_y^max %.2f)", traj.name, traj.ay_max)
    rows = []
    for model in models:
        try:
            noise = covariance_from_errors(traj, model)
            result = run_observer(traj, model, noise)
        except (NumericalFault, DataError) as exc:
            logger.warning("%s / %s observer failed: %s", traj.name, model.model_id.value, exc)
            rows.append((TrajectoryErrors(traj.name, model.model_id, traj.ay_max, None, str(exc)), None))
            continue
        rows.append((result.trajectory_errors(traj.ay_max), result))
    return traj.name, rows


def cmd_observe(cfg: ExperimentConfig, self_check: bool = False) -> int:
    out = cfg.out
    _ensure_writable(out)
    bundles = bundle_dirs(cfg)
    models = tuple(cfg.candidate(m) for m in cfg.models)
    print(f"\n📋 Running {len(models)} observers on {len(bundles)} trajectories")

    results: List[TrajectoryErrors] = []
    noise_rows = []
    files: List[Path] = []
    est_dir = out / "observer" / "estimates"
    for name, rows in _map(_observe_one, [(p, models) for p in bundles], cfg.jobs):
        for errors, result in rows:
            results.append(errors)
            if result is None:
                print(f"  ❌ {name} / {errors.model.value}: {errors.failure}")
                continue
            files.append(_write_csv(result.estimates[ESTIMATE_COLUMNS], est_dir / f"{name}__{result.model}.csv"))
            noise_rows.append({"trajectory": name, "model": result.model, **result.noise.diagonals(), **result.nis_summary()})
            mae = result.mae
            print(f"  ✅ {name} / {result.model}: MAE Vx {mae['Vx']:.4g}  Vy {mae['Vy']:.4g}  yaw {mae['yaw_rate']:.4g}")

    report = split_by_domain(results, cfg.threshold)
    folder = out / "observer"
    files += _report_files(folder, "observer", report)
    files.append(_write_csv(pd.DataFrame(noise_rows, columns=NOISE_COLUMNS), folder / "noise.csv"))
    print()
    _print_report(report)

    code = _exit_for(len(results), sum(r.failed for r in results))
    if self_check:
        check_rows = self_check_rows(cfg)
        files.append(_write_csv(check_rows, folder / "self_check.csv"))
        if not check_rows["passed"].all():
            code = EXIT_NUMERICAL
    update_manifest(out, cfg, files)
    return code


# ---------------------------------------------------------------------------
# self-check
# ---------------------------------------------------------------------------


SELF_CHECK_SPEC = ManeuverSpec(kind="slalom", target_ay_max=4.0, initial_speed=20.0, duration=20.0, seed=7)


def self_check_rows(cfg: ExperimentConfig) -> pd.DataFrame:
    """Each candidate model against data it generated itself (noiseless).

    The one-step comparison must vanish; the observer with small Q and R
    must track.
    """
    print("\n📋 Self-check: each model on its own noiseless trajectory")
    rows = []
    for mid in cfg.models:
        model = cfg.candidate(mid)
        traj = simulate_model_trajectory(model, model_controls(SELF_CHECK_SPEC, model), name=f"self_{mid.value}")
        errors = compare_trajectory(traj, model)
        compare_mae = float(errors[["e_Vx", "e_Vy", "e_yaw_rate"]].mean().max())
        try:
            result = run_observer(traj, model, NoiseConfig(np.full(3, 1e-8), np.full(3, 1e-6)))
            observer_mae = max(result.mae.values())
        except NumericalFault as exc:
            logger.warning("self-check observer %s failed: %s", mid.value, exc)
            observer_mae = float("nan")
        passed = compare_mae < SELF_CHECK_COMPARE_TOL and observer_mae < SELF_CHECK_OBSERVER_TOL
        rows.append({"model": mid.value, "compare_mae": compare_mae, "observer_mae": observer_mae, "passed": bool(passed)})
        print(f"  {'✅' if passed else '❌'} {mid.value}: compare MAE {compare_mae:.3e}, observer MAE {observer_mae:.3e}")
    return pd.DataFrame(rows, columns=["model", "compare_mae", "observer_mae", "passed"])


def cmd_self_check(cfg: ExperimentConfig) -> int:
    _ensure_writable(cfg.out)
    rows = self_check_rows(cfg)
    path = _write_csv(rows, cfg.out / "self_check" / "self_check.csv")
    update_manifest(cfg.out, cfg, [path])
    ok = bool(rows["passed"].all())
    print(f"\n{'✅ self-check passed' if ok else '💥 self-check failed'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# report / validate
# ---------------------------------------------------------------------------


SOURCES = {
    "validity": ("compare", "validity"),
    "observer": ("observer", "observer"),
}


def cmd_report(cfg: ExperimentConfig) -> int:
    from .index import build_index
    from .plots import render_report_figures

    out = cfg.out
    _ensure_writable(out)
    warnings: List[str] = []
    domain, per_traj, pct = [], [], []
    for source, (folder, prefix) in SOURCES.items():
        base = out / folder
        paths = [base / f"{prefix}_{kind}.csv" for kind in ("domain_report", "per_trajectory", "pct_increase")]
        missing = [p for p in paths if not p.exists()]
        if missing:
            command = "compare" if folder == "compare" else "observe"
            warnings.append(f"{source} outputs missing ({', '.join(p.name for p in missing)}); run `{command}`")
            continue
        domain.append(pd.read_csv(paths[0]).assign(source=source))
        per_traj.append(pd.read_csv(paths[1]).assign(source=source))
        pct.append(pd.read_csv(paths[2]).assign(source=source))
        failures = base / f"{prefix}_failures.csv"
        if failures.exists():
            n_failed = len(pd.read_csv(failures))
            if n_failed:
                warnings.append(f"{source}: {n_failed} trajectory/model runs failed (see {failures.name})")
    if not domain:
        raise DataError(f"no compare or observer outputs under {out}")

    consolidated = pd.concat(domain, ignore_index=True)[["source"] + DOMAIN_COLUMNS]
    per_traj_long = pd.concat(per_traj, ignore_index=True)[["source"] + PER_TRAJECTORY_COLUMNS]
    pct_long = pd.concat(pct, ignore_index=True)
    pct_long = pct_long[["source"] + [c for c in pct_long.columns if c != "source"]]
    for src, grp in consolidated.groupby("source", sort=False):
        if (grp["n"] == 0).any():
            warnings.append(f"{src}: {int((grp['n'] == 0).sum())} rows with n=0 (empty domain)")

    report_dir = out / "report"
    files = [
        _write_csv(consolidated, report_dir / "consolidated_domain_report.csv"),
        _write_csv(per_traj_long, report_dir / "per_trajectory_long.csv"),
        _write_csv(pct_long, report_dir / "pct_increase_long.csv"),
    ]

    print(f"\n📋 Percentage increase below → above {cfg.threshold:.3f} m/s²")
    for _, row in pct_long.iterrows():
        value = row["pct_increase"]
        shown = "n/a" if pd.isna(value) else f"{value:+.1f}%"
        print(f"  {row['source']:<9} {row['model']:<12} {row['variable']:<9} {shown}")

    files += render_report_figures(report_dir, consolidated, per_traj_long, cfg.threshold)
    db = report_dir / "modelvalidity.duckdb"
    build_index(report_dir, db)
    files.append(db)

    if warnings:
        print("\n⚠️  Warnings:")
        for w in warnings:
            print(f"  ⚠️  {w}")
    update_manifest(out, cfg, files)
    print(f"\n✅ Report written to {report_dir} ({len(consolidated)} domain rows)")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig) -> int:
    from .checks import validate_run

    results = validate_run(cfg.out)
    for r in results:
        print(r.summary())
    total_failures = sum(r.failed for r in results)
    if total_failures > 0:
        print(f"\n💥 {total_failures} total failure(s)")
        for r in results:
            if r.failing_checks:
                print(f"  {r.target}: {', '.join(r.failing_checks)}")
        return EXIT_DATA
    print("\n✅ All validations passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment YAML (default: built-in defaults)")
    common.add_argument("--out", help="output directory (overrides $MODELVALIDITY_OUT and the config)")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--models", help="comma-separated model ids, e.g. dbm-linear,fwm-pacejka")
    common.add_argument("--threshold", type=float, help="domain threshold in m/s² (default 0.5 g)")
    common.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    ap = _Parser(prog="modelvalidity", description="Vehicle model validity toolkit")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("simulate", parents=[common], help="generate the maneuver suite with the plant")
    sub.add_parser("compare", parents=[common], help="one-step comparison of the candidate models")
    observe = sub.add_parser("observe", parents=[common], help="EKF observers per model and trajectory")
    observe.add_argument("--self-check", action="store_true", help="also run the exact-model consistency check")
    sub.add_parser("report", parents=[common], help="consolidated tables, figures and DuckDB index")
    sub.add_parser("self-check", parents=[common], help="each model against its own generated data")
    sub.add_parser("validate", parents=[common], help="check bundles and reports")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    flags = {"out": args.out, "seed": args.seed, "models": args.models, "threshold": args.threshold, "jobs": args.jobs}
    try:
        cfg = load_config(args.config, flags, os.environ)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.command == "observe":
            return cmd_observe(cfg, self_check=args.self_check)
        if args.command == "report":
            return cmd_report(cfg)
        if args.command == "self-check":
            return cmd_self_check(cfg)
        return cmd_validate(cfg)
    except ModelValidityError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
