"""Validate trajectory bundles and report directories.

Checks:
  1) Schema: bundle CSVs parse with the documented headers.
  2) Grid: strictly increasing time; every sensor frame sits on a truth frame.
  3) Provenance: meta.json present; recorded a_y^max matches the truth stream.
  4) Reports: domain-report cardinality (6 rows per model), non-negative
     errors and MAE, sample counts conserved across domains and variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import pandas as pd

from .errors import DataError
from .trajectory import list_bundles, read_trajectory
from .validity import DOMAIN_COLUMNS, DOMAINS, VARIABLES, comparison_grid

AY_MAX_TOLERANCE = 1e-9

REPORT_SETS = {
    "compare": ("validity_domain_report.csv", "step_errors"),
    "observer": ("observer_domain_report.csv", "estimates"),
}


CHECK_MARKS = {"pass": "✅", "warn": "⚠️ ", "fail": "❌"}


@dataclass(frozen=True)
class CheckOutcome:
    check: str
    status: str  # pass | warn | fail
    detail: str

    def line(self) -> str:
        return f"  {CHECK_MARKS[self.status]} [{self.check}] {self.detail}"


@dataclass
class ValidationResult:
    """Outcomes of the named checks run against one bundle or report."""

    target: str
    outcomes: List[CheckOutcome] = field(default_factory=list)

    def ok(self, check: str, detail: str) -> None:
        self.outcomes.append(CheckOutcome(check, "pass", detail))

    def warn(self, check: str, detail: str) -> None:
        self.outcomes.append(CheckOutcome(check, "warn", detail))

    def fail(self, check: str, detail: str) -> None:
        self.outcomes.append(CheckOutcome(check, "fail", detail))

    def _count(self, status: str) -> int:
        return sum(o.status == status for o in self.outcomes)

    @property
    def passed(self) -> int:
        return self._count("pass")

    @property
    def warned(self) -> int:
        return self._count("warn")

    @property
    def failed(self) -> int:
        return self._count("fail")

    @property
    def failing_checks(self) -> List[str]:
        return list(dict.fromkeys(o.check for o in self.outcomes if o.status == "fail"))

    def by_check(self) -> Dict[str, str]:
        """Worst status per check, in the order the checks ran."""
        rank = {"pass": 0, "warn": 1, "fail": 2}
        worst: Dict[str, str] = {}
        for o in self.outcomes:
            if rank[o.status] >= rank[worst.get(o.check, "pass")]:
                worst[o.check] = o.status
        return worst

    def summary(self) -> str:
        status = "PASS" if self.failed == 0 else "FAIL"
        lines = [o.line() for o in self.outcomes]
        tail = f"  [{status}] {self.target}: {self.passed}/{len(self.outcomes)} checks passed, {self.warned} warnings"
        if self.failing_checks:
            tail += f", failing: {', '.join(self.failing_checks)}"
        return "\n".join(lines) + "\n\n" + tail


def validate_bundle(path: Union[str, Path]) -> ValidationResult:
    path = Path(path)
    r = ValidationResult(f"bundle {path.name}")
    print(f"\n📋 Validating bundle: {path}")

    try:
        traj = read_trajectory(path)
    except DataError as exc:
        r.fail("schema", str(exc))
        return r
    r.ok("schema", f"Loaded {len(traj.truth)} truth / {len(traj.sensors)} sensor frames, time strictly increasing")

    try:
        comparison_grid(traj)
        r.ok("grid", "Every sensor frame coincides with a truth frame")
    except DataError as exc:
        r.fail("grid", str(exc))

    expected = len(traj.truth) // 2
    if len(traj.sensors) == expected:
        r.ok("sensor_count", f"Sensor count is floor(N/2) = {expected}")
    else:
        r.warn("sensor_count", f"Sensor count {len(traj.sensors)} differs from floor(N/2) = {expected} (external log?)")

    if not traj.meta:
        r.warn("provenance", "meta.json missing")
    elif "realized_ay_max" in traj.meta:
        recorded = float(traj.meta["realized_ay_max"])
        if abs(recorded - traj.ay_max) <= AY_MAX_TOLERANCE * max(1.0, recorded):
            r.ok("provenance", f"Recorded a_y^max {recorded:.3f} m/s² matches truth")
        else:
            r.fail("provenance", f"Recorded a_y^max {recorded:.6f} != truth {traj.ay_max:.6f}")
        if traj.meta.get("target_reached") is False:
            r.warn("target", f"Target a_y^max {traj.meta.get('maneuver', {}).get('target_ay_max')} was not reached")
    return r


def validate_domain_report(path: Path, error_files: List[Path], error_kind: str) -> ValidationResult:
    r = ValidationResult(f"report {path.parent.name}/{path.name}")
    print(f"\n📋 Validating report: {path}")

    if not path.exists():
        r.fail("schema", f"File not found: {path}")
        return r

    df = pd.read_csv(path)
    r.ok("schema", f"Loaded {len(df)} rows")

    missing = [c for c in DOMAIN_COLUMNS if c not in df.columns]
    if missing:
        r.fail("schema", f"Missing columns: {missing}")
        return r
    r.ok("schema", "All required columns present")

    models = list(dict.fromkeys(df["model"]))
    expected = len(models) * len(VARIABLES) * len(DOMAINS)
    if len(df) == expected:
        r.ok("cardinality", f"{len(df)} domain rows = {len(models)} models × {len(VARIABLES)} variables × {len(DOMAINS)} domains")
    else:
        r.fail("cardinality", f"{len(df)} domain rows, expected {expected}")

    mae = df["mae"].dropna()
    if (mae >= 0).all():
        r.ok("non_negative", "No negative MAE")
    else:
        r.fail("non_negative", f"{(mae < 0).sum()} rows have negative MAE")

    empty = df[df["n"] == 0]
    if len(empty):
        r.warn("empty_domain", f"{len(empty)} rows belong to an empty domain (n=0)")

    totals = df.groupby(["model", "variable"])["n"].sum().unstack("variable")
    if (totals.nunique(axis=1) <= 1).all():
        r.ok("count_conservation", "Sample counts agree across variables for every model")
    else:
        r.fail("count_conservation", "Sample counts differ between variables of the same model")

    if error_files:
        rows, negative = _count_error_rows(error_files, error_kind)
        if negative == 0:
            r.ok("non_negative", f"No negative errors in {len(error_files)} {error_kind} files")
        else:
            r.fail("non_negative", f"{negative} negative error values in {error_kind} files")
        pooled = totals.iloc[:, 0].to_dict() if len(totals) else {}
        mismatched = [m for m, n in pooled.items() if rows.get(m, 0) != n]
        if not mismatched:
            r.ok("count_conservation", "Domain counts add up to the per-trajectory error rows")
        else:
            r.fail("count_conservation", f"Domain counts do not match error rows for {mismatched}")
    return r


def _count_error_rows(files: List[Path], kind: str):
    """Per-model error-row counts and the number of negative error values."""
    rows: dict = {}
    negative = 0
    for f in files:
        df = pd.read_csv(f)
        if kind == "step_errors":
            cols = ["e_Vx", "e_Vy", "e_yaw_rate"]
            for model, n in df.groupby("model").size().items():
                rows[model] = rows.get(model, 0) + int(n)
        else:
            cols = ["Vx_err", "Vy_err", "yaw_rate_err"]
            model = f.stem.split("__", 1)[1]
            rows[model] = rows.get(model, 0) + max(len(df) - 1, 0)
        negative += int((df[cols].to_numpy() < 0).sum())
    return rows, negative


def validate_run(out: Union[str, Path]) -> List[ValidationResult]:
    """Validate every bundle and whichever reports exist under ``out``."""
    out = Path(out)
    results = [validate_bundle(p) for p in list_bundles(out / "trajectories")]
    for folder, (report, errors) in REPORT_SETS.items():
        report_path = out / folder / report
        if report_path.exists():
            error_files = sorted((out / folder / errors).glob("*.csv"))
            results.append(validate_domain_report(report_path, error_files, errors))
    if not results:
        r = ValidationResult(f"run {out}")
        r.fail("run", f"Nothing to validate under {out}")
        results.append(r)
    return results
