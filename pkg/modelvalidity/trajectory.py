"""Trajectory bundles: 100 Hz ground truth + 50 Hz sensors + meta.json.

A bundle is a directory:

  truth.csv    t,X,Y,psi,Vx,Vy,yaw_rate,ax,ay,roll,pitch,beta
  sensors.csv  t,ax_meas,ay_meas,yaw_rate_meas,w_fl,w_fr,w_rl,w_rr,delta
  meta.json    maneuver spec, seeds, realized a_y^max, plant/noise settings

Externally recorded logs with the same headers are ingested the same way;
``meta.json`` is optional for those.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, NamedTuple, Union

import numpy as np
import pandas as pd

from .dynamics import ControlInput
from .errors import DataError, TrajectoryParseError

logger = logging.getLogger(__name__)

TRUTH_COLUMNS = ["t", "X", "Y", "psi", "Vx", "Vy", "yaw_rate", "ax", "ay", "roll", "pitch", "beta"]
SENSOR_COLUMNS = ["t", "ax_meas", "ay_meas", "yaw_rate_meas", "w_fl", "w_fr", "w_rl", "w_rr", "delta"]

TRUTH_FILE = "truth.csv"
SENSORS_FILE = "sensors.csv"
META_FILE = "meta.json"

_PARSER_LINE = re.compile(r"line (\d+)")


class GroundTruthFrame(NamedTuple):
    t: float
    X: float
    Y: float
    psi: float
    Vx: float
    Vy: float
    yaw_rate: float
    ax: float
    ay: float
    roll: float
    pitch: float
    beta: float


class SensorFrame(NamedTuple):
    t: float
    ax_meas: float
    ay_meas: float
    yaw_rate_meas: float
    w_fl: float
    w_fr: float
    w_rl: float
    w_rr: float
    delta: float

    def control(self) -> ControlInput:
        return ControlInput(self.delta, self.w_fl, self.w_fr, self.w_rl, self.w_rr)


@dataclass(eq=False)
class Trajectory:
    name: str
    truth: pd.DataFrame
    sensors: pd.DataFrame
    meta: Dict[str, Any] = field(default_factory=dict)

    def truth_frame(self, i: int) -> GroundTruthFrame:
        return GroundTruthFrame(*(float(v) for v in self.truth[TRUTH_COLUMNS].iloc[i]))

    def sensor_frame(self, k: int) -> SensorFrame:
        return SensorFrame(*(float(v) for v in self.sensors[SENSOR_COLUMNS].iloc[k]))

    @property
    def ay_max(self) -> float:
        """Realized max |a_y| from the ground-truth stream."""
        return float(np.max(np.abs(self.truth["ay"].to_numpy()))) if len(self.truth) else 0.0

    def equals(self, other: "Trajectory") -> bool:
        return (
            self.name == other.name
            and self.truth.equals(other.truth)
            and self.sensors.equals(other.sensors)
            and self.meta == other.meta
        )


def write_trajectory(traj: Trajectory, directory: Union[str, Path]) -> list:
    """Write a bundle and return the written paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    truth_path = out / TRUTH_FILE
    sensors_path = out / SENSORS_FILE
    meta_path = out / META_FILE
    # repr-precision floats; read back with float_precision="round_trip"
    traj.truth[TRUTH_COLUMNS].to_csv(truth_path, index=False, float_format="%.17g")
    traj.sensors[SENSOR_COLUMNS].to_csv(sensors_path, index=False, float_format="%.17g")
    meta = dict(traj.meta)
    meta.setdefault("name", traj.name)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [truth_path, sensors_path, meta_path]


def _read_table(path: Path, columns: list) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"missing {path}")
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise TrajectoryParseError(path, "file is empty", line=1)
    except pd.errors.ParserError as exc:
        m = _PARSER_LINE.search(str(exc))
        raise TrajectoryParseError(path, str(exc).strip(), line=int(m.group(1)) if m else None) from exc

    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise TrajectoryParseError(path, f"missing column {missing[0]!r} (expected header: {','.join(columns)})", line=1, column=missing[0])
    df = df[columns]

    for col in columns:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            idx = int(np.flatnonzero(bad.to_numpy())[0])
            raise TrajectoryParseError(path, f"non-numeric value {df[col].iloc[idx]!r}", line=idx + 2, column=col)
        df[col] = values.astype(float)

    t = df["t"].to_numpy()
    if len(t) > 1:
        steps = np.diff(t)
        if not np.all(steps > 0):
            idx = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise TrajectoryParseError(path, "timestamps must be strictly increasing", line=idx + 2, column="t")
    return df.reset_index(drop=True)


def read_trajectory(directory: Union[str, Path]) -> Trajectory:
    src = Path(directory)
    if not src.is_dir():
        raise DataError(f"trajectory bundle not found: {src}")
    truth = _read_table(src / TRUTH_FILE, TRUTH_COLUMNS)
    sensors = _read_table(src / SENSORS_FILE, SENSOR_COLUMNS)
    meta_path = src / META_FILE
    meta: Dict[str, Any] = {}
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise TrajectoryParseError(meta_path, exc.msg, line=exc.lineno) from exc
    name = str(meta.get("name", src.name))
    logger.debug("read %s: %d truth / %d sensor frames", name, len(truth), len(sensors))
    return Trajectory(name=name, truth=truth, sensors=sensors, meta=meta)


def list_bundles(root: Union[str, Path]) -> list:
    """Bundle directories under ``root`` in name order."""
    base = Path(root)
    if not base.is_dir():
        return []
    return sorted(p for p in base.iterdir() if p.is_dir() and (p / TRUTH_FILE).exists())
