"""One-step model comparison and the two-domain validity analysis.

The comparison re-seeds a candidate model from ground truth at every sensor
frame, advances it one 20 ms step with the measured inputs and records the
error against the next truth frame. Errors never accumulate, so what is left
is the model's own one-step error.

Trajectories are then grouped by their realized max |a_y| against a single
threshold (0.5 g by default) and pooled per model, variable and domain.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .dynamics import (
    DEFAULT_DT,
    BicycleState,
    ControlInput,
    FourWheelState,
    TireParams,
    VehicleParams,
    VehicleState,
    bicycle_forces,
    four_wheel_forces,
    step_bicycle,
    step_four_wheel,
    tire_preset,
)
from .errors import AlignmentError, DataError, NumericalFault, ParameterError
from .plant import ManeuverSpec, NoiseSigmas, add_sensor_noise, steering_profile
from .trajectory import SENSOR_COLUMNS, TRUTH_COLUMNS, GroundTruthFrame, SensorFrame, Trajectory

logger = logging.getLogger(__name__)

GRAVITY = 9.81
DEFAULT_THRESHOLD = 0.5 * GRAVITY
VARIABLES = ("Vx", "Vy", "yaw_rate")
DOMAINS = ("below_0.5g", "above_0.5g")
DOMAIN_COLUMNS = ["model", "variable", "domain", "mae", "std", "n", "pct_increase"]
PER_TRAJECTORY_COLUMNS = ["trajectory", "ay_max", "model", "variable", "mae"]
ALIGN_TOL = 1e-9
PCT_GUARD = 1e-12


class ModelId(str, enum.Enum):
    DBM_LINEAR = "dbm-linear"
    DBM_DUGOFF = "dbm-dugoff"
    DBM_PACEJKA = "dbm-pacejka"
    FWM_PACEJKA = "fwm-pacejka"

    @property
    def four_wheel(self) -> bool:
        return self is ModelId.FWM_PACEJKA

    @property
    def tire_preset(self) -> str:
        return self.value.split("-", 1)[1]

    @property
    def label(self) -> str:
        body, tire = self.value.split("-", 1)
        return f"{'4WM' if body == 'fwm' else 'DBM'}-{tire.capitalize()}"

    @classmethod
    def parse(cls, value: Union[str, "ModelId"]) -> "ModelId":
        try:
            return cls(value)
        except ValueError:
            known = ", ".join(m.value for m in cls)
            raise ParameterError(f"unknown model id {value!r} (known: {known})") from None

    @classmethod
    def parse_list(cls, text: Union[str, Sequence[str], None]) -> Tuple["ModelId", ...]:
        """Comma-separated list (or sequence) of ids, in canonical order."""
        if text is None:
            return tuple(cls)
        items = text.split(",") if isinstance(text, str) else list(text)
        chosen = {cls.parse(item.strip()) for item in items if str(item).strip()}
        if not chosen:
            raise ParameterError("empty model list")
        return tuple(m for m in cls if m in chosen)


@dataclass(frozen=True)
class CandidateModel:
    """A model id bound to its vehicle and tire parameters."""

    model_id: ModelId
    vehicle: VehicleParams = VehicleParams()
    tire: Optional[TireParams] = None
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        object.__setattr__(self, "model_id", ModelId.parse(self.model_id))
        if self.tire is None:
            object.__setattr__(self, "tire", tire_preset(self.model_id.tire_preset))
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt!r}")

    def seed(self, frame: GroundTruthFrame, sensor: SensorFrame) -> VehicleState:
        """Model state equal to the truth frame; wheel speeds from the sensor."""
        common = dict(
            x=frame.X, y=frame.Y, psi=frame.psi, vx=frame.Vx, vy=frame.Vy, yaw_rate=frame.yaw_rate,
            ax=frame.ax, ay=frame.ay,
        )
        if self.model_id.four_wheel:
            return FourWheelState(omega=sensor.control().wheel_speeds, **common)
        return BicycleState(**common)

    def initial_state(self, vx: float, vy: float = 0.0, yaw_rate: float = 0.0) -> VehicleState:
        if self.model_id.four_wheel:
            w = vx / self.vehicle.effective_tire_radius
            return FourWheelState(vx=vx, vy=vy, yaw_rate=yaw_rate, omega=(w, w, w, w))
        return BicycleState(vx=vx, vy=vy, yaw_rate=yaw_rate)

    def step(self, state: VehicleState, control: ControlInput, dt: Optional[float] = None) -> VehicleState:
        h = self.dt if dt is None else dt
        if self.model_id.four_wheel:
            return step_four_wheel(state, control, h, self.tire, self.vehicle)
        return step_bicycle(state, control, h, self.tire, self.vehicle)

    def _reduced_state(self, z: np.ndarray, control: ControlInput, load_accel: Tuple[float, float]) -> VehicleState:
        vx, vy, r = (float(v) for v in z)
        ax, ay = load_accel
        if self.model_id.four_wheel:
            return FourWheelState(vx=vx, vy=vy, yaw_rate=r, omega=control.wheel_speeds, ax=ax, ay=ay)
        return BicycleState(vx=vx, vy=vy, yaw_rate=r, ax=ax, ay=ay)

    def transition(
        self, z: np.ndarray, control: ControlInput, load_accel: Tuple[float, float] = (0.0, 0.0),
        dt: Optional[float] = None,
    ) -> np.ndarray:
        """(V_x, V_y, yaw rate) after one step; pose does not feed back."""
        nxt = self.step(self._reduced_state(z, control, load_accel), control, dt)
        return np.array([nxt.vx, nxt.vy, nxt.yaw_rate])

    def accelerations(
        self, z: np.ndarray, control: ControlInput, load_accel: Tuple[float, float] = (0.0, 0.0),
    ) -> Tuple[float, float]:
        """Body accelerations (a_x, a_y) the model's tire forces produce at ``z``."""
        vx, vy, r = (float(v) for v in z)
        forces = four_wheel_forces if self.model_id.four_wheel else bicycle_forces
        fx, fy, _ = forces(vx, vy, r, control, self.tire, self.vehicle, load_accel[0], load_accel[1])
        m = self.vehicle.total_mass
        return fx / m, fy / m


ModelLike = Union[ModelId, str, CandidateModel]


def resolve_model(
    model: ModelLike, vehicle: Optional[VehicleParams] = None, tire: Optional[TireParams] = None,
) -> CandidateModel:
    if isinstance(model, CandidateModel):
        return model
    return CandidateModel(ModelId.parse(model), vehicle or VehicleParams(), tire)


# ---------------------------------------------------------------------------
# One-step comparison
# ---------------------------------------------------------------------------


def comparison_grid(traj: Trajectory) -> np.ndarray:
    """Truth row index for every sensor frame (frame k pairs with truth 2k)."""
    n = len(traj.sensors)
    if n < 2:
        raise DataError(f"{traj.name}: need at least 2 sensor frames, got {n}")
    idx = np.arange(n) * 2
    if idx[-1] >= len(traj.truth):
        raise AlignmentError(
            f"{traj.name}: {n} sensor frames need {idx[-1] + 1} truth frames, got {len(traj.truth)}"
        )
    t_truth = traj.truth["t"].to_numpy()[idx]
    t_sensor = traj.sensors["t"].to_numpy()
    gap = np.abs(t_truth - t_sensor)
    if np.any(gap > ALIGN_TOL):
        k = int(np.argmax(gap > ALIGN_TOL))
        raise AlignmentError(
            f"{traj.name}: sensor frame {k} at t={t_sensor[k]:.6f}s has no truth frame (nearest grid t={t_truth[k]:.6f}s)"
        )
    return idx


def one_step_residuals(traj: Trajectory, model: ModelLike, **params) -> pd.DataFrame:
    """Signed one-step residuals (prediction minus truth) on the 50 Hz grid.

    Columns: t, e_Vx, e_Vy, e_yaw_rate, ay_truth; ``t`` is the time of the
    predicted frame.
    """
    cm = resolve_model(model, **params)
    idx = comparison_grid(traj)
    truth = traj.truth[TRUTH_COLUMNS].to_numpy()
    sensors = traj.sensors[SENSOR_COLUMNS].to_numpy()
    n = len(idx) - 1
    out = np.empty((n, 5))
    for k in range(n):
        frame = GroundTruthFrame(*truth[idx[k]])
        sensor = SensorFrame(*sensors[k])
        nxt = cm.step(cm.seed(frame, sensor), sensor.control(), cm.dt)
        target = GroundTruthFrame(*truth[idx[k + 1]])
        out[k] = (target.t, nxt.vx - target.Vx, nxt.vy - target.Vy, nxt.yaw_rate - target.yaw_rate, target.ay)
    return pd.DataFrame(out, columns=["t", "e_Vx", "e_Vy", "e_yaw_rate", "ay_truth"])


def compare_trajectory(traj: Trajectory, model: ModelLike, **params) -> pd.DataFrame:
    """Absolute one-step errors, N-1 rows for N sensor frames."""
    errors = one_step_residuals(traj, model, **params)
    cols = ["e_Vx", "e_Vy", "e_yaw_rate"]
    errors[cols] = errors[cols].abs()
    return errors


@dataclass(frozen=True, eq=False)
class TrajectoryErrors:
    """Per-trajectory error stream of one model (validity or observer)."""

    name: str
    model: ModelId
    ay_max: float
    errors: Optional[pd.DataFrame]  # columns e_Vx, e_Vy, e_yaw_rate
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.errors is None


def evaluate_trajectory(traj: Trajectory, model: CandidateModel) -> TrajectoryErrors:
    """compare_trajectory with numerical faults isolated to this trajectory."""
    try:
        errors = compare_trajectory(traj, model)
    except NumericalFault as exc:
        logger.warning("%s / %s failed: %s", traj.name, model.model_id.value, exc)
        return TrajectoryErrors(traj.name, model.model_id, traj.ay_max, None, str(exc))
    return TrajectoryErrors(traj.name, model.model_id, traj.ay_max, errors)


# ---------------------------------------------------------------------------
# Domain split
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DomainErrorReport:
    domain: pd.DataFrame  # DOMAIN_COLUMNS
    per_trajectory: pd.DataFrame  # PER_TRAJECTORY_COLUMNS
    threshold: float = DEFAULT_THRESHOLD
    failures: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["trajectory", "model", "error"]))

    def row(self, model: ModelLike, variable: str, domain: str) -> pd.Series:
        mid = model.model_id if isinstance(model, CandidateModel) else ModelId.parse(model)
        d = self.domain
        sel = d[(d["model"] == mid.value) & (d["variable"] == variable) & (d["domain"] == domain)]
        if len(sel) != 1:
            raise KeyError((mid.value, variable, domain))
        return sel.iloc[0]

    def mae(self, model: ModelLike, variable: str, domain: str) -> float:
        return float(self.row(model, variable, domain)["mae"])

    def empty_domains(self) -> List[str]:
        return [dom for dom in DOMAINS if (self.domain.loc[self.domain["domain"] == dom, "n"] == 0).all()]


def domain_of(ay_max: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    return DOMAINS[1] if ay_max > threshold else DOMAINS[0]


def split_by_domain(results: Iterable[TrajectoryErrors], threshold: float = DEFAULT_THRESHOLD) -> DomainErrorReport:
    """Pool per-trajectory errors into below/above-threshold domains.

    Every model present gets all 3 x 2 rows; an empty domain has n=0 and
    NaN statistics.
    """
    if not threshold > 0:
        raise ParameterError(f"threshold must be > 0, got {threshold!r}")
    results = list(results)
    models = [m for m in ModelId if any(r.model is m for r in results)]

    pooled: Dict[Tuple[ModelId, str, str], List[np.ndarray]] = {}
    per_traj = []
    failures = []
    for res in results:
        if res.failed:
            failures.append({"trajectory": res.name, "model": res.model.value, "error": res.failure})
            continue
        dom = domain_of(res.ay_max, threshold)
        for var in VARIABLES:
            values = res.errors[f"e_{var}"].to_numpy(dtype=float)
            pooled.setdefault((res.model, var, dom), []).append(values)
            per_traj.append({
                "trajectory": res.name, "ay_max": res.ay_max, "model": res.model.value,
                "variable": var, "mae": float(np.mean(values)) if len(values) else float("nan"),
            })

    rows = []
    for model in models:
        for var in VARIABLES:
            for dom in DOMAINS:
                chunks = pooled.get((model, var, dom), [])
                values = np.concatenate(chunks) if chunks else np.empty(0)
                if len(values):
                    mae, std = float(np.mean(values)), float(np.std(values))
                else:
                    mae = std = float("nan")
                rows.append({"model": model.value, "variable": var, "domain": dom, "mae": mae, "std": std, "n": len(values)})
    domain = pd.DataFrame(rows, columns=DOMAIN_COLUMNS[:-1])
    domain["n"] = domain["n"].astype(int)

    per_trajectory = pd.DataFrame(per_traj, columns=PER_TRAJECTORY_COLUMNS)
    if len(per_trajectory):
        model_rank = {m.value: i for i, m in enumerate(ModelId)}
        var_rank = {v: i for i, v in enumerate(VARIABLES)}
        per_trajectory = (
            per_trajectory.assign(_m=per_trajectory["model"].map(model_rank), _v=per_trajectory["variable"].map(var_rank))
            .sort_values(["ay_max", "trajectory", "_m", "_v"], kind="mergesort")
            .drop(columns=["_m", "_v"])
            .reset_index(drop=True)
        )

    report = DomainErrorReport(domain, per_trajectory, threshold, pd.DataFrame(failures, columns=["trajectory", "model", "error"]))
    pct = percent_increase(report)
    key = pct.set_index(["model", "variable"])["pct_increase"]
    domain["pct_increase"] = [key.get((m, v), float("nan")) for m, v in zip(domain["model"], domain["variable"])]
    for dom in report.empty_domains():
        logger.info("domain %s is empty at threshold %.3f m/s^2", dom, threshold)
    return report


def pct_change(below: float, above: float) -> float:
    """100 * (above - below) / below, NaN when below is (near) zero or missing."""
    if not (math.isfinite(below) and math.isfinite(above)) or abs(below) < PCT_GUARD:
        return float("nan")
    return 100.0 * (above - below) / below


def percent_increase(report: DomainErrorReport) -> pd.DataFrame:
    """Below-to-above MAE change per model and variable."""
    d = report.domain
    rows = []
    for (model, var), grp in d.groupby(["model", "variable"], sort=False):
        by_dom = grp.set_index("domain")["mae"]
        below = float(by_dom.get(DOMAINS[0], float("nan")))
        above = float(by_dom.get(DOMAINS[1], float("nan")))
        rows.append({"model": model, "variable": var, "mae_below": below, "mae_above": above, "pct_increase": pct_change(below, above)})
    return pd.DataFrame(rows, columns=["model", "variable", "mae_below", "mae_above", "pct_increase"])


# ---------------------------------------------------------------------------
# Candidate models as data sources
# ---------------------------------------------------------------------------


def model_controls(spec: ManeuverSpec, model: CandidateModel) -> List[ControlInput]:
    """50 Hz open-loop inputs: the maneuver's steering shape at the kinematic
    amplitude for the target a_y, wheels rolling at the initial speed."""
    vehicle = model.vehicle
    n = int(round(spec.duration / model.dt)) + 1
    t = np.arange(n) * model.dt
    amplitude = min(vehicle.wheelbase * spec.target_ay_max / spec.initial_speed ** 2, vehicle.steer_limit)
    delta = np.clip(steering_profile(spec, amplitude, t), -vehicle.steer_limit, vehicle.steer_limit)
    return [ControlInput.straight(spec.initial_speed, vehicle.effective_tire_radius, float(d)) for d in delta]


def simulate_model_trajectory(
    model: ModelLike,
    controls: Sequence[ControlInput],
    initial: Optional[VehicleState] = None,
    name: str = "model",
    noise: NoiseSigmas = NoiseSigmas.zero(),
    seed: int = 0,
) -> Trajectory:
    """Run a candidate model as the data source on the sensor grid.

    Sensor frame k carries state k and the input applied from k to k+1; the
    truth stream holds state k at row 2k and the midpoint of k and k+1 at
    row 2k+1.
    """
    cm = resolve_model(model)
    if len(controls) < 2:
        raise ParameterError("need at least 2 control frames")
    state = initial if initial is not None else cm.initial_state(
        controls[0].omega_fl * cm.vehicle.effective_tire_radius
    )
    states = [state]
    for control in controls[:-1]:
        state = cm.step(state, control)
        states.append(state)

    n = len(states)
    dt = cm.dt
    cols = ["X", "Y", "psi", "Vx", "Vy", "yaw_rate", "ax", "ay"]
    grid = np.array([[s.x, s.y, s.psi, s.vx, s.vy, s.yaw_rate, s.ax, s.ay] for s in states])
    mid = np.vstack([0.5 * (grid[:-1] + grid[1:]), grid[-1:]])
    rows = np.empty((2 * n, len(cols)))
    rows[0::2] = grid
    rows[1::2] = mid
    truth = pd.DataFrame(rows, columns=cols)
    truth.insert(0, "t", np.arange(2 * n) * (dt / 2.0))
    truth["roll"] = 0.0
    truth["pitch"] = 0.0
    truth["beta"] = np.arctan2(truth["Vy"], truth["Vx"])
    truth = truth[TRUTH_COLUMNS]
    # frame 2k must sit on the sensor grid exactly
    truth.loc[0::2, "t"] = np.arange(n) * dt

    clean = pd.DataFrame({
        "t": np.arange(n) * dt,
        "ax_meas": grid[:, 6],
        "ay_meas": grid[:, 7],
        "yaw_rate_meas": grid[:, 5],
        "w_fl": [c.omega_fl for c in controls[:n]],
        "w_fr": [c.omega_fr for c in controls[:n]],
        "w_rl": [c.omega_rl for c in controls[:n]],
        "w_rr": [c.omega_rr for c in controls[:n]],
        "delta": [c.delta for c in controls[:n]],
    }, columns=SENSOR_COLUMNS)
    sensors = add_sensor_noise(clean, noise, seed)
    meta = {"name": name, "source": f"model:{cm.model_id.value}", "dt": dt, "sensor_seed": seed, "noise": noise.as_dict()}
    return Trajectory(name=name, truth=truth, sensors=sensors, meta=meta)
