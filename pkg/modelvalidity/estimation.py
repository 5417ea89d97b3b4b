"""Model-based EKF observers for (V_x, V_y, yaw rate).

Each candidate model supplies both halves of the filter:

  f(z, U)  one 20 ms step of the model, pose dropped
  g(z, U)  (a_x, a_y, yaw rate) from the model's tire forces

Inputs U are the measured wheel speeds and steering angle; the load-transfer
accelerations are the previous measured (a_x, a_y). F and G come from central
finite differences. The recursion itself is filterpy's ExtendedKalmanFilter
(Joseph-form update).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from filterpy.kalman import ExtendedKalmanFilter
from scipy.stats import chi2

from .dynamics import ControlInput
from .errors import DataError, FilterFault, IntegrationFault, ParameterError
from .trajectory import SENSOR_COLUMNS, TRUTH_COLUMNS, Trajectory
from .validity import (
    VARIABLES,
    CandidateModel,
    ModelLike,
    TrajectoryErrors,
    comparison_grid,
    one_step_residuals,
    resolve_model,
)

logger = logging.getLogger(__name__)

COVARIANCE_FLOOR = 1e-8
MIN_STEPS = 100
INITIAL_P = 1e-2
MAX_CONDITION = 1e12
PSD_TOL = 1e-9
NIS_CONFIDENCE = 0.95
ESTIMATE_COLUMNS = ["t", "Vx_hat", "Vy_hat", "yaw_rate_hat", "Vx_err", "Vy_err", "yaw_rate_err"]


@dataclass(frozen=True, eq=False)
class EkfState:
    z_hat: np.ndarray
    P: np.ndarray
    nis: Optional[float] = None  # of the update that produced this state

    def __post_init__(self) -> None:
        z = np.asarray(self.z_hat, dtype=float).reshape(-1)
        P = np.asarray(self.P, dtype=float)
        if P.shape != (len(z), len(z)):
            raise ParameterError(f"P must be {len(z)}x{len(z)}, got {P.shape}")
        object.__setattr__(self, "z_hat", z)
        object.__setattr__(self, "P", P)


@dataclass(frozen=True, eq=False)
class NoiseConfig:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        for name in ("Q", "R"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim == 1:
                m = np.diag(m)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ParameterError(f"{name} must be square")
            if not np.all(np.diag(m) > 0):
                raise ParameterError(f"{name} diagonal must be > 0")
            object.__setattr__(self, name, m)

    def diagonals(self) -> dict:
        q, r = np.diag(self.Q), np.diag(self.R)
        return {
            "Q_Vx": q[0], "Q_Vy": q[1], "Q_yaw_rate": q[2],
            "R_ax": r[0], "R_ay": r[1], "R_yaw_rate": r[2],
        }


@dataclass(frozen=True)
class Measurement:
    ax: float
    ay: float
    yaw_rate: float

    def __post_init__(self) -> None:
        if not np.all(np.isfinite([self.ax, self.ay, self.yaw_rate])):
            raise DataError(f"non-finite measurement {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.ax, self.ay, self.yaw_rate])


def jacobian_fd(
    f: Callable[[np.ndarray], np.ndarray],
    z: np.ndarray,
    rel_step: float = 1e-6,
    min_step: float = 1e-6,
) -> np.ndarray:
    """Central-difference Jacobian, step h_i = max(min_step, rel_step * |z_i|)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    cols = []
    for i in range(len(z)):
        h = max(min_step, rel_step * abs(z[i]))
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(f(z + e), dtype=float) - np.asarray(f(z - e), dtype=float)) / (2.0 * h))
    J = np.column_stack(cols)
    if not np.all(np.isfinite(J)):
        raise FilterFault("non-finite Jacobian entry")
    return J


class _TransitionEKF(ExtendedKalmanFilter):
    """filterpy EKF whose state prediction runs an arbitrary transition."""

    def __init__(self, dim_x: int, dim_z: int, transition: Optional[Callable] = None):
        super().__init__(dim_x, dim_z)
        self.transition = transition

    def predict_x(self, u=0):
        self.x = np.asarray(self.transition(self.x[:, 0]), dtype=float).reshape(-1, 1)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _filter(state: EkfState, dim_z: int) -> _TransitionEKF:
    kf = _TransitionEKF(len(state.z_hat), dim_z)
    kf.x = state.z_hat.reshape(-1, 1).copy()
    kf.P = state.P.copy()
    return kf


def kalman_predict(
    state: EkfState,
    transition: Callable[[np.ndarray], np.ndarray],
    Q: np.ndarray,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> EkfState:
    """Generic EKF time update: z <- f(z), P <- F P F^T + Q."""
    F = jacobian(state.z_hat) if jacobian is not None else jacobian_fd(transition, state.z_hat)
    kf = _filter(state, dim_z=1)
    kf.transition = transition
    kf.F = np.asarray(F, dtype=float)
    kf.Q = np.asarray(Q, dtype=float)
    kf.predict()
    z, P = kf.x[:, 0], _symmetrize(kf.P)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(P))):
        raise FilterFault("non-finite prediction")
    return EkfState(z, P)


def kalman_update(
    state: EkfState,
    measurement: np.ndarray,
    observe: Callable[[np.ndarray], np.ndarray],
    R: np.ndarray,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> EkfState:
    """Generic EKF measurement update (Joseph form) with S health checks."""
    y_meas = np.asarray(measurement, dtype=float).reshape(-1)
    R = np.asarray(R, dtype=float)
    H = jacobian(state.z_hat) if jacobian is not None else jacobian_fd(observe, state.z_hat)
    H = np.asarray(H, dtype=float).reshape(len(y_meas), len(state.z_hat))
    S = H @ state.P @ H.T + R
    if not np.all(np.isfinite(S)):
        raise FilterFault("non-finite innovation covariance")
    cond = float(np.linalg.cond(S))
    if not cond < MAX_CONDITION:
        raise FilterFault("singular innovation covariance", condition=cond)

    kf = _filter(state, dim_z=len(y_meas))
    kf.update(
        y_meas.reshape(-1, 1),
        HJacobian=lambda x: H,
        Hx=lambda x: np.asarray(observe(x[:, 0]), dtype=float).reshape(-1, 1),
        R=R,
    )
    innovation = kf.y[:, 0]
    nis = float(innovation @ np.linalg.solve(kf.S, innovation))
    z, P = kf.x[:, 0], _symmetrize(kf.P)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(P))):
        raise FilterFault("non-finite update")
    return EkfState(z, P, nis)


def _model_transition(cm: CandidateModel, control: ControlInput, load_accel, dt: Optional[float]):
    def f(z: np.ndarray) -> np.ndarray:
        try:
            return cm.transition(z, control, load_accel, dt)
        except IntegrationFault as exc:
            raise FilterFault(f"model propagation failed: {exc}") from exc
    return f


def _model_observation(cm: CandidateModel, control: ControlInput, load_accel):
    def g(z: np.ndarray) -> np.ndarray:
        ax, ay = cm.accelerations(z, control, load_accel)
        return np.array([ax, ay, z[2]])
    return g


def ekf_predict(
    state: EkfState,
    control: ControlInput,
    dt: float,
    model: ModelLike,
    Q: np.ndarray,
    load_accel: Tuple[float, float] = (0.0, 0.0),
) -> EkfState:
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    cm = resolve_model(model)
    return kalman_predict(state, _model_transition(cm, control, load_accel, dt), Q)


def ekf_update(
    state: EkfState,
    m: Measurement,
    model: ModelLike,
    R: np.ndarray,
    control: ControlInput = ControlInput(),
    load_accel: Tuple[float, float] = (0.0, 0.0),
) -> EkfState:
    """Update with g(z) = (a_x, a_y, yaw rate) from the model's tire forces."""
    cm = resolve_model(model)
    return kalman_update(state, m.as_array(), _model_observation(cm, control, load_accel), R)


def covariance_from_errors(traj: Trajectory, model: ModelLike, floor: float = COVARIANCE_FLOOR) -> NoiseConfig:
    """Per-trajectory Q from one-step residual variance, R from sensor-minus-truth variance."""
    residuals = one_step_residuals(traj, model)
    if len(residuals) < MIN_STEPS:
        raise DataError(f"{traj.name}: {len(residuals)} steps, covariance selection needs at least {MIN_STEPS}")
    q = residuals[["e_Vx", "e_Vy", "e_yaw_rate"]].to_numpy().var(axis=0)

    idx = comparison_grid(traj)
    truth = traj.truth.iloc[idx]
    sensor_minus_truth = np.column_stack([
        traj.sensors["ax_meas"].to_numpy() - truth["ax"].to_numpy(),
        traj.sensors["ay_meas"].to_numpy() - truth["ay"].to_numpy(),
        traj.sensors["yaw_rate_meas"].to_numpy() - truth["yaw_rate"].to_numpy(),
    ])
    r = sensor_minus_truth.var(axis=0)
    return NoiseConfig(np.maximum(q, floor), np.maximum(r, floor))


def nis_band(n: int, dim: int = 3, confidence: float = NIS_CONFIDENCE) -> Tuple[float, float]:
    """Two-sided chi-square band for the mean of ``n`` NIS samples of dimension ``dim``."""
    if n < 1:
        raise ParameterError("nis_band needs at least one sample")
    tail = 0.5 * (1.0 - confidence)
    dof = n * dim
    return float(chi2.ppf(tail, dof) / n), float(chi2.ppf(1.0 - tail, dof) / n)


@dataclass(frozen=True, eq=False)
class ObserverResult:
    name: str
    model: str
    estimates: pd.DataFrame  # ESTIMATE_COLUMNS, one row per sensor frame
    nis: np.ndarray
    noise: NoiseConfig

    @property
    def mae(self) -> dict:
        return {v: float(self.estimates[f"{v}_err"].iloc[1:].mean()) for v in VARIABLES}

    def nis_summary(self) -> dict:
        lo, hi = nis_band(len(self.nis))
        return {"mean_nis": float(np.mean(self.nis)), "nis_lo": lo, "nis_hi": hi}

    def trajectory_errors(self, ay_max: float) -> TrajectoryErrors:
        """Post-update errors (frames 1..N-1) in the validity error layout."""
        est = self.estimates.iloc[1:]
        errors = pd.DataFrame({
            "t": est["t"].to_numpy(),
            "e_Vx": est["Vx_err"].to_numpy(),
            "e_Vy": est["Vy_err"].to_numpy(),
            "e_yaw_rate": est["yaw_rate_err"].to_numpy(),
        })
        return TrajectoryErrors(self.name, resolve_model(self.model).model_id, ay_max, errors)


def _check_psd(P: np.ndarray, step: int) -> None:
    if np.max(np.abs(P - P.T)) > PSD_TOL or np.min(np.linalg.eigvalsh(P)) < -PSD_TOL:
        raise FilterFault("covariance lost positive semidefiniteness", step=step)


def run_observer(
    traj: Trajectory,
    model: ModelLike,
    noise: NoiseConfig,
    initial: Optional[Sequence[float]] = None,
    initial_P: float = INITIAL_P,
) -> ObserverResult:
    """Run the EKF over the sensor stream from the truth state at frame 0.

    Step k -> k+1 predicts with the inputs and measured accelerations of frame
    k and updates with the measurement of frame k+1. A FilterFault carries the
    failing step index.
    """
    cm = resolve_model(model)
    idx = comparison_grid(traj)
    truth = traj.truth[TRUTH_COLUMNS].to_numpy()[idx]
    sensors = traj.sensors[SENSOR_COLUMNS].to_numpy()
    n = len(idx)
    z_true = truth[:, [4, 5, 6]]  # Vx, Vy, yaw_rate
    z0 = z_true[0] if initial is None else np.asarray(initial, dtype=float)
    state = EkfState(z0, np.eye(3) * initial_P)

    est = np.empty((n, 3))
    est[0] = state.z_hat
    nis = np.empty(n - 1)
    for k in range(n - 1):
        s = sensors[k]
        control = ControlInput(s[8], s[4], s[5], s[6], s[7])
        load_accel = (s[1], s[2])
        nxt = sensors[k + 1]
        try:
            state = ekf_predict(state, control, cm.dt, cm, noise.Q, load_accel)
            state = ekf_update(state, Measurement(nxt[1], nxt[2], nxt[3]), cm, noise.R, control, load_accel)
        except FilterFault as exc:
            raise FilterFault(exc.detail, step=k + 1, condition=exc.condition) from exc
        _check_psd(state.P, k + 1)
        est[k + 1] = state.z_hat
        nis[k] = state.nis

    err = np.abs(est - z_true)
    estimates = pd.DataFrame(np.column_stack([sensors[:, 0], est, err]), columns=ESTIMATE_COLUMNS)
    logger.debug("%s / %s: mean NIS %.3f", traj.name, cm.model_id.value, float(np.mean(nis)))
    return ObserverResult(traj.name, cm.model_id.value, estimates, nis, noise)
