"""High-fidelity four-wheel plant: ground-truth generator and sensor emulation.

The plant integrates the full four-wheel model with RK4 at a fine step
(1 ms by default) and logs ground truth at 100 Hz:

  - translation in x, y and heave, with road slope/bank and aero drag
  - roll, pitch and yaw, driven by corner suspension forces
  - wheel spin: I_r * omega_dot = T - r_eff * F_xp
  - magic-formula tires loaded by the static share plus the suspension force

Sign conventions follow ``modelvalidity.dynamics`` (pitch positive nose-up).
Suspension forces act on the sprung mass; the static preload is balanced by
construction, so only the dynamic part enters the roll/pitch moments.

Maneuvers are open-loop steering/torque series whose steering amplitude is
rescaled by re-simulation until the realized peak lateral acceleration meets
its target. Sensors are the 50 Hz decimation of the truth stream with
Gaussian noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numba import njit

from .dynamics import (
    V_EPS,
    FourWheelState,
    TireParams,
    TireVariant,
    VehicleParams,
    _magic_formula,
    _slip_angle,
    _slip_ratio,
    _tire_to_body,
    tire_preset,
)
from .errors import ParameterError, PlantEnvelopeError
from .trajectory import SENSOR_COLUMNS, TRUTH_COLUMNS

logger = logging.getLogger(__name__)

TRUTH_DT = 0.01  # 100 Hz
SENSOR_DT = 0.02  # 50 Hz
ANGLE_ENVELOPE = 0.3  # rad, roll/pitch abort bound
MAX_SCALING_ITERATIONS = 8
SCALING_TOLERANCE = 0.04
ACCEPT_TOLERANCE = 0.10
STEER_HEADROOM = 0.95  # maneuvers stay inside the steering stop so sensor noise cannot cross it

MANEUVER_KINDS = ("step_steer", "sine_sweep", "slalom", "double_lane_change", "straight_brake")

# state vector layout
IX, IY, IPSI, IVX, IVY, IR, ITH, ITHD, IPH, IPHD, IZ, IVZ, IW, IS = 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 16
N_STATE = 17

# packed parameter layout
(P_M, P_MS, P_IX, P_IY, P_IZ, P_LF, P_LR, P_TL, P_TR, P_H, P_HA, P_R, P_IR, P_RHO, P_CD, P_AF, P_G,
 P_KS, P_CS, P_KARB,
 P_XB, P_XC, P_XD, P_XE, P_XSH, P_XSV, P_XSCALED, P_XSENS,
 P_YB, P_YC, P_YD, P_YE, P_YSH, P_YSV, P_YSCALED, P_YSENS,
 P_FZ0, P_VEPS) = range(38)
N_PARAMS = 38

# road table columns: start, slope, bank, mu, wind
R_START, R_SLOPE, R_BANK, R_MU, R_WIND = range(5)


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuspensionParams:
    spring_rate: float = 30_000.0  # N/m per corner
    damping: float = 3_500.0  # N s/m per corner
    anti_roll_rate: float = 20_000.0  # N/m per axle, 0 disables the bar

    def __post_init__(self) -> None:
        if not (self.spring_rate > 0 and self.damping >= 0 and self.anti_roll_rate >= 0):
            raise ParameterError("suspension rates must be positive (damping/anti-roll >= 0)")


@dataclass(frozen=True)
class RoadSegment:
    start: float = 0.0  # arc length, m
    slope: float = 0.0  # rad, uphill positive
    bank: float = 0.0  # rad
    mu: float = 1.0
    wind: float = 0.0  # m/s, head wind positive

    def __post_init__(self) -> None:
        if abs(self.slope) > 0.15 or abs(self.bank) > 0.15:
            raise ParameterError(f"|slope|, |bank| must be <= 0.15 rad (segment at s={self.start})")
        if not (0 < self.mu <= 1.5):
            raise ParameterError(f"road mu must be in (0, 1.5], got {self.mu!r}")
        if self.start < 0:
            raise ParameterError("segment start must be >= 0")


@dataclass(frozen=True)
class RoadProfile:
    """Piecewise-constant road over arc length."""

    segments: Tuple[RoadSegment, ...] = (RoadSegment(),)

    def __post_init__(self) -> None:
        segs = tuple(RoadSegment(**s) if isinstance(s, Mapping) else s for s in self.segments)
        if not segs:
            raise ParameterError("road profile needs at least one segment")
        segs = tuple(sorted(segs, key=lambda s: s.start))
        if segs[0].start != 0.0:
            raise ParameterError("first road segment must start at s=0")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def flat(cls, mu: float = 1.0) -> "RoadProfile":
        return cls((RoadSegment(mu=mu),))

    def at(self, s: float) -> RoadSegment:
        current = self.segments[0]
        for seg in self.segments:
            if seg.start <= s:
                current = seg
        return current

    def table(self) -> np.ndarray:
        return np.array([[s.start, s.slope, s.bank, s.mu, s.wind] for s in self.segments], dtype=float)


@dataclass(frozen=True)
class PlantSetup:
    vehicle: VehicleParams = VehicleParams()
    tire: TireParams = field(default_factory=lambda: tire_preset("plant_pacejka"))
    suspension: SuspensionParams = SuspensionParams()
    dt_fine: float = 1e-3

    def __post_init__(self) -> None:
        if self.tire.variant is not TireVariant.PACEJKA:
            raise ParameterError("the plant runs magic-formula tires only")
        if self.vehicle.track <= 0:
            raise ParameterError("the plant needs a positive track width")
        if not self.dt_fine > 0:
            raise ParameterError("dt_fine must be > 0")
        substeps = TRUTH_DT / self.dt_fine
        if abs(substeps - round(substeps)) > 1e-9:
            raise ParameterError("dt_fine must divide the 10 ms truth interval")

    @property
    def substeps(self) -> int:
        return int(round(TRUTH_DT / self.dt_fine))

    def packed(self) -> np.ndarray:
        return _pack(self.vehicle, self.tire, self.suspension)


@lru_cache(maxsize=16)
def _pack(vehicle: VehicleParams, tire: TireParams, suspension: SuspensionParams) -> np.ndarray:
    v = vehicle
    lon, lat = tire.longitudinal, tire.lateral
    p = np.array([
        v.total_mass, v.suspended_mass, v.inertia_roll, v.inertia_pitch, v.inertia_yaw,
        v.dist_front, v.dist_rear, v.half_track_left, v.half_track_right, v.cog_height,
        v.aero_height, v.effective_tire_radius, v.wheel_inertia, v.air_density, v.drag_coeff,
        v.frontal_area, v.gravity,
        suspension.spring_rate, suspension.damping, suspension.anti_roll_rate,
        lon.B, lon.C, lon.D, lon.E, lon.S_h, lon.S_v, float(lon.load_scaled), lon.load_sensitivity,
        lat.B, lat.C, lat.D, lat.E, lat.S_h, lat.S_v, float(lat.load_scaled), lat.load_sensitivity,
        tire.nominal_load, V_EPS,
    ], dtype=float)
    assert p.shape == (N_PARAMS,)
    p.setflags(write=False)
    return p


@dataclass(frozen=True)
class PlantState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    yaw_rate: float = 0.0
    roll: float = 0.0
    roll_rate: float = 0.0
    pitch: float = 0.0
    pitch_rate: float = 0.0
    heave: float = 0.0  # m, body displacement from static, up positive
    vz: float = 0.0
    omega: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    arc_length: float = 0.0

    @classmethod
    def cruising(cls, speed: float, vehicle: VehicleParams) -> "PlantState":
        w = speed / vehicle.effective_tire_radius
        return cls(vx=speed, omega=(w, w, w, w))

    def to_array(self) -> np.ndarray:
        a = np.empty(N_STATE)
        a[[IX, IY, IPSI, IVX, IVY, IR, ITH, ITHD, IPH, IPHD, IZ, IVZ]] = (
            self.x, self.y, self.psi, self.vx, self.vy, self.yaw_rate,
            self.roll, self.roll_rate, self.pitch, self.pitch_rate, self.heave, self.vz,
        )
        a[IW:IW + 4] = self.omega
        a[IS] = self.arc_length
        return a

    @classmethod
    def from_array(cls, a: np.ndarray) -> "PlantState":
        a = [float(v) for v in a]
        return cls(
            x=a[IX], y=a[IY], psi=a[IPSI], vx=a[IVX], vy=a[IVY], yaw_rate=a[IR],
            roll=a[ITH], roll_rate=a[ITHD], pitch=a[IPH], pitch_rate=a[IPHD],
            heave=a[IZ], vz=a[IVZ], omega=(a[IW], a[IW + 1], a[IW + 2], a[IW + 3]), arc_length=a[IS],
        )

    def deflections(self, vehicle: VehicleParams) -> Tuple[float, float, float, float]:
        """Corner displacements z_i (m, up positive) in wheel order."""
        return tuple(
            self.heave + cy * self.roll + cx * self.pitch
            for cx, cy in _corners(vehicle)
        )

    def four_wheel(self) -> FourWheelState:
        return FourWheelState(
            x=self.x, vx=self.vx, y=self.y, vy=self.vy, psi=self.psi, yaw_rate=self.yaw_rate,
            roll=self.roll, roll_rate=self.roll_rate, pitch=self.pitch, pitch_rate=self.pitch_rate,
            omega=self.omega, vz=self.vz,
        )


def _corners(vehicle: VehicleParams):
    lf, lr, tl, tr = vehicle.dist_front, vehicle.dist_rear, vehicle.half_track_left, vehicle.half_track_right
    return ((lf, tl), (lf, -tr), (-lr, tl), (-lr, -tr))


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _road_row(road, s):
    i = 0
    for j in range(road.shape[0]):
        if road[j, R_START] <= s:
            i = j
    return road[i]


@njit(cache=True)
def _peak(d, scaled, sens, f_z, mu, f_z0):
    if scaled < 0.5:
        return d
    return d * mu * f_z * (1.0 + sens * (f_z - f_z0) / f_z0)


@njit(cache=True)
def _rates(x, delta, torques, road, p):
    """Time derivative of the plant state plus (a_x, a_y)."""
    m = p[P_M]
    ms = p[P_MS]
    g = p[P_G]
    lf = p[P_LF]
    lr = p[P_LR]
    tl = p[P_TL]
    tr = p[P_TR]
    h = p[P_H]
    r_eff = p[P_R]
    wheelbase = lf + lr
    track = tl + tr

    vx = x[IVX]
    vy = x[IVY]
    r = x[IR]
    theta = x[ITH]
    phi = x[IPH]
    slope = road[R_SLOPE]
    bank = road[R_BANK]
    mu = road[R_MU]

    cx = (lf, lf, -lr, -lr)
    cy = (tl, -tr, tl, -tr)
    axle_share = (lr / wheelbase, lr / wheelbase, lf / wheelbase, lf / wheelbase)
    side_share = (tr / track, tl / track, tr / track, tl / track)

    # corner suspension forces (dynamic part, on the body, up positive)
    f_s = np.empty(4)
    z = np.empty(4)
    for i in range(4):
        z[i] = x[IZ] + cy[i] * theta + cx[i] * phi
        zd = x[IVZ] + cy[i] * x[ITHD] + cx[i] * x[IPHD]
        f_s[i] = -p[P_KS] * z[i] - p[P_CS] * zd
    bar_front = p[P_KARB] * (z[0] - z[1])
    bar_rear = p[P_KARB] * (z[2] - z[3])
    f_s[0] -= bar_front
    f_s[1] += bar_front
    f_s[2] -= bar_rear
    f_s[3] += bar_rear

    dx = np.zeros(N_STATE)
    sum_fx = 0.0
    sum_fy = 0.0
    sum_fz = 0.0
    moment_z = 0.0
    for i in range(4):
        f_z = max(0.0, m * g * axle_share[i] * side_share[i] + f_s[i])
        d_i = delta if i < 2 else 0.0
        v_lon = vx - cy[i] * r
        v_lat = vy + cx[i] * r
        v_xp = v_lon * math.cos(d_i) + v_lat * math.sin(d_i)
        tau = _slip_ratio(x[IW + i], v_xp, r_eff, p[P_VEPS])
        alpha = _slip_angle(d_i, v_lat, v_lon, p[P_VEPS])
        d_x = _peak(p[P_XD], p[P_XSCALED], p[P_XSENS], f_z, mu, p[P_FZ0])
        d_y = _peak(p[P_YD], p[P_YSCALED], p[P_YSENS], f_z, mu, p[P_FZ0])
        f_xp = _magic_formula(tau, p[P_XB], p[P_XC], d_x, p[P_XE], p[P_XSH], p[P_XSV])
        f_yp = _magic_formula(alpha, p[P_YB], p[P_YC], d_y, p[P_YE], p[P_YSH], p[P_YSV])
        f_x, f_y = _tire_to_body(f_xp, f_yp, f_z, d_i, theta, phi)
        sum_fx += f_x
        sum_fy += f_y
        sum_fz += f_z
        moment_z += cx[i] * f_y - cy[i] * f_x
        dx[IW + i] = (torques[i] - r_eff * f_xp) / p[P_IR]

    v_air = vx + road[R_WIND]
    f_aero = 0.5 * p[P_RHO] * p[P_CD] * p[P_AF] * v_air * abs(v_air)

    dvx = r * vy + (sum_fx - m * g * math.sin(phi + slope) - f_aero * math.cos(phi)) / m
    dvy = -r * vx + (sum_fy - m * g * math.sin(theta - bank) * math.cos(phi + slope)) / m
    # static preload (ms * g) is carried by the springs at zero deflection
    dvz = (
        -ms * x[IPHD] * vx
        + f_s[0] + f_s[1] + f_s[2] + f_s[3]
        + ms * g * (1.0 - math.cos(theta - bank) * math.cos(phi + slope))
        - f_aero * math.sin(phi)
    ) / ms
    roll_acc = (-(f_s[1] + f_s[3]) * tr + (f_s[0] + f_s[2]) * tl + sum_fy * h) / p[P_IX]
    pitch_acc = (
        (f_s[0] + f_s[1]) * lf - (f_s[2] + f_s[3]) * lr + sum_fx * h - (p[P_HA] - h) * f_aero
    ) / p[P_IY]

    cpsi = math.cos(x[IPSI])
    spsi = math.sin(x[IPSI])
    dx[IX] = vx * cpsi - vy * spsi
    dx[IY] = vx * spsi + vy * cpsi
    dx[IPSI] = r
    dx[IVX] = dvx
    dx[IVY] = dvy
    dx[IR] = moment_z / p[P_IZ]
    dx[ITH] = x[ITHD]
    dx[ITHD] = roll_acc
    dx[IPH] = x[IPHD]
    dx[IPHD] = pitch_acc
    dx[IZ] = x[IVZ]
    dx[IVZ] = dvz
    dx[IS] = math.sqrt(vx * vx + vy * vy)
    return dx, dvx - r * vy, dvy + r * vx


@njit(cache=True)
def _rk4(x, delta, torques, road, p, dt):
    k1, _, _ = _rates(x, delta, torques, road, p)
    k2, _, _ = _rates(x + 0.5 * dt * k1, delta, torques, road, p)
    k3, _, _ = _rates(x + 0.5 * dt * k2, delta, torques, road, p)
    k4, _, _ = _rates(x + dt * k3, delta, torques, road, p)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _envelope_status(x, limit):
    for v in x:
        if not math.isfinite(v):
            return 1
    if abs(x[ITH]) > limit or abs(x[IPH]) > limit:
        return 2
    return 0


@njit(cache=True)
def _simulate(x0, delta, torques, road, p, dt_fine, substeps, limit):
    """Integrate over the control grid; returns (log, status, frames written).

    Row k of the log holds the state at frame k followed by (a_x, a_y).
    """
    n = delta.shape[0]
    log = np.empty((n, N_STATE + 2))
    x = x0.copy()
    for k in range(n):
        status = _envelope_status(x, limit)
        if status != 0:
            log[k, :N_STATE] = x
            return log, status, k
        row = _road_row(road, x[IS])
        _, ax, ay = _rates(x, delta[k], torques[k], row, p)
        log[k, :N_STATE] = x
        log[k, N_STATE] = ax
        log[k, N_STATE + 1] = ay
        if k == n - 1:
            break
        for _ in range(substeps):
            row = _road_row(road, x[IS])
            x = _rk4(x, delta[k], torques[k], row, p, dt_fine)
    return log, 0, n


# ---------------------------------------------------------------------------
# Simulation API
# ---------------------------------------------------------------------------


def plant_step(
    state: PlantState,
    torques: Sequence[float],
    delta: float,
    road: RoadProfile,
    setup: PlantSetup,
    dt_fine: Optional[float] = None,
) -> PlantState:
    """One RK4 step of the plant."""
    dt = setup.dt_fine if dt_fine is None else dt_fine
    if not dt > 0:
        raise ParameterError("dt_fine must be > 0")
    x = state.to_array()
    row = road.table()[_road_index(road, state.arc_length)]
    nxt = _rk4(x, float(delta), np.asarray(torques, dtype=float), row, setup.packed(), dt)
    status = _envelope_status(nxt, ANGLE_ENVELOPE)
    if status:
        raise PlantEnvelopeError(_STATUS_TEXT[status], t=dt, state=PlantState.from_array(nxt))
    return PlantState.from_array(nxt)


def plant_rates(state: PlantState, torques: Sequence[float], delta: float, road: RoadProfile, setup: PlantSetup):
    """(state derivative array, a_x, a_y) at ``state``."""
    row = road.table()[_road_index(road, state.arc_length)]
    dx, ax, ay = _rates(state.to_array(), float(delta), np.asarray(torques, dtype=float), row, setup.packed())
    return dx, float(ax), float(ay)


def _road_index(road: RoadProfile, s: float) -> int:
    idx = 0
    for i, seg in enumerate(road.segments):
        if seg.start <= s:
            idx = i
    return idx


_STATUS_TEXT = {1: "non-finite plant state", 2: f"roll/pitch beyond +/-{ANGLE_ENVELOPE} rad"}


@dataclass(frozen=True, eq=False)
class ControlSeries:
    """Plant inputs on the 100 Hz truth grid, held over each 10 ms interval."""

    t: np.ndarray
    delta: np.ndarray
    torques: np.ndarray  # (n, 4) N m, wheel order fl, fr, rl, rr

    def __post_init__(self) -> None:
        n = len(self.t)
        if self.delta.shape != (n,) or self.torques.shape != (n, 4):
            raise ParameterError("control series arrays disagree in length")

    def __len__(self) -> int:
        return len(self.t)

    def mirrored(self) -> "ControlSeries":
        return ControlSeries(self.t.copy(), -self.delta, self.torques[:, [1, 0, 3, 2]].copy())

    def equals(self, other: "ControlSeries") -> bool:
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.torques, other.torques)
        )


@dataclass(frozen=True, eq=False)
class PlantRun:
    truth: pd.DataFrame  # TRUTH_COLUMNS at 100 Hz
    signals: pd.DataFrame  # t, w_fl..w_rr, delta at 100 Hz
    states: np.ndarray  # (n, N_STATE)

    @property
    def ay_max(self) -> float:
        return float(np.max(np.abs(self.truth["ay"].to_numpy())))

    def final_state(self) -> PlantState:
        return PlantState.from_array(self.states[-1])


def simulate_plant(
    controls: ControlSeries,
    initial: PlantState,
    road: RoadProfile = RoadProfile(),
    setup: PlantSetup = PlantSetup(),
) -> PlantRun:
    """Run the plant over ``controls`` and log ground truth at 100 Hz.

    Raises PlantEnvelopeError if the state leaves the envelope.
    """
    log, status, frames = _simulate(
        initial.to_array(),
        np.ascontiguousarray(controls.delta, dtype=float),
        np.ascontiguousarray(controls.torques, dtype=float),
        road.table(),
        setup.packed(),
        setup.dt_fine,
        setup.substeps,
        ANGLE_ENVELOPE,
    )
    if status:
        raise PlantEnvelopeError(
            _STATUS_TEXT[int(status)], t=float(controls.t[frames]), state=PlantState.from_array(log[frames, :N_STATE])
        )
    states = log[:, :N_STATE]
    t = np.asarray(controls.t, dtype=float)
    truth = pd.DataFrame({
        "t": t,
        "X": states[:, IX],
        "Y": states[:, IY],
        "psi": states[:, IPSI],
        "Vx": states[:, IVX],
        "Vy": states[:, IVY],
        "yaw_rate": states[:, IR],
        "ax": log[:, N_STATE],
        "ay": log[:, N_STATE + 1],
        "roll": states[:, ITH],
        "pitch": states[:, IPH],
        "beta": np.arctan2(states[:, IVY], states[:, IVX]),
    }, columns=TRUTH_COLUMNS)
    signals = pd.DataFrame({
        "t": t,
        "w_fl": states[:, IW],
        "w_fr": states[:, IW + 1],
        "w_rl": states[:, IW + 2],
        "w_rr": states[:, IW + 3],
        "delta": np.asarray(controls.delta, dtype=float),
    })
    return PlantRun(truth=truth, signals=signals, states=states)


# ---------------------------------------------------------------------------
# Maneuvers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManeuverSpec:
    kind: str
    target_ay_max: float  # m/s^2
    initial_speed: float = 20.0  # m/s
    duration: float = 20.0  # s
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in MANEUVER_KINDS:
            raise ParameterError(f"unknown maneuver kind {self.kind!r} (known: {MANEUVER_KINDS})")
        if not (0 < self.target_ay_max <= 10.5):
            raise ParameterError(f"target_ay_max must be in (0, 10.5], got {self.target_ay_max!r}")
        if not self.duration > 0:
            raise ParameterError("duration must be > 0")
        if not self.initial_speed > 0:
            raise ParameterError("initial_speed must be > 0")


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def steering_profile(spec: ManeuverSpec, amplitude: float, t: np.ndarray) -> np.ndarray:
    """Unit-shape steering series of ``spec.kind`` scaled by ``amplitude`` (rad)."""
    rng = np.random.default_rng(spec.seed)
    jitter = rng.uniform(0.0, 1.0, size=3)
    fade = _smoothstep(t / 1.0)
    if spec.kind == "step_steer":
        t0 = 1.0 + 0.5 * jitter[0]
        shape = _smoothstep((t - t0) / 0.3)
    elif spec.kind == "sine_sweep":
        f0, f1 = 0.2, 1.0
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t ** 2 / (2 * spec.duration)) + 2 * np.pi * jitter[0]
        shape = fade * np.sin(phase)
    elif spec.kind == "slalom":
        freq = 0.35 + 0.2 * jitter[0]
        shape = fade * np.sin(2 * np.pi * freq * t)
    elif spec.kind == "double_lane_change":
        t0 = 1.0 + jitter[0]
        tau = np.mod(t - t0, 7.0)
        out = np.where(tau < 2.0, np.sin(np.pi * tau), 0.0)
        back = np.where((tau >= 3.0) & (tau < 5.0), -np.sin(np.pi * (tau - 3.0)), 0.0)
        shape = np.where(t >= t0, out + back, 0.0)
    else:  # straight_brake: gentle weave while braking
        shape = fade * np.sin(2 * np.pi * (0.25 + 0.1 * jitter[0]) * t)
    return amplitude * shape


def _drive_torques(spec: ManeuverSpec, t: np.ndarray, setup: PlantSetup) -> np.ndarray:
    v = setup.vehicle
    drag = 0.5 * v.air_density * v.drag_coeff * v.frontal_area * spec.initial_speed ** 2
    per_wheel = np.full(len(t), v.effective_tire_radius * drag / 4.0)
    if spec.kind == "straight_brake":
        braking = (t >= 3.0) & (t < 5.5)
        per_wheel = per_wheel - braking * v.effective_tire_radius * v.total_mass * 3.0 / 4.0
    return np.repeat(per_wheel[:, None], 4, axis=1)


def shape_controls(spec: ManeuverSpec, amplitude: float, setup: PlantSetup = PlantSetup()) -> ControlSeries:
    """Deterministic open-loop control series for a fixed steering amplitude."""
    n = int(round(spec.duration / TRUTH_DT)) + 1
    t = np.arange(n) * TRUTH_DT
    limit = STEER_HEADROOM * setup.vehicle.steer_limit
    delta = np.clip(steering_profile(spec, amplitude, t), -limit, limit)
    return ControlSeries(t=t, delta=delta, torques=_drive_torques(spec, t, setup))


@dataclass(frozen=True, eq=False)
class Maneuver:
    spec: ManeuverSpec
    controls: ControlSeries
    amplitude: float
    realized_ay_max: float
    reachable: bool
    iterations: int
    run: PlantRun


def _next_amplitude(history: List[Tuple[float, float]], target: float, limit: float) -> Optional[float]:
    a2, r2 = history[-1]
    guess = a2 * target / r2 if r2 > 0 else 2.0 * a2
    if len(history) >= 2:
        a1, r1 = history[-2]
        if r2 != r1 and a2 != a1 and (r2 - r1) / (a2 - a1) > 0:
            guess = a2 + (target - r2) * (a2 - a1) / (r2 - r1)
    guess = min(max(guess, 0.5 * a2), 2.0 * a2, limit)
    if a2 >= limit and guess >= a2:
        return None
    return guess


def generate_maneuver(
    spec: ManeuverSpec,
    setup: PlantSetup = PlantSetup(),
    road: RoadProfile = RoadProfile(),
) -> Maneuver:
    """Scale the steering amplitude until max |a_y| lands on the target.

    An unreachable target (friction limit or steering stop) returns the best
    attempt with ``reachable=False`` instead of failing.
    """
    vehicle = setup.vehicle
    initial = PlantState.cruising(spec.initial_speed, vehicle)
    steer_limit = STEER_HEADROOM * vehicle.steer_limit
    amplitude = min(vehicle.wheelbase * spec.target_ay_max / spec.initial_speed ** 2, steer_limit)
    history: List[Tuple[float, float]] = []
    best = None
    last_error: Optional[PlantEnvelopeError] = None
    iterations = 0
    for iterations in range(1, MAX_SCALING_ITERATIONS + 1):
        controls = shape_controls(spec, amplitude, setup)
        try:
            run = simulate_plant(controls, initial, road, setup)
        except PlantEnvelopeError as exc:
            logger.debug("%s: amplitude %.4f left the envelope (%s)", spec.kind, amplitude, exc)
            last_error = exc
            amplitude *= 0.6
            continue
        realized = run.ay_max
        miss = abs(realized / spec.target_ay_max - 1.0)
        logger.debug("%s iteration %d: amplitude=%.4f ay_max=%.3f target=%.3f", spec.kind, iterations, amplitude, realized, spec.target_ay_max)
        if best is None or miss < best[0]:
            best = (miss, amplitude, controls, run)
        if miss <= SCALING_TOLERANCE:
            break
        history.append((amplitude, realized))
        nxt = _next_amplitude(history, spec.target_ay_max, steer_limit)
        if nxt is None:
            break
        amplitude = nxt
    if best is None:
        assert last_error is not None
        raise last_error
    miss, amplitude, controls, run = best
    reachable = miss <= ACCEPT_TOLERANCE
    if not reachable:
        logger.warning(
            "target a_y %.2f m/s^2 not reached for %s (seed %d): achievable max %.2f",
            spec.target_ay_max, spec.kind, spec.seed, run.ay_max,
        )
    return Maneuver(spec, controls, amplitude, run.ay_max, reachable, iterations, run)


# ---------------------------------------------------------------------------
# Sensors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSigmas:
    ax: float = 0.05  # m/s^2
    ay: float = 0.05
    yaw_rate: float = 0.002  # rad/s
    wheel_speed: float = 0.05  # rad/s
    delta: float = 0.001  # rad

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name) >= 0:
                raise ParameterError(f"noise sigma {f.name} must be >= 0")

    @classmethod
    def zero(cls) -> "NoiseSigmas":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def per_channel(self) -> np.ndarray:
        """Sigmas in SENSOR_COLUMNS order (without t)."""
        w = self.wheel_speed
        return np.array([self.ax, self.ay, self.yaw_rate, w, w, w, w, self.delta])

    def as_dict(self) -> dict:
        return asdict(self)


def add_sensor_noise(clean: pd.DataFrame, noise: NoiseSigmas, seed: int) -> pd.DataFrame:
    """Add zero-mean Gaussian noise to every sensor channel, deterministic per seed."""
    rng = np.random.default_rng(seed)
    channels = SENSOR_COLUMNS[1:]
    draws = rng.standard_normal((len(clean), len(channels)))
    noisy = clean.copy()
    noisy[channels] = clean[channels].to_numpy() + draws * noise.per_channel()
    return noisy


def sample_sensors(truth: pd.DataFrame, signals: pd.DataFrame, noise: NoiseSigmas, seed: int) -> pd.DataFrame:
    """50 Hz sensor stream: every second truth frame plus noise."""
    idx = np.arange(len(truth) // 2) * 2
    clean = pd.DataFrame({
        "t": truth["t"].to_numpy()[idx],
        "ax_meas": truth["ax"].to_numpy()[idx],
        "ay_meas": truth["ay"].to_numpy()[idx],
        "yaw_rate_meas": truth["yaw_rate"].to_numpy()[idx],
        "w_fl": signals["w_fl"].to_numpy()[idx],
        "w_fr": signals["w_fr"].to_numpy()[idx],
        "w_rl": signals["w_rl"].to_numpy()[idx],
        "w_rr": signals["w_rr"].to_numpy()[idx],
        "delta": signals["delta"].to_numpy()[idx],
    }, columns=SENSOR_COLUMNS)
    return add_sensor_noise(clean, noise, seed)


def plant_summary(setup: PlantSetup, road: RoadProfile) -> dict:
    return {
        "dt_fine": setup.dt_fine,
        "suspension": asdict(setup.suspension),
        "road": [asdict(s) for s in road.segments],
    }
