"""Tire force models and the candidate vehicle models.

Contents:
  - parameter sets: VehicleParams, TireParams (+ named presets)
  - slip kinematics: slip_ratio, slip_angles
  - tire laws: linear, Dugoff, Pacejka magic formula
  - load transfer (vertical_forces) and the tire-to-body projection
  - one-step explicit-Euler propagation of the dynamic bicycle model and of the
    planar four-wheel model

Conventions:
  - body frame x forward, y left, z up; yaw positive counter-clockwise
  - roll positive when the body leans to the right (left side up)
  - pitch positive nose-up
  - wheel order is always (fl, fr, rl, rr)

The scalar kernels are numba-compiled; the plant reuses them inside its RK4
loop. ``NUMBA_DISABLE_JIT=1`` runs everything as plain Python.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Any, Mapping, NamedTuple, Tuple, Union

import numpy as np
from numba import njit

from .errors import IntegrationFault, ParameterError, TireLoadError

logger = logging.getLogger(__name__)

V_EPS = 0.5  # m/s, low-speed guard for slip kinematics
TAU_BACKOFF = 1e-6
DEFAULT_DT = 0.02
SPEED_ENVELOPE = 100.0


# ---------------------------------------------------------------------------
# Parameter sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VehicleParams:
    total_mass: float = 1578.0  # kg
    suspended_mass: float = 1410.0  # kg
    inertia_roll: float = 590.0  # kg m^2
    inertia_pitch: float = 2650.0
    inertia_yaw: float = 2924.0
    dist_front: float = 1.134  # m, cog -> front axle
    dist_rear: float = 1.578
    half_track_left: float = 0.7565
    half_track_right: float = 0.7565
    cog_height: float = 0.55
    aero_height: float = 0.60
    effective_tire_radius: float = 0.32
    wheel_inertia: float = 1.2
    air_density: float = 1.225
    drag_coeff: float = 0.29
    frontal_area: float = 2.33
    gravity: float = 9.81
    steer_limit: float = 0.6  # rad, physical steering stop

    def __post_init__(self) -> None:
        strictly_positive = (
            "total_mass", "suspended_mass", "inertia_roll", "inertia_pitch", "inertia_yaw",
            "dist_front", "dist_rear", "cog_height", "aero_height", "effective_tire_radius",
            "wheel_inertia", "gravity", "steer_limit",
        )
        for name in strictly_positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"VehicleParams.{name} must be > 0, got {value!r}")
        for name in ("air_density", "drag_coeff", "frontal_area", "half_track_left", "half_track_right"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"VehicleParams.{name} must be >= 0, got {value!r}")
        if self.suspended_mass > self.total_mass:
            raise ParameterError("suspended_mass cannot exceed total_mass")
        # t_l = t_r = 0 is the bicycle reduction; anything else needs a real track
        if self.track <= 0 and (self.half_track_left != 0 or self.half_track_right != 0):
            raise ParameterError("half_track_left + half_track_right must be > 0")

    @property
    def wheelbase(self) -> float:
        return self.dist_front + self.dist_rear

    @property
    def track(self) -> float:
        return self.half_track_left + self.half_track_right

    def with_overrides(self, overrides: Mapping[str, Any]) -> "VehicleParams":
        return replace(self, **_checked_overrides(type(self), overrides))


# Audi A6 Avant C7: mass, axle distances, track and yaw inertia are the
# published values; the remaining entries are typical for the class.
VEHICLE_PRESETS = {
    "audi_a6_avant_c7": VehicleParams(),
}


def vehicle_preset(name: str) -> VehicleParams:
    try:
        return VEHICLE_PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown vehicle preset {name!r} (known: {sorted(VEHICLE_PRESETS)})") from None


class TireVariant(str, enum.Enum):
    LINEAR = "linear"
    DUGOFF = "dugoff"
    PACEJKA = "pacejka"


@dataclass(frozen=True)
class MagicFormula:
    """One channel (longitudinal or lateral) of the magic formula.

    With ``load_scaled`` the peak is ``D * mu * F_z`` (D is then a friction
    multiplier), otherwise ``D`` is an absolute force in N.
    ``load_sensitivity`` scales the load-scaled peak by
    ``1 + load_sensitivity * (F_z - F_z0) / F_z0``.
    """

    B: float
    C: float
    D: float = 1.0
    E: float = 0.0
    S_h: float = 0.0
    S_v: float = 0.0
    load_scaled: bool = True
    load_sensitivity: float = 0.0

    def __post_init__(self) -> None:
        if not (0 < self.C <= 3):
            raise ParameterError(f"magic formula C must be in (0, 3], got {self.C!r}")
        if not self.D > 0:
            raise ParameterError(f"magic formula D must be > 0, got {self.D!r}")
        if not (math.isfinite(self.B) and math.isfinite(self.E)):
            raise ParameterError("magic formula B and E must be finite")

    def peak(self, f_z: float, mu: float, nominal_load: float) -> float:
        if not self.load_scaled:
            return self.D
        return self.D * mu * f_z * (1.0 + self.load_sensitivity * (f_z - nominal_load) / nominal_load)


@dataclass(frozen=True)
class TireParams:
    variant: TireVariant = TireVariant.PACEJKA
    c_tau: float = 84_289.0  # N per unit slip, = 12 * 1.65 * mu * F_z0
    c_alpha: float = 80_883.0  # N/rad, = 10 * 1.9 * mu * F_z0
    mu: float = 1.1
    longitudinal: MagicFormula = MagicFormula(B=12.0, C=1.65, D=1.0, E=0.9)
    lateral: MagicFormula = MagicFormula(B=10.0, C=1.9, D=1.0, E=0.97)
    nominal_load: float = 3870.0  # N, static load of one wheel
    dugoff_denominator: str = "one_plus_tau"

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", TireVariant(self.variant))
        for name in ("longitudinal", "lateral"):
            channel = getattr(self, name)
            if isinstance(channel, Mapping):
                object.__setattr__(self, name, MagicFormula(**channel))
        if not (self.c_tau > 0 and self.c_alpha > 0):
            raise ParameterError("tire stiffnesses must be > 0")
        if not (0 < self.mu <= 1.5):
            raise ParameterError(f"tire mu must be in (0, 1.5], got {self.mu!r}")
        if not self.nominal_load > 0:
            raise ParameterError("nominal_load must be > 0")
        if self.dugoff_denominator not in ("one_plus_tau", "one_minus_tau"):
            raise ParameterError(f"unknown dugoff_denominator {self.dugoff_denominator!r}")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "TireParams":
        return replace(self, **_checked_overrides(type(self), overrides))

    def lumped(self, wheels: int = 2) -> "TireParams":
        """Equivalent single wheel carrying the load of ``wheels`` wheels."""
        return replace(
            self,
            c_tau=self.c_tau * wheels,
            c_alpha=self.c_alpha * wheels,
            nominal_load=self.nominal_load * wheels,
            longitudinal=_lumped_channel(self.longitudinal, wheels),
            lateral=_lumped_channel(self.lateral, wheels),
        )


def _lumped_channel(channel: MagicFormula, wheels: int) -> MagicFormula:
    d = channel.D if channel.load_scaled else channel.D * wheels
    return replace(channel, D=d, S_v=channel.S_v * wheels)


def _checked_overrides(cls: type, overrides: Mapping[str, Any]) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ParameterError(f"unknown {cls.__name__} fields: {unknown}")
    return dict(overrides)


TIRE_PRESETS = {
    "linear": TireParams(variant=TireVariant.LINEAR),
    "dugoff": TireParams(variant=TireVariant.DUGOFF),
    "pacejka": TireParams(variant=TireVariant.PACEJKA),
    # the candidate sets above are this tire at its nominal load, without the
    # load sensitivity; the plant takes friction from the road, so mu stays 1
    "plant_pacejka": TireParams(
        variant=TireVariant.PACEJKA,
        mu=1.0,
        longitudinal=MagicFormula(B=12.0, C=1.65, D=1.1, E=0.9, load_sensitivity=-0.08),
        lateral=MagicFormula(B=10.0, C=1.9, D=1.1, E=0.97, load_sensitivity=-0.08),
    ),
}


def tire_preset(name: str) -> TireParams:
    try:
        return TIRE_PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown tire preset {name!r} (known: {sorted(TIRE_PRESETS)})") from None


@lru_cache(maxsize=64)
def _axle_tire(tire: TireParams) -> TireParams:
    return tire.lumped(2)


# ---------------------------------------------------------------------------
# Scalar kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _slip_ratio(omega, v_xp, r_eff, v_eps):
    v_wheel = r_eff * omega
    if abs(v_wheel) < v_eps and abs(v_xp) < v_eps:
        return 0.0
    if v_wheel >= v_xp:
        tau = (v_wheel - v_xp) / max(abs(v_wheel), v_eps)
    else:
        tau = (v_wheel - v_xp) / max(abs(v_xp), v_eps)
    return min(1.0, max(-1.0, tau))


@njit(cache=True)
def _slip_angle(delta, v_lat, v_lon, v_eps):
    speed = abs(v_lon)
    if speed >= v_eps:
        return delta - math.atan(v_lat / v_lon)
    den = v_eps if v_lon >= 0.0 else -v_eps
    return (delta - math.atan(v_lat / den)) * (speed / v_eps)


@njit(cache=True)
def _magic_formula(x, B, C, D, E, S_h, S_v):
    bx = B * (x + S_h)
    return D * math.sin(C * math.atan(bx - E * (bx - math.atan(bx)))) + S_v


@njit(cache=True)
def _dugoff(tau, alpha, f_z, c_tau, c_alpha, mu, minus_form):
    tau = min(max(tau, -1.0 + TAU_BACKOFF), 1.0 - TAU_BACKOFF)
    tan_a = math.tan(alpha)
    k = math.hypot(c_tau * tau, c_alpha * tan_a)
    if k == 0.0:
        return 0.0, 0.0
    lam = mu * f_z * (1.0 + tau) / (2.0 * k)
    f = (2.0 - lam) * lam if lam < 1.0 else 1.0
    den = (1.0 - tau) if minus_form else (1.0 + tau)
    return c_tau * tau / den * f, c_alpha * tan_a / den * f


@njit(cache=True)
def _tire_to_body(f_xp, f_yp, f_z, delta, theta, phi):
    cd = math.cos(delta)
    sd = math.sin(delta)
    lon = f_xp * cd - f_yp * sd
    lat = f_yp * cd + f_xp * sd
    f_x = lon * math.cos(phi) + f_z * math.sin(phi)
    f_y = -lon * math.sin(theta) * math.sin(phi) + lat * math.cos(theta) + f_z * math.sin(theta) * math.cos(phi)
    return f_x, f_y


# ---------------------------------------------------------------------------
# Public tire layer
# ---------------------------------------------------------------------------


class TireForce(NamedTuple):
    F_xp: float
    F_yp: float
    F_x: float
    F_y: float
    F_z: float


def slip_ratio(omega: float, v_xp: float, r_eff: float) -> float:
    """Longitudinal slip, positive when driving, clamped to [-1, 1]."""
    if not r_eff > 0:
        raise ParameterError("r_eff must be > 0")
    return float(_slip_ratio(float(omega), float(v_xp), float(r_eff), V_EPS))


def slip_angles(state: Any, delta: float, params: VehicleParams, per_wheel: bool = False) -> Tuple[float, ...]:
    """Slip angles from a state with ``vx``, ``vy`` and ``yaw_rate``.

    Returns ``(front, rear)`` in bicycle mode and ``(fl, fr, rl, rr)`` with
    ``per_wheel``.
    """
    vx, vy, r = float(state.vx), float(state.vy), float(state.yaw_rate)
    lat_front = vy + params.dist_front * r
    lat_rear = vy - params.dist_rear * r
    if not per_wheel:
        return (
            float(_slip_angle(delta, lat_front, vx, V_EPS)),
            float(_slip_angle(0.0, lat_rear, vx, V_EPS)),
        )
    left = vx - params.half_track_left * r
    right = vx + params.half_track_right * r
    return (
        float(_slip_angle(delta, lat_front, left, V_EPS)),
        float(_slip_angle(delta, lat_front, right, V_EPS)),
        float(_slip_angle(0.0, lat_rear, left, V_EPS)),
        float(_slip_angle(0.0, lat_rear, right, V_EPS)),
    )


def tire_force_linear(tau: float, alpha: float, params: TireParams) -> Tuple[float, float]:
    if params.variant is not TireVariant.LINEAR:
        raise ParameterError(f"expected a linear tire, got {params.variant.value}")
    return params.c_tau * tau, params.c_alpha * alpha


def tire_force_dugoff(tau: float, alpha: float, f_z: float, params: TireParams) -> Tuple[float, float]:
    if params.variant is not TireVariant.DUGOFF:
        raise ParameterError(f"expected a Dugoff tire, got {params.variant.value}")
    if f_z < 0:
        raise TireLoadError(f"negative normal load {f_z!r} N")
    f_xp, f_yp = _dugoff(
        float(tau), float(alpha), float(f_z), params.c_tau, params.c_alpha, params.mu,
        params.dugoff_denominator == "one_minus_tau",
    )
    return float(f_xp), float(f_yp)


def tire_force_pacejka(
    x: float,
    channel: MagicFormula,
    f_z: Union[float, None] = None,
    mu: float = 1.0,
    nominal_load: float = 3870.0,
) -> float:
    if channel.load_scaled:
        if f_z is None:
            raise ParameterError("load-scaled magic formula needs f_z")
        if f_z < 0:
            raise TireLoadError(f"negative normal load {f_z!r} N")
        d = channel.peak(f_z, mu, nominal_load)
    else:
        d = channel.D
    return float(_magic_formula(float(x), channel.B, channel.C, d, channel.E, channel.S_h, channel.S_v))


def tire_forces(tau: float, alpha: float, f_z: float, tire: TireParams) -> Tuple[float, float]:
    """(F_xp, F_yp) for whichever law ``tire`` selects."""
    if tire.variant is TireVariant.LINEAR:
        return tire.c_tau * tau, tire.c_alpha * alpha
    if tire.variant is TireVariant.DUGOFF:
        return tire_force_dugoff(tau, alpha, f_z, tire)
    return (
        tire_force_pacejka(tau, tire.longitudinal, f_z, tire.mu, tire.nominal_load),
        tire_force_pacejka(alpha, tire.lateral, f_z, tire.mu, tire.nominal_load),
    )


def tire_curve(tire: TireParams, alphas: np.ndarray, f_z: float, tau: float = 0.0) -> np.ndarray:
    """Lateral force over a slip-angle grid at fixed load and slip ratio."""
    return np.array([tire_forces(tau, float(a), f_z, tire)[1] for a in np.asarray(alphas, dtype=float)])


class WheelLoads(NamedTuple):
    fl: float
    fr: float
    rl: float
    rr: float
    wheel_lift: bool

    @property
    def total(self) -> float:
        return self.fl + self.fr + self.rl + self.rr


def vertical_forces(a_x: float, a_y: float, params: VehicleParams) -> WheelLoads:
    """Quasi-static wheel loads under longitudinal and lateral acceleration.

    Positive a_y (turning left) loads the right-hand wheels. Loads are floored
    at zero and ``wheel_lift`` reports whether the floor engaged.
    """
    m, g, h, length = params.total_mass, params.gravity, params.cog_height, params.wheelbase
    front = m * (params.dist_rear / length * g - h / length * a_x)
    rear = m * (params.dist_front / length * g + h / length * a_x)
    track = params.track
    lateral = h / (track * g) * a_y if track > 0 else 0.0
    loads = (front * (0.5 - lateral), front * (0.5 + lateral), rear * (0.5 - lateral), rear * (0.5 + lateral))
    lift = min(loads) < 0.0
    if lift:
        logger.debug("wheel lift at a_x=%.3f a_y=%.3f", a_x, a_y)
        loads = tuple(max(0.0, f) for f in loads)
    return WheelLoads(*loads, wheel_lift=lift)


def tire_to_body(f_xp: float, f_yp: float, f_z: float, delta: float, theta: float = 0.0, phi: float = 0.0) -> Tuple[float, float]:
    f_x, f_y = _tire_to_body(float(f_xp), float(f_yp), float(f_z), float(delta), float(theta), float(phi))
    return float(f_x), float(f_y)


# ---------------------------------------------------------------------------
# States and inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlInput:
    delta: float = 0.0
    omega_fl: float = 0.0
    omega_fr: float = 0.0
    omega_rl: float = 0.0
    omega_rr: float = 0.0

    @classmethod
    def straight(cls, speed: float, r_eff: float, delta: float = 0.0) -> "ControlInput":
        w = speed / r_eff
        return cls(delta, w, w, w, w)

    @property
    def wheel_speeds(self) -> Tuple[float, float, float, float]:
        return (self.omega_fl, self.omega_fr, self.omega_rl, self.omega_rr)

    def mirrored(self) -> "ControlInput":
        return ControlInput(-self.delta, self.omega_fr, self.omega_fl, self.omega_rr, self.omega_rl)


@dataclass(frozen=True)
class BicycleState:
    """Dynamic bicycle state.

    ``ax``/``ay`` are the accelerations at this state; the next step uses them
    for load transfer.
    """

    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    psi: float = 0.0
    yaw_rate: float = 0.0
    ax: float = 0.0
    ay: float = 0.0

    def mirrored(self) -> "BicycleState":
        return replace(self, y=-self.y, vy=-self.vy, psi=-self.psi, yaw_rate=-self.yaw_rate, ay=-self.ay)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True)
class FourWheelState:
    x: float = 0.0
    vx: float = 0.0
    y: float = 0.0
    vy: float = 0.0
    psi: float = 0.0
    yaw_rate: float = 0.0
    roll: float = 0.0
    roll_rate: float = 0.0
    pitch: float = 0.0
    pitch_rate: float = 0.0
    omega: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    vz: float = 0.0
    ax: float = 0.0
    ay: float = 0.0

    def mirrored(self) -> "FourWheelState":
        fl, fr, rl, rr = self.omega
        return replace(
            self, y=-self.y, vy=-self.vy, psi=-self.psi, yaw_rate=-self.yaw_rate,
            roll=-self.roll, roll_rate=-self.roll_rate, omega=(fr, fl, rr, rl), ay=-self.ay,
        )

    def as_array(self) -> np.ndarray:
        values = []
        for f in fields(self):
            v = getattr(self, f.name)
            values.extend(v if f.name == "omega" else (v,))
        return np.array(values, dtype=float)


VehicleState = Union[BicycleState, FourWheelState]


# ---------------------------------------------------------------------------
# Candidate models
# ---------------------------------------------------------------------------


def _check_step(control: ControlInput, dt: float, vehicle: VehicleParams) -> None:
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    if abs(control.delta) > vehicle.steer_limit:
        raise ParameterError(f"|delta|={abs(control.delta):.3f} exceeds the steering stop {vehicle.steer_limit}")


def _wheel_force(omega, v_lon, v_lat, delta, f_z, tire, r_eff):
    """Body-frame (F_x, F_y) of one (possibly lumped) wheel."""
    v_xp = v_lon * math.cos(delta) + v_lat * math.sin(delta)
    tau = _slip_ratio(omega, v_xp, r_eff, V_EPS)
    alpha = _slip_angle(delta, v_lat, v_lon, V_EPS)
    f_xp, f_yp = tire_forces(tau, alpha, f_z, tire)
    return _tire_to_body(f_xp, f_yp, f_z, delta, 0.0, 0.0)


def bicycle_forces(
    vx: float, vy: float, yaw_rate: float, control: ControlInput, tire: TireParams,
    vehicle: VehicleParams, load_ax: float = 0.0, load_ay: float = 0.0,
) -> Tuple[float, float, float]:
    """Total (F_x, F_y, yaw moment) of the bicycle model."""
    loads = vertical_forces(load_ax, load_ay, vehicle)
    axle = _axle_tire(tire)
    r_eff = vehicle.effective_tire_radius
    fx_f, fy_f = _wheel_force(
        0.5 * (control.omega_fl + control.omega_fr), vx, vy + vehicle.dist_front * yaw_rate,
        control.delta, loads.fl + loads.fr, axle, r_eff,
    )
    fx_r, fy_r = _wheel_force(
        0.5 * (control.omega_rl + control.omega_rr), vx, vy - vehicle.dist_rear * yaw_rate,
        0.0, loads.rl + loads.rr, axle, r_eff,
    )
    return fx_f + fx_r, fy_f + fy_r, vehicle.dist_front * fy_f - vehicle.dist_rear * fy_r


def four_wheel_forces(
    vx: float, vy: float, yaw_rate: float, control: ControlInput, tire: TireParams,
    vehicle: VehicleParams, load_ax: float = 0.0, load_ay: float = 0.0,
) -> Tuple[float, float, float]:
    """Total (F_x, F_y, yaw moment) of the planar four-wheel model."""
    loads = vertical_forces(load_ax, load_ay, vehicle)
    r_eff = vehicle.effective_tire_radius
    t_l, t_r = vehicle.half_track_left, vehicle.half_track_right
    lat_f = vy + vehicle.dist_front * yaw_rate
    lat_r = vy - vehicle.dist_rear * yaw_rate
    left = vx - t_l * yaw_rate
    right = vx + t_r * yaw_rate
    d = control.delta
    fx_fl, fy_fl = _wheel_force(control.omega_fl, left, lat_f, d, loads.fl, tire, r_eff)
    fx_fr, fy_fr = _wheel_force(control.omega_fr, right, lat_f, d, loads.fr, tire, r_eff)
    fx_rl, fy_rl = _wheel_force(control.omega_rl, left, lat_r, 0.0, loads.rl, tire, r_eff)
    fx_rr, fy_rr = _wheel_force(control.omega_rr, right, lat_r, 0.0, loads.rr, tire, r_eff)
    moment = (
        vehicle.dist_front * (fy_fl + fy_fr)
        - vehicle.dist_rear * (fy_rl + fy_rr)
        + t_r * (fx_fr + fx_rr)
        - t_l * (fx_fl + fx_rl)
    )
    return fx_fl + fx_fr + fx_rl + fx_rr, fy_fl + fy_fr + fy_rl + fy_rr, moment


def euler_update(state, fx, fy, mz, dt, vehicle):
    """Explicit-Euler update of pose and planar velocities, as a dict of new values."""
    m = vehicle.total_mass
    vx, vy, r, psi = state.vx, state.vy, state.yaw_rate, state.psi
    return dict(
        x=state.x + dt * (vx * math.cos(psi) - vy * math.sin(psi)),
        y=state.y + dt * (vx * math.sin(psi) + vy * math.cos(psi)),
        psi=psi + dt * r,
        vx=vx + dt * (r * vy + fx / m),
        vy=vy + dt * (-r * vx + fy / m),
        yaw_rate=r + dt * mz / vehicle.inertia_yaw,
    )


def _check_finite(state: VehicleState) -> VehicleState:
    values = state.as_array()
    if not np.all(np.isfinite(values)) or abs(state.vx) > SPEED_ENVELOPE:
        raise IntegrationFault("candidate step left the finite envelope", state)
    return state


def step_bicycle(
    state: BicycleState, control: ControlInput, dt: float, tire: TireParams, vehicle: VehicleParams,
) -> BicycleState:
    _check_step(control, dt, vehicle)
    fx, fy, mz = bicycle_forces(state.vx, state.vy, state.yaw_rate, control, tire, vehicle, state.ax, state.ay)
    nxt = euler_update(state, fx, fy, mz, dt, vehicle)
    fx, fy, _ = bicycle_forces(nxt["vx"], nxt["vy"], nxt["yaw_rate"], control, tire, vehicle, state.ax, state.ay)
    m = vehicle.total_mass
    return _check_finite(BicycleState(ax=fx / m, ay=fy / m, **nxt))


def step_four_wheel(
    state: FourWheelState, control: ControlInput, dt: float, tire: TireParams, vehicle: VehicleParams,
) -> FourWheelState:
    # roll, pitch and heave are held at zero in the candidate model
    _check_step(control, dt, vehicle)
    fx, fy, mz = four_wheel_forces(state.vx, state.vy, state.yaw_rate, control, tire, vehicle, state.ax, state.ay)
    nxt = euler_update(state, fx, fy, mz, dt, vehicle)
    fx, fy, _ = four_wheel_forces(nxt["vx"], nxt["vy"], nxt["yaw_rate"], control, tire, vehicle, state.ax, state.ay)
    m = vehicle.total_mass
    return _check_finite(FourWheelState(omega=control.wheel_speeds, ax=fx / m, ay=fy / m, **nxt))
