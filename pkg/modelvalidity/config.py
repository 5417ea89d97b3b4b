"""Experiment configuration (YAML) and maneuver-suite construction.

Precedence, highest first:
  output dir:  --out, $MODELVALIDITY_OUT, config file, built-in default
  everything else:  CLI flag, config file, built-in default
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import yaml

from .dynamics import TireParams, VehicleParams, tire_preset, vehicle_preset
from .errors import ConfigError, ParameterError
from .plant import MANEUVER_KINDS, ManeuverSpec, NoiseSigmas, PlantSetup, RoadProfile, RoadSegment, SuspensionParams
from .validity import DEFAULT_THRESHOLD, CandidateModel, ModelId

logger = logging.getLogger(__name__)

ENV_OUT = "MODELVALIDITY_OUT"

DEFAULTS: Dict[str, Any] = {
    "vehicle": {"preset": "audi_a6_avant_c7", "overrides": {}},
    "tires": {m.value: {} for m in ModelId},
    "plant": {
        "tire": "plant_pacejka",
        "tire_overrides": {},
        "dt_fine": 1e-3,
        "suspension": {"spring_rate": 30_000.0, "damping": 3_500.0, "anti_roll_rate": 20_000.0},
        "road": [{"start": 0.0, "slope": 0.0, "bank": 0.0, "mu": 1.0, "wind": 0.0}],
    },
    "noise": {"ax": 0.05, "ay": 0.05, "yaw_rate": 0.002, "wheel_speed": 0.05, "delta": 0.001},
    "suite": {
        "count": 28,
        "ay_min": 2.0,
        "ay_max": 10.1,
        "kinds": ["step_steer", "sine_sweep", "slalom", "double_lane_change"],
        "speeds": [15.0, 20.0, 25.0],
        "duration": 20.0,
        "maneuvers": None,
    },
    "threshold": DEFAULT_THRESHOLD,
    "out": "runs/default",
    "seed": 2024,
    "jobs": None,
    "models": [m.value for m in ModelId],
}

# do not change results, so they stay out of the config hash
_UNHASHED = ("out", "jobs")


@dataclass(frozen=True)
class SuiteEntry:
    name: str
    spec: ManeuverSpec
    sensor_seed: int


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    vehicle: VehicleParams
    tires: Dict[ModelId, TireParams]
    plant: PlantSetup
    road: RoadProfile
    noise: NoiseSigmas
    suite: Tuple[SuiteEntry, ...]
    threshold: float
    out: Path
    seed: int
    jobs: int
    models: Tuple[ModelId, ...]
    resolved: Dict[str, Any]

    @property
    def config_hash(self) -> str:
        payload = {k: v for k, v in self.resolved.items() if k not in _UNHASHED}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def candidate(self, model: Union[ModelId, str]) -> CandidateModel:
        mid = ModelId.parse(model)
        return CandidateModel(mid, self.vehicle, self.tires[mid])

    def suite_entry(self, name: str) -> SuiteEntry:
        for entry in self.suite:
            if entry.name == name:
                return entry
        raise KeyError(name)


def _merge(base: Dict[str, Any], update: Mapping[str, Any], where: str = "") -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and key not in ("overrides", "tire_overrides", "tires"):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {path!r} must be a mapping")
            out[key] = _merge(base[key], value, path + ".")
        elif key == "tires":
            if not isinstance(value, Mapping):
                raise ConfigError("config key 'tires' must map model ids to overrides")
            for mid, overrides in value.items():
                try:
                    ModelId.parse(mid)
                except ParameterError as exc:
                    raise ConfigError(str(exc)) from None
                out["tires"][mid] = dict(overrides or {})
        else:
            out[key] = copy.deepcopy(value)
    return out


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    p = Path(path)
    try:
        with p.open() as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{p}: top level must be a mapping")
    return dict(data)


def _suite(section: Mapping[str, Any], seed: int) -> Tuple[SuiteEntry, ...]:
    explicit = section.get("maneuvers")
    if explicit:
        specs = []
        for i, item in enumerate(explicit):
            item = dict(item)
            name = str(item.pop("name", f"traj_{i:02d}_{item.get('kind', 'maneuver')}"))
            specs.append((name, item))
    else:
        count = int(section["count"])
        if count < 1:
            raise ConfigError("suite.count must be >= 1")
        kinds = list(section["kinds"])
        speeds = [float(s) for s in section["speeds"]]
        if not kinds or not speeds:
            raise ConfigError("suite.kinds and suite.speeds must be non-empty")
        unknown = [k for k in kinds if k not in MANEUVER_KINDS]
        if unknown:
            raise ConfigError(f"unknown maneuver kinds {unknown} (known: {list(MANEUVER_KINDS)})")
        targets = np.geomspace(float(section["ay_min"]), float(section["ay_max"]), count)
        specs = []
        for i, target in enumerate(targets):
            kind = kinds[i % len(kinds)]
            specs.append((f"traj_{i:02d}_{kind}", {
                "kind": kind,
                "target_ay_max": round(float(target), 6),
                "initial_speed": speeds[i % len(speeds)],
                "duration": float(section["duration"]),
            }))

    names = [n for n, _ in specs]
    if len(set(names)) != len(names):
        raise ConfigError("suite trajectory names must be unique")
    seeds = np.random.SeedSequence(seed).generate_state(2 * len(specs))
    entries = []
    for i, (name, fields_) in enumerate(specs):
        fields_.setdefault("seed", int(seeds[2 * i]))
        try:
            spec = ManeuverSpec(**fields_)
        except TypeError as exc:
            raise ConfigError(f"suite entry {name!r}: {exc}") from None
        entries.append(SuiteEntry(name, spec, int(seeds[2 * i + 1])))
    return tuple(entries)


def load_config(
    path: Optional[Union[str, Path]] = None,
    flags: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Resolve defaults, the YAML file, the environment and CLI flags."""
    environ = os.environ if environ is None else environ
    raw = _merge(DEFAULTS, read_config_file(path)) if path else copy.deepcopy(DEFAULTS)

    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    for key in ("seed", "threshold", "jobs", "models"):
        if key in flags:
            raw[key] = flags[key]
    if "out" in flags:
        raw["out"] = str(flags["out"])
    elif environ.get(ENV_OUT):
        raw["out"] = environ[ENV_OUT]

    try:
        return _build(raw)
    except ConfigError:
        raise
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def _build(raw: Dict[str, Any]) -> ExperimentConfig:
    vehicle = vehicle_preset(raw["vehicle"]["preset"]).with_overrides(raw["vehicle"]["overrides"] or {})
    tires = {m: tire_preset(m.tire_preset).with_overrides(raw["tires"].get(m.value) or {}) for m in ModelId}

    plant = raw["plant"]
    plant_tire = tire_preset(plant["tire"]).with_overrides(plant["tire_overrides"] or {})
    setup = PlantSetup(vehicle, plant_tire, SuspensionParams(**plant["suspension"]), float(plant["dt_fine"]))
    road = RoadProfile(tuple(RoadSegment(**seg) for seg in plant["road"]))
    noise = NoiseSigmas(**raw["noise"])

    seed = int(raw["seed"])
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    threshold = float(raw["threshold"])
    if not threshold > 0:
        raise ConfigError("threshold must be > 0")
    jobs = raw["jobs"]
    jobs = (os.cpu_count() or 1) if jobs is None else int(jobs)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    models = ModelId.parse_list(raw["models"])
    raw["models"] = [m.value for m in models]
    raw["threshold"] = threshold
    raw["seed"] = seed

    return ExperimentConfig(
        vehicle=vehicle,
        tires=tires,
        plant=setup,
        road=road,
        noise=noise,
        suite=_suite(raw["suite"], seed),
        threshold=threshold,
        out=Path(raw["out"]),
        seed=seed,
        jobs=jobs,
        models=models,
        resolved=raw,
    )
