"""Scenario configuration: JSON schema, dataclasses and loading."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import Rect, probe_line
from .models import POSITION_H, SensorModel, check_observable, constant_velocity, ObservabilityError

MOUNTS = ("ego", "cv", "rsu1", "rsu2")
BUILTIN = ("scenario1", "scenario2", "scenario3")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ScenarioConfig",
    "type": "object",
    "required": ["scenario_id", "road", "ego", "sensors"],
    "additionalProperties": False,
    "properties": {
        "scenario_id": {"enum": [1, 2, 3]},
        "seed": {"type": "integer", "minimum": 0},
        "horizon": {"type": "integer", "minimum": 1},
        "dt": _pos,
        "pedestrian_present": {"type": "boolean"},
        "message_loss": {"type": "number", "minimum": 0, "maximum": 1},
        "road": {
            "type": "object",
            "additionalProperties": False,
            "required": ["zebra_x"],
            "properties": {
                "lane_width": _pos,
                "curb_y": _num,
                "near_sidewalk_y": _num,
                "far_sidewalk_y": _num,
                "zebra_x": _num,
                "zebra_half_width": _pos,
                "sidewalk_probe_x": _pair,
                "probe_spacing": _pos,
            },
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["x_min", "x_max", "y_min", "y_max"],
                "properties": {k: _num for k in ("x_min", "x_max", "y_min", "y_max")},
            },
        },
        "ego": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x0": _num, "y": _num, "nominal_speed": _pos, "end_x": _num,
                "accel": _pos, "decel": _pos, "radius": _pos,
            },
        },
        "connected_vehicle": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "properties": {"x0": _num, "y": _num, "speed": _num, "heading_deg": _num},
        },
        "pedestrian": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "spawn": _pair, "cross_start": {"type": "number", "minimum": 0},
                "walk_speed": _pos, "accel": _pos, "radius": _pos,
                "cross_start_jitter": {"type": "number", "minimum": 0},
                "walk_speed_jitter": {"type": "number", "minimum": 0},
                "trigger_distance": {"type": ["number", "null"], "minimum": 0},
            },
        },
        "sensors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "mount"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "mount": {"enum": list(MOUNTS)},
                    "offset": _pair,
                    "position": _pair,
                    "heading_deg": _num,
                    "fov_range": _pos,
                    "fov_half_angle_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 180},
                    "noise_radii": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "estimator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pos_noise": {"type": "number", "minimum": 0},
                "vel_noise": {"type": "number", "minimum": 0},
                "v_max": _pos,
                "max_order": {"type": "number", "minimum": 1},
                "fault_threshold": {"type": "integer", "minimum": 1},
                "track_timeout": {"type": "number", "minimum": 0},
            },
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "multipliers": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        k: {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
                        for k in ("nominal", "cautious", "slow", "very_slow")
                    },
                },
                "zebra_lookahead": _pos,
                "corridor_length": _pos,
                "proximity_threshold": {"type": "number", "minimum": 0},
                "emergency_radius": _pos,
            },
        },
    },
}

PAPER_LITERAL_MULTIPLIERS = {"nominal": 1.0, "cautious": 0.3, "slow": 0.5, "very_slow": 0.8}


@dataclass(frozen=True)
class Road:
    lane_width: float = 3.5
    curb_y: float = 0.0
    near_sidewalk_y: float = -3.5
    far_sidewalk_y: float = 8.5
    zebra_x: float = 100.0
    zebra_half_width: float = 2.0
    sidewalk_probe_x: tuple = (95.0, 104.0)
    probe_spacing: float = 0.25

    @property
    def ego_lane(self) -> tuple[float, float]:
        return (self.curb_y, self.curb_y + self.lane_width)

    def sidewalk_probes(self) -> np.ndarray:
        x0, x1 = self.sidewalk_probe_x
        y = self.near_sidewalk_y
        return probe_line((x0, y), (x1, y), self.probe_spacing)

    def crossing_probes(self) -> np.ndarray:
        return probe_line((self.zebra_x, self.near_sidewalk_y), (self.zebra_x, self.far_sidewalk_y),
                          self.probe_spacing)


@dataclass(frozen=True)
class EgoSpec:
    x0: float = 0.0
    y: float = 1.75
    nominal_speed: float = 20.0
    end_x: float = 200.0
    accel: float = 2.0
    decel: float = 4.0
    radius: float = 1.5


@dataclass(frozen=True)
class VehicleSpec:
    x0: float = 170.0
    y: float = 5.25
    speed: float = -10.0
    heading_deg: float = 180.0


@dataclass(frozen=True)
class PedestrianSpec:
    spawn: tuple = (99.0, -3.5)
    cross_start: float = 5.0
    walk_speed: float = 1.4
    accel: float = 1.4
    radius: float = 0.3
    cross_start_jitter: float = 0.0
    walk_speed_jitter: float = 0.0
    # when set, cross_start counts from the moment the ego comes this close to the crossing
    trigger_distance: float | None = None


@dataclass(frozen=True)
class SensorSpec:
    id: str
    mount: str
    offset: tuple = (0.0, 0.0)
    position: tuple | None = None
    heading_deg: float = 0.0
    fov_range: float = 50.0
    fov_half_angle_deg: float = 60.0
    noise_radii: tuple = (0.3, 0.3)

    def model(self) -> SensorModel:
        return SensorModel(
            self.id, POSITION_H, np.array(self.noise_radii),
            pose=(*(self.position or self.offset), np.deg2rad(self.heading_deg)),
            fov_range=self.fov_range, fov_half_angle=np.deg2rad(self.fov_half_angle_deg),
        )


@dataclass(frozen=True)
class EstimatorSpec:
    pos_noise: float = 0.01
    vel_noise: float = 0.15
    v_max: float = 2.0
    max_order: float = 10.0
    fault_threshold: int = 3
    track_timeout: float = 1.0  # seconds without any measurement before a track is dropped


@dataclass(frozen=True)
class PolicySpec:
    multipliers: dict = field(
        default_factory=lambda: {"nominal": 1.0, "cautious": 0.7, "slow": 0.5, "very_slow": 0.2}
    )
    zebra_lookahead: float = 40.0
    corridor_length: float = 30.0
    proximity_threshold: float = 1.5
    emergency_radius: float = 6.0


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: int
    road: Road = field(default_factory=Road)
    obstacles: tuple = ()
    ego: EgoSpec = field(default_factory=EgoSpec)
    connected_vehicle: VehicleSpec | None = None
    pedestrian: PedestrianSpec = field(default_factory=PedestrianSpec)
    pedestrian_present: bool = True
    sensors: tuple = ()
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    seed: int = 0
    horizon: int = 600
    dt: float = 0.1
    message_loss: float = 0.0
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def system(self):
        return constant_velocity(self.dt, self.estimator.pos_noise, self.estimator.vel_noise, self.horizon)

    def mounts(self) -> list[str]:
        return [m for m in MOUNTS if any(s.mount == m for s in self.sensors)]

    def with_overrides(self, **changes) -> "ScenarioConfig":
        data = copy.deepcopy(self.source)
        for key, value in changes.items():
            if key == "multipliers":
                data.setdefault("policy", {})["multipliers"] = dict(value)
            elif isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return from_dict(data)


def _tuples(d: dict, keys) -> dict:
    return {k: tuple(v) if k in keys and v is not None else v for k, v in d.items()}


def from_dict(data: dict) -> ScenarioConfig:
    """Validate a configuration document and build the config object."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        if err.validator in ("required", "additionalProperties"):
            msg = err.message
        else:
            msg = f"{err.message} (rule: {err.validator})"
        raise ConfigError(where, msg)

    sensors = []
    for i, s in enumerate(data["sensors"]):
        spec = SensorSpec(**_tuples(s, ("offset", "position", "noise_radii")))
        if spec.mount.startswith("rsu") and spec.position is None:
            raise ConfigError(f"sensors.{i}.position", "road-side sensors need an absolute position")
        sensors.append(spec)
    ids = [s.id for s in sensors]
    if len(set(ids)) != len(ids):
        raise ConfigError("sensors", "sensor ids must be unique")

    policy = dict(data.get("policy", {}))
    mult = PolicySpec().multipliers | policy.pop("multipliers", {})
    if mult["nominal"] != 1.0:
        raise ConfigError("policy.multipliers.nominal", "nominal multiplier must be 1.0")
    cv = data.get("connected_vehicle")
    cfg = ScenarioConfig(
        scenario_id=data["scenario_id"],
        road=Road(**_tuples(data["road"], ("sidewalk_probe_x",))),
        obstacles=tuple(Rect(**o) for o in data.get("obstacles", [])),
        ego=EgoSpec(**data.get("ego", {})),
        connected_vehicle=VehicleSpec(**cv) if cv is not None else None,
        pedestrian=PedestrianSpec(**_tuples(data.get("pedestrian", {}), ("spawn",))),
        pedestrian_present=data.get("pedestrian_present", True),
        sensors=tuple(sensors),
        estimator=EstimatorSpec(**data.get("estimator", {})),
        policy=PolicySpec(multipliers=mult, **policy),
        seed=data.get("seed", 0),
        horizon=data.get("horizon", 600),
        dt=data.get("dt", 0.1),
        message_loss=data.get("message_loss", 0.0),
        source=copy.deepcopy(data),
    )
    _check_semantics(cfg)
    return cfg


def _check_semantics(cfg: ScenarioConfig) -> None:
    mounts = cfg.mounts()
    if "ego" not in mounts:
        raise ConfigError("sensors", "the ego vehicle needs a local sensor")
    if cfg.scenario_id == 2:
        if "cv" not in mounts:
            raise ConfigError("sensors", "scenario 2 requires a connected-vehicle sensor")
        if cfg.connected_vehicle is None:
            raise ConfigError("connected_vehicle", "scenario 2 requires a connected vehicle")
    if cfg.scenario_id == 3 and not {"rsu1", "rsu2"} <= set(mounts):
        raise ConfigError("sensors", "scenario 3 requires both road-side units")
    if "cv" in mounts and cfg.connected_vehicle is None:
        raise ConfigError("connected_vehicle", "a cv-mounted sensor needs a connected vehicle")
    try:
        check_observable(cfg.system(), [s.model() for s in cfg.sensors])
    except ObservabilityError as exc:
        raise ConfigError("sensors", str(exc)) from None
    if cfg.ego.end_x <= cfg.ego.x0:
        raise ConfigError("ego.end_x", "route end must lie ahead of the start")


def load_config(path) -> ScenarioConfig:
    """Load a configuration file, or a builtin by name (``scenario1``..``scenario3``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN:
        text = resources.files("zonofuse.configs").joinpath(f"{path}.json").read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(data)


def builtin_config(name: str) -> ScenarioConfig:
    return load_config(name)
