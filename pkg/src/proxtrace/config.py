"""Scenario configuration: a versioned JSON document describing one run."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .protocol import Family, RotationPolicy

SCHEMA_VERSION = 1


class InvalidConfig(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


Rect = tuple[float, float, float, float]


def in_rect(x: float, y: float, rect: Rect) -> bool:
    x0, y0, x1, y1 = rect
    return x0 <= x <= x1 and y0 <= y <= y1


@dataclass
class Population:
    count: int = 0
    alpha: float = 1.0
    sdk_p: float = 0.0


@dataclass
class AgentSpec:
    id: int
    position: Optional[tuple[float, float]] = None
    # keyframes (t, x, y); linear interpolation, held after the last one
    path: Optional[list[tuple[float, float, float]]] = None
    app: Optional[bool] = None
    sdk: Optional[bool] = None


@dataclass
class Mobility:
    model: str = "random_waypoint"
    speed: tuple[float, float] = (0.5, 1.5)
    pause: tuple[float, float] = (0.0, 60.0)


@dataclass
class ProtocolConfig:
    family: str = "decentralized"
    rotation_period: float = 600.0
    acceptance_window: float = 7200.0
    rssi_threshold: float = -70.0
    infectious_window: float = 14 * 86400.0

    def policy(self) -> RotationPolicy:
        name = "gaen" if self.family == "decentralized" else "abtrace"
        return RotationPolicy(self.rotation_period, self.acceptance_window, Family(self.family), name)


@dataclass
class Radio:
    tx_power: float = -59.0
    path_loss_exponent: float = 2.0
    sigma: float = 0.0
    sensitivity: float = -80.0
    min_distance: float = 0.1


@dataclass
class EncounterParams:
    radius: float = 2.0
    min_dwell: float = 60.0


@dataclass
class Geo:
    k: Optional[int] = None
    tower_size: float = 100.0


@dataclass
class Infection:
    agent: int
    time: float


@dataclass
class AttackPlan:
    mode: str = "none"  # none | relay | framing | flood
    source_region: Optional[Rect] = None
    target_regions: list[Rect] = field(default_factory=list)
    dispatch_latency: float = 5.0
    upload_interval: float = 60.0
    relay_delay: float = 0.0
    echo: bool = False


@dataclass
class Authority:
    relay_filter: str = "none"  # none | multi_region
    region_size: float = 100.0


@dataclass
class ScenarioConfig:
    seed: int = 0
    duration: float = 3600.0
    area: tuple[float, float] = (100.0, 100.0)
    tick: float = 1.0
    advertising_interval: float = 1.0
    population: Population = field(default_factory=Population)
    agents: list[AgentSpec] = field(default_factory=list)
    mobility: Mobility = field(default_factory=Mobility)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    radio: Radio = field(default_factory=Radio)
    encounter: EncounterParams = field(default_factory=EncounterParams)
    geo: Geo = field(default_factory=Geo)
    infections: list[Infection] = field(default_factory=list)
    attack: AttackPlan = field(default_factory=AttackPlan)
    authority: Authority = field(default_factory=Authority)
    record_positions: bool = True
    schema_version: int = SCHEMA_VERSION

    @property
    def policy(self) -> RotationPolicy:
        return self.protocol.policy()

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"population.alpha": 0.5})``."""
        d = self.to_dict()
        for key, value in changes.items():
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return ScenarioConfig.from_dict(d)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = copy.deepcopy(data)
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise InvalidConfig("schema_version", f"unsupported version {version}")
        cfg = _build(cls, data, "")
        validate(cfg)
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(str(path), f"not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


_NESTED = {
    "population": Population, "mobility": Mobility, "protocol": ProtocolConfig,
    "radio": Radio, "encounter": EncounterParams, "geo": Geo,
    "attack": AttackPlan, "authority": Authority,
}
_LISTS = {"agents": AgentSpec, "infections": Infection}
_TUPLES = {"area", "speed", "pause", "position", "source_region"}


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise InvalidConfig(path or "<root>", "expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(path or "<root>", f"unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key in _NESTED and cls in (ScenarioConfig,):
            value = _build(_NESTED[key], value, sub)
        elif key in _LISTS and cls is ScenarioConfig:
            if not isinstance(value, list):
                raise InvalidConfig(sub, "expected a list")
            value = [_build(_LISTS[key], v, f"{sub}[{i}]") for i, v in enumerate(value)]
        elif key in _TUPLES and value is not None:
            value = tuple(value)
        elif key == "path" and value is not None:
            value = [tuple(kf) for kf in value]
        elif key == "target_regions":
            value = [tuple(r) for r in value]
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(path or "<root>", str(exc)) from exc


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise InvalidConfig(path, message)


def _check_rect(rect, path):
    _check(rect is not None and len(rect) == 4, path, "rectangle needs [x0, y0, x1, y1]")
    _check(rect[0] <= rect[2] and rect[1] <= rect[3], path, "rectangle corners out of order")


def validate(cfg: ScenarioConfig) -> None:
    _check(cfg.duration > 0, "duration", "must be positive")
    _check(len(cfg.area) == 2 and cfg.area[0] > 0 and cfg.area[1] > 0, "area", "must be two positive sizes")
    _check(cfg.tick > 0, "tick", "must be positive")
    _check(cfg.advertising_interval > 0, "advertising_interval", "must be positive")
    _check(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed", "must be a non-negative integer")
    pop = cfg.population
    _check(isinstance(pop.count, int) and pop.count >= 0, "population.count", "must be a non-negative integer")
    _check(0.0 <= pop.alpha <= 1.0, "population.alpha", "probability must lie in [0, 1]")
    _check(0.0 <= pop.sdk_p <= 1.0, "population.sdk_p", "probability must lie in [0, 1]")
    ids = set()
    for i, a in enumerate(cfg.agents):
        _check(0 <= a.id < pop.count, f"agents[{i}].id", f"must lie in [0, {pop.count})")
        _check(a.id not in ids, f"agents[{i}].id", "duplicate agent id")
        ids.add(a.id)
        if a.path is not None:
            _check(len(a.path) > 0 and all(len(k) == 3 for k in a.path), f"agents[{i}].path",
                   "keyframes must be [t, x, y]")
            times = [k[0] for k in a.path]
            _check(times == sorted(times), f"agents[{i}].path", "keyframe times must be nondecreasing")
    _check(cfg.mobility.model in ("random_waypoint", "static"), "mobility.model",
           "must be 'random_waypoint' or 'static'")
    lo, hi = cfg.mobility.speed
    _check(0 < lo <= hi, "mobility.speed", "need 0 < min <= max")
    lo, hi = cfg.mobility.pause
    _check(0 <= lo <= hi, "mobility.pause", "need 0 <= min <= max")
    proto = cfg.protocol
    _check(proto.family in ("decentralized", "centralized"), "protocol.family",
           "must be 'decentralized' or 'centralized'")
    _check(proto.rotation_period > 0, "protocol.rotation_period", "must be positive")
    _check(proto.acceptance_window >= proto.rotation_period, "protocol.acceptance_window",
           "must be >= rotation_period")
    _check(proto.infectious_window > 0, "protocol.infectious_window", "must be positive")
    _check(cfg.radio.path_loss_exponent > 0, "radio.path_loss_exponent", "must be positive")
    _check(cfg.radio.sigma >= 0, "radio.sigma", "must be non-negative")
    _check(cfg.radio.min_distance > 0, "radio.min_distance", "must be positive")
    _check(cfg.encounter.radius > 0, "encounter.radius", "must be positive")
    _check(cfg.encounter.min_dwell >= 0, "encounter.min_dwell", "must be non-negative")
    if cfg.geo.k is not None:
        _check(isinstance(cfg.geo.k, int) and 0 <= cfg.geo.k <= 16, "geo.k", "must be an integer in [0, 16]")
    _check(cfg.geo.tower_size > 0, "geo.tower_size", "must be positive")
    for i, inf in enumerate(cfg.infections):
        _check(0 <= inf.agent < pop.count, f"infections[{i}].agent", "unknown agent")
        _check(0 <= inf.time <= cfg.duration, f"infections[{i}].time", "must lie within the run")
    atk = cfg.attack
    _check(atk.mode in ("none", "relay", "framing", "flood"), "attack.mode",
           "must be one of none, relay, framing, flood")
    if atk.mode != "none":
        _check(len(atk.target_regions) > 0, "attack.target_regions", "needs at least one region")
        for i, r in enumerate(atk.target_regions):
            _check_rect(r, f"attack.target_regions[{i}]")
        if atk.mode in ("relay", "framing"):
            _check_rect(atk.source_region, "attack.source_region")
        if atk.mode in ("framing", "flood"):
            _check(proto.family == "centralized", "attack.mode", f"{atk.mode} targets centralized systems")
    _check(atk.dispatch_latency >= 0, "attack.dispatch_latency", "must be non-negative")
    _check(atk.upload_interval > 0, "attack.upload_interval", "must be positive")
    _check(atk.relay_delay >= 0, "attack.relay_delay", "must be non-negative")
    _check(cfg.authority.relay_filter in ("none", "multi_region"), "authority.relay_filter",
           "must be 'none' or 'multi_region'")
    _check(cfg.authority.region_size > 0, "authority.region_size", "must be positive")
