"""Run configuration: every tunable default, JSON-loadable with strict keys.

A config file may set any subset of sections; unknown keys anywhere are
rejected, and all values are validated against the owning module's
invariants at load time.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .acoustics import AcousticConstants
from .sim import SimulationConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExtractConfig:
    threshold_hu: float = 400.0
    dilation_radius_mm: float = 2.0

    def validate(self):
        if self.dilation_radius_mm < 0:
            raise ConfigError("extract.dilation_radius_mm must be >= 0")


@dataclass
class PerturbConfig:
    gaussian_sigma_mm: float = 0.5
    noise_sigma_hu: float = 0.0
    hu_bias: float = 0.0
    rng_seed: int = 0

    def validate(self):
        if self.gaussian_sigma_mm < 0 or self.noise_sigma_hu < 0:
            raise ConfigError("perturb sigmas must be >= 0")


@dataclass
class PhantomConfig:
    outer_radius_mm: float = 26.0
    inner_radius_mm: float = 20.0
    cortical_thickness_mm: float = 2.0
    cortical_hu: float = 1900.0
    trabecular_hu: float = 1100.0
    center_mm: tuple = (0.0, 0.0, 0.0)
    ellipsoid_scale: tuple = (1.0, 1.0, 1.0)
    dims: tuple = (128, 128, 128)
    spacing_mm: tuple = (0.5, 0.5, 0.5)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)

    def validate(self):
        if self.outer_radius_mm - self.inner_radius_mm < 2 * self.cortical_thickness_mm:
            raise ConfigError("phantom shell too thin for two cortical layers")
        if not (self.cortical_hu >= self.trabecular_hu > 400.0):
            raise ConfigError("phantom needs cortical_hu >= trabecular_hu > 400")
        self.perturb.validate()


@dataclass
class ArrayConfig:
    radius_mm: float = 150.0
    tilt_x_deg: float = 0.0
    tilt_y_deg: float = 0.0

    def validate(self):
        if self.radius_mm <= 0:
            raise ConfigError("array.radius_mm must be > 0")
        if abs(self.tilt_x_deg) > 10.0 or abs(self.tilt_y_deg) > 10.0:
            raise ConfigError("array tilt must stay within 10 degrees per axis")


@dataclass
class RayConfig:
    step_mm: float = 0.1
    bone_threshold_hu: float = 400.0
    normal_sigma_mm: float = 1.0
    sdr_margin_mm: float = 1.0
    active_angle_deg: float = 20.0

    def validate(self):
        if self.step_mm <= 0:
            raise ConfigError("ray.step_mm must be > 0")
        if not (0 < self.active_angle_deg < 90):
            raise ConfigError("ray.active_angle_deg must be in (0, 90)")


@dataclass
class TiltSearchConfig:
    enabled: bool = True
    step_deg: float = 1.0

    def validate(self):
        if self.step_deg <= 0:
            raise ConfigError("tilt_search.step_deg must be > 0")


@dataclass
class SimGridConfig:
    dims: tuple = None          # None: simulate on the input grid as-is
    spacing_mm: tuple = None    # None: keep the input spacing

    def validate(self):
        if self.dims is not None and any(int(d) < 1 for d in self.dims):
            raise ConfigError("sim_grid.dims must be >= 1")
        if self.spacing_mm is not None and any(s <= 0 for s in self.spacing_mm):
            raise ConfigError("sim_grid.spacing_mm must be > 0")


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8763
    max_cases_in_memory: int = 4
    queue_limit: int = 4

    def validate(self):
        if self.max_cases_in_memory < 1 or self.queue_limit < 1:
            raise ConfigError("server limits must be >= 1")


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 0
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    ray: RayConfig = field(default_factory=RayConfig)
    tilt_search: TiltSearchConfig = field(default_factory=TiltSearchConfig)
    acoustic: AcousticConstants = field(default_factory=AcousticConstants)
    sim: SimulationConfig = field(default_factory=SimulationConfig)
    sim_grid: SimGridConfig = field(default_factory=SimGridConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    def validate(self) -> "RunConfig":
        for section in (self.extract, self.phantom, self.array, self.ray,
                        self.tilt_search, self.sim_grid, self.server):
            section.validate()
        try:
            self.acoustic.validate()
            self.sim.validate()
        except Exception as exc:  # normalize to config errors at load time
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def defaults() -> "RunConfig":
        return RunConfig()

    @staticmethod
    def from_dict(payload: dict) -> "RunConfig":
        cfg = _merge_dataclass(RunConfig(), payload, path="")
        return cfg.validate()

    @staticmethod
    def from_file(path) -> "RunConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: top-level config must be a JSON object")
        return RunConfig.from_dict(payload)


def _merge_dataclass(obj, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"config section '{path or '<root>'}' must be an object")
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in payload.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"unknown config key: {where}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and not isinstance(current, type):
            if isinstance(current, (AcousticConstants, SimulationConfig)):
                # frozen dataclasses: rebuild with replacements
                sub = {f.name: getattr(current, f.name) for f in dataclasses.fields(current)}
                for k, v in (value or {}).items():
                    if k not in sub:
                        raise ConfigError(f"unknown config key: {where}.{k}")
                    sub[k] = _coerce(sub[k], v, f"{where}.{k}")
                setattr(obj, key, type(current)(**sub))
            else:
                setattr(obj, key, _merge_dataclass(current, value, where))
        else:
            setattr(obj, key, _coerce(current, value, where))
    return obj


def _coerce(current, value, where: str):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(current, tuple) or current is None:
        if value is None:
            return None
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(value)
    raise ConfigError(f"{where}: unsupported config value type")
