"""Scenario configuration: devices, UAVs and the environment parameters.

Scenarios are JSON documents whose keys match the dataclass field names below.
A scenario may list its devices explicitly or leave ``devices`` out, in which
case a layout is drawn from ``rng_seed`` using the ranges in ``layout``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

WEIGHT_MODES = ("paper_literal", "generation_time")


class ConfigError(ValueError):
    """Raised for scenarios that violate a configuration invariant."""


@dataclass(frozen=True)
class DeviceConfig:
    id: int
    pos_x: float
    pos_y: float
    gen_period_k: int
    bandwidth: float
    tx_power: float


@dataclass(frozen=True)
class UavConfig:
    id: int
    altitude: float
    speed: float
    max_flight_time: float
    start_cell: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class LayoutRanges:
    """Uniform ranges used when devices are generated instead of listed."""

    gen_period_range: tuple[int, int] = (1, 5)
    bandwidth_range: tuple[float, float] = (1.5e9, 2.0e9)
    tx_power_range: tuple[float, float] = (0.0, 1e-3)


@dataclass(frozen=True)
class EnvConfig:
    num_devices: int
    num_uavs: int
    area_x: float
    area_y: float
    grid_step: float
    horizon: int
    interval_len: float
    rician_factor: float
    noise_power: float
    min_rate: float
    aoi_weight_gamma: float
    weight_mode: str
    devices: tuple[DeviceConfig, ...]
    uavs: tuple[UavConfig, ...]
    rng_seed: int = 0
    pure_los: bool = False
    layout: LayoutRanges = field(default_factory=LayoutRanges)

    def __post_init__(self):
        self.validate()

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (round(self.area_x / self.grid_step) + 1, round(self.area_y / self.grid_step) + 1)

    @property
    def num_cells(self) -> int:
        nx, ny = self.grid_shape
        return nx * ny

    @property
    def max_packets(self) -> int:
        # n ranges over 0..floor(K / k_i); k_i >= 1 bounds it by K + 1
        return self.horizon + 1

    def validate(self) -> None:
        if self.num_devices != len(self.devices):
            raise ConfigError(f"num_devices={self.num_devices} but {len(self.devices)} devices listed")
        if self.num_uavs != len(self.uavs):
            raise ConfigError(f"num_uavs={self.num_uavs} but {len(self.uavs)} UAVs listed")
        if self.num_uavs < 1:
            raise ConfigError("at least one UAV is required")
        if self.grid_step <= 0:
            raise ConfigError("grid_step must be positive")
        for extent in (self.area_x, self.area_y):
            ratio = extent / self.grid_step
            if extent < 0 or abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(f"grid_step {self.grid_step} does not divide area extent {extent}")
        if self.horizon < 1:
            raise ConfigError("horizon K must be >= 1")
        if self.interval_len <= 0:
            raise ConfigError("interval_len must be positive")
        if not 0.0 <= self.aoi_weight_gamma <= 1.0:
            raise ConfigError("aoi_weight_gamma must lie in [0, 1]")
        if self.rician_factor < 0:
            raise ConfigError("rician_factor must be >= 0")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be positive")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}")
        for i, dev in enumerate(self.devices):
            if dev.id != i:
                raise ConfigError(f"device ids must be 0..I-1 in order, got {dev.id} at {i}")
            if not 1 <= dev.gen_period_k:
                raise ConfigError(f"device {i}: gen_period_k must be >= 1")
            if dev.bandwidth <= 0 or dev.tx_power < 0:
                raise ConfigError(f"device {i}: bandwidth must be > 0 and tx_power >= 0")
            if not (0 <= dev.pos_x <= self.area_x and 0 <= dev.pos_y <= self.area_y):
                raise ConfigError(f"device {i} lies outside the area")
        nx, ny = self.grid_shape
        alts = [u.altitude for u in self.uavs]
        if len(set(alts)) != len(alts):
            raise ConfigError("UAV altitudes must be pairwise distinct")
        for j, uav in enumerate(self.uavs):
            if uav.id != j:
                raise ConfigError(f"UAV ids must be 0..U-1 in order, got {uav.id} at {j}")
            if uav.speed <= 0 or uav.max_flight_time <= 0:
                raise ConfigError(f"UAV {j}: speed and max_flight_time must be positive")
            cx, cy = uav.start_cell
            if not (0 <= cx < nx and 0 <= cy < ny):
                raise ConfigError(f"UAV {j}: start cell {uav.start_cell} outside the {nx}x{ny} grid")

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for u in d["uavs"]:
            u["start_cell"] = list(u["start_cell"])
        d["layout"] = {k: list(v) for k, v in d["layout"].items()}
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        layout = LayoutRanges(**{k: tuple(v) for k, v in d.pop("layout", {}).items()})
        uavs = tuple(
            UavConfig(**{**u, "start_cell": tuple(u.get("start_cell", (0, 0)))}) for u in d.pop("uavs")
        )
        devices = d.pop("devices", None)
        if devices is None:
            devices = generate_devices(
                d["num_devices"], d["area_x"], d["area_y"], layout, d.get("rng_seed", 0)
            )
        else:
            devices = tuple(DeviceConfig(**dev) for dev in devices)
        d.setdefault("num_uavs", len(uavs))
        return cls(devices=tuple(devices), uavs=uavs, layout=layout, **d)

    @classmethod
    def from_json(cls, path: str | Path) -> "EnvConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        try:
            return cls.from_dict(raw)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid scenario {path}: {exc}") from exc

    def with_overrides(self, **kw) -> "EnvConfig":
        return replace(self, **kw)


def generate_devices(num_devices, area_x, area_y, layout: LayoutRanges, seed) -> tuple[DeviceConfig, ...]:
    """Uniform device placement and parameters drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    kmin, kmax = layout.gen_period_range
    out = []
    for i in range(num_devices):
        out.append(
            DeviceConfig(
                id=i,
                pos_x=float(rng.uniform(0, area_x)),
                pos_y=float(rng.uniform(0, area_y)),
                gen_period_k=int(rng.integers(kmin, kmax + 1)),
                bandwidth=float(rng.uniform(*layout.bandwidth_range)),
                tx_power=float(rng.uniform(*layout.tx_power_range)),
            )
        )
    return tuple(out)


def dbm_to_watt(dbm: float) -> float:
    return 10 ** (dbm / 10) / 1000.0


# -- presets -----------------------------------------------------------


def table1_config(seed: int = 0) -> EnvConfig:
    """Full-size setup: 25 devices, 3 UAVs, 1000 m square, K = 500."""
    grid_step, speed, horizon = 100.0, 15.0, 500
    budget = horizon * grid_step / speed
    layout = LayoutRanges()
    return EnvConfig(
        num_devices=25,
        num_uavs=3,
        area_x=1000.0,
        area_y=1000.0,
        grid_step=grid_step,
        horizon=horizon,
        interval_len=3e-3,
        rician_factor=10.0,
        noise_power=dbm_to_watt(-120),
        min_rate=150e3,
        aoi_weight_gamma=0.8,
        weight_mode="paper_literal",
        devices=generate_devices(25, 1000.0, 1000.0, layout, seed),
        uavs=tuple(
            UavConfig(id=j, altitude=h, speed=speed, max_flight_time=budget, start_cell=(0, 0))
            for j, h in enumerate((80.0, 90.0, 100.0))
        ),
        rng_seed=seed,
        layout=layout,
    )


DESK_LAYOUT = LayoutRanges(
    gen_period_range=(1, 5),
    bandwidth_range=(1.5e9, 2.0e9),
    tx_power_range=(0.8e-3, 1.0e-3),
)


def desk_config(seed: int = 0) -> EnvConfig:
    """Desk-scale scenario: 2 UAVs, 8 devices, 10x10 grid, K = 50.

    The noise floor and rate threshold put each device in range only from
    grid points within about three cells, so the trajectory matters.
    """
    grid_step, speed, horizon = 100.0, 15.0, 50
    return EnvConfig(
        num_devices=8,
        num_uavs=2,
        area_x=900.0,
        area_y=900.0,
        grid_step=grid_step,
        horizon=horizon,
        interval_len=1.0,
        rician_factor=10.0,
        noise_power=dbm_to_watt(-60),
        min_rate=5.5e9,
        aoi_weight_gamma=0.8,
        weight_mode="generation_time",
        devices=generate_devices(8, 900.0, 900.0, DESK_LAYOUT, seed),
        uavs=(
            UavConfig(id=0, altitude=80.0, speed=speed, max_flight_time=horizon * grid_step / speed, start_cell=(0, 0)),
            UavConfig(id=1, altitude=100.0, speed=speed, max_flight_time=horizon * grid_step / speed, start_cell=(0, 0)),
        ),
        rng_seed=seed,
        layout=DESK_LAYOUT,
    )


def tiny_config(**overrides) -> EnvConfig:
    """Deterministic 3x3, K=5, one-UAV instance sized for exhaustive search."""
    grid_step = 100.0
    base = dict(
        num_devices=3,
        num_uavs=1,
        area_x=200.0,
        area_y=200.0,
        grid_step=grid_step,
        horizon=5,
        interval_len=1.0,
        rician_factor=10.0,
        noise_power=dbm_to_watt(-60),
        min_rate=8.5e9,
        aoi_weight_gamma=0.8,
        weight_mode="paper_literal",
        devices=(
            DeviceConfig(0, 200.0, 200.0, 1, 1.5e9, 1e-3),
            DeviceConfig(1, 200.0, 0.0, 2, 1.5e9, 1e-3),
            DeviceConfig(2, 0.0, 200.0, 1, 1.5e9, 1e-3),
        ),
        uavs=(UavConfig(0, 100.0, 15.0, 5 * grid_step / 15.0, (0, 0)),),
        rng_seed=0,
        pure_los=True,
    )
    base.update(overrides)
    return EnvConfig(**base)


def in_range_radius(cfg: EnvConfig, device: DeviceConfig, altitude: float) -> float:
    """Horizontal pure-LoS coverage radius of ``device`` for a UAV at ``altitude`` (0 if none)."""
    need = 2 ** (cfg.min_rate / device.bandwidth) - 1
    if device.tx_power <= 0 or need <= 0:
        return math.inf if need <= 0 else 0.0
    d2 = device.tx_power / (cfg.noise_power * need)
    return math.sqrt(max(d2 - altitude**2, 0.0))
