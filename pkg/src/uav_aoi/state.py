"""Simulation state and action containers."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import EnvConfig

STAY, UP, DOWN, RIGHT, LEFT = range(5)
NUM_MOVES = 5
# (dx, dy) in grid cells, indexed by move id
MOVE_DELTAS = np.array([(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0)], dtype=np.int64)


@dataclass(frozen=True)
class PacketAge:
    gen_index: int
    age: float
    collected: bool


class Geometry:
    """Array views of an EnvConfig used by the vectorized code paths."""

    def __init__(self, cfg: EnvConfig):
        self.gen_period = np.array([d.gen_period_k for d in cfg.devices], dtype=np.int64)
        self.device_xy = np.array([(d.pos_x, d.pos_y) for d in cfg.devices], dtype=float).reshape(-1, 2)
        self.bandwidth = np.array([d.bandwidth for d in cfg.devices], dtype=float)
        self.tx_power = np.array([d.tx_power for d in cfg.devices], dtype=float)
        self.altitude = np.array([u.altitude for u in cfg.uavs], dtype=float)
        self.speed = np.array([u.speed for u in cfg.uavs], dtype=float)
        self.budget = np.array([u.max_flight_time for u in cfg.uavs], dtype=float)
        self.start = np.array([u.start_cell for u in cfg.uavs], dtype=np.int64).reshape(-1, 2)
        self.packet_index = np.arange(cfg.max_packets, dtype=np.int64)
        # gen_interval[i, n] = n * k_i
        self.gen_interval = self.gen_period[:, None] * self.packet_index[None, :]
        self.grid_shape = cfg.grid_shape

    def due(self, t: int) -> np.ndarray:
        return self.gen_interval <= t


@lru_cache(maxsize=64)
def geometry(cfg: EnvConfig) -> Geometry:
    return Geometry(cfg)


@dataclass
class EnvState:
    """Full simulation state at interval ``t``.

    Ages are kept as integer interval counts (``age_steps``); multiply by
    ``interval_len`` for seconds. Rows are devices, columns generation
    indices ``n``; entries with ``n * k_i > t`` are not yet generated.
    """

    t: int
    age_steps: np.ndarray
    collected: np.ndarray
    uav_cells: np.ndarray
    moves_made: np.ndarray
    spent_flight: np.ndarray

    def copy(self) -> "EnvState":
        return EnvState(
            self.t,
            self.age_steps.copy(),
            self.collected.copy(),
            self.uav_cells.copy(),
            self.moves_made.copy(),
            self.spent_flight.copy(),
        )

    def ages(self, cfg: EnvConfig) -> np.ndarray:
        return self.age_steps * cfg.interval_len

    def packets(self, i: int, cfg: EnvConfig) -> list[PacketAge]:
        """Buffer of device ``i``: every packet with ``n * k_i <= t``."""
        k = cfg.devices[i].gen_period_k
        return [
            PacketAge(n, float(self.age_steps[i, n] * cfg.interval_len), bool(self.collected[i, n]))
            for n in range(self.t // k + 1)
        ]

    def equals(self, other: "EnvState") -> bool:
        return (
            self.t == other.t
            and np.array_equal(self.age_steps, other.age_steps)
            and np.array_equal(self.collected, other.collected)
            and np.array_equal(self.uav_cells, other.uav_cells)
            and np.array_equal(self.spent_flight, other.spent_flight)
        )

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "age_steps": self.age_steps.tolist(),
            "collected": self.collected.tolist(),
            "uav_cells": self.uav_cells.tolist(),
            "moves_made": self.moves_made.tolist(),
            "spent_flight": self.spent_flight.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvState":
        return cls(
            int(d["t"]),
            np.array(d["age_steps"], dtype=np.int64),
            np.array(d["collected"], dtype=bool),
            np.array(d["uav_cells"], dtype=np.int64),
            np.array(d["moves_made"], dtype=np.int64),
            np.array(d["spent_flight"], dtype=float),
        )


def initial_state(cfg: EnvConfig) -> EnvState:
    geo = geometry(cfg)
    shape = (cfg.num_devices, cfg.max_packets)
    collected = np.zeros(shape, dtype=bool)
    # the n = 0 packet counts as delivered at deployment: A_i^0[t] = 0 throughout
    collected[:, 0] = True
    return EnvState(
        t=0,
        age_steps=np.zeros(shape, dtype=np.int64),
        collected=collected,
        uav_cells=geo.start.copy(),
        moves_made=np.zeros(cfg.num_uavs, dtype=np.int64),
        spent_flight=np.zeros(cfg.num_uavs, dtype=float),
    )


@dataclass
class JointAction:
    """One proposed action per UAV: a move id and a claim bit per device.

    ``assoc`` has shape (U, I); ``assoc[u, i]`` is UAV u's claim on device i.
    """

    moves: np.ndarray
    assoc: np.ndarray

    @classmethod
    def stay(cls, cfg: EnvConfig) -> "JointAction":
        return cls(np.zeros(cfg.num_uavs, dtype=np.int64), np.zeros((cfg.num_uavs, cfg.num_devices), dtype=bool))

    @classmethod
    def build(cls, moves, assoc) -> "JointAction":
        return cls(np.asarray(moves, dtype=np.int64), np.asarray(assoc, dtype=bool))
