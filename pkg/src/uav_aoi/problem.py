"""Objectives, per-UAV reward and trajectory feasibility.

objective1 is the weighted AoI to minimize; objective2 is the decomposable
surrogate (sum over UAVs of collected prior-interval weighted ages) to
maximize. Both are recomputed from recorded trajectories.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .aoi import aoi_advance, device_weighted_aoi, weight_matrix, weighted_aoi_device
from .config import EnvConfig
from .errors import UsageError
from .state import MOVE_DELTAS, EnvState, initial_state

FLIGHT_TOL = 1e-9


def per_uav_reward(u: int, granted_row, prior_age_steps: np.ndarray, t: int, cfg: EnvConfig) -> float:
    """r_u[t]: weighted ages at t-1 of the devices UAV ``u`` collects at ``t``.

    ``granted_row`` is the length-I association vector of UAV ``u``;
    ``prior_age_steps`` are the (I, N) ages at t-1 in intervals. Weights are
    evaluated at ``t``.
    """
    row = np.asarray(granted_row, dtype=bool)
    if not row.any():
        return 0.0
    per_device = device_weighted_aoi(prior_age_steps, t, cfg)
    return float(per_device[row].sum())


def uav_rewards(granted: np.ndarray, prior_age_steps: np.ndarray, t: int, cfg: EnvConfig) -> np.ndarray:
    per_device = device_weighted_aoi(prior_age_steps, t, cfg)
    return per_device @ np.asarray(granted, dtype=float)


@dataclass
class TrajectoryRecord:
    """One episode: K+1 states, K granted matrices (I, U), K reward rows (U,).

    ``rates`` holds the realized (I, U) rate matrices at each interval and
    ``moves`` the executed move ids, so that feasibility can be audited.
    """

    states: list[EnvState] = field(default_factory=list)
    granted: list[np.ndarray] = field(default_factory=list)
    rewards: list[np.ndarray] = field(default_factory=list)
    rates: list[np.ndarray] = field(default_factory=list)
    moves: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.granted)

    def is_complete(self, cfg: EnvConfig) -> bool:
        K = cfg.horizon
        return len(self.states) == K + 1 and len(self.granted) == K and len(self.rewards) == K

    def require_complete(self, cfg: EnvConfig) -> None:
        if not self.is_complete(cfg):
            raise UsageError(
                f"incomplete trajectory: {len(self.states)} states / {len(self.granted)} steps for K={cfg.horizon}"
            )

    def cells(self) -> np.ndarray:
        """(K+1, U, 2) UAV grid cells."""
        return np.stack([s.uav_cells for s in self.states])

    def to_dict(self) -> dict:
        return {
            "states": [s.to_dict() for s in self.states],
            "granted": [g.astype(int).tolist() for g in self.granted],
            "rewards": [r.tolist() for r in self.rewards],
            "rates": [r.tolist() for r in self.rates],
            "moves": [m.tolist() for m in self.moves],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryRecord":
        return cls(
            states=[EnvState.from_dict(s) for s in d["states"]],
            granted=[np.array(g, dtype=bool) for g in d["granted"]],
            rewards=[np.array(r, dtype=float) for r in d["rewards"]],
            rates=[np.array(r, dtype=float) for r in d.get("rates", [])],
            moves=[np.array(m, dtype=np.int64) for m in d.get("moves", [])],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TrajectoryRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ObjectiveReport:
    objective1: float
    objective2: float
    per_device_f: np.ndarray
    per_uav_return: np.ndarray


def objective1(traj: TrajectoryRecord, cfg: EnvConfig) -> float:
    """Total weighted AoI summed over t = 1..K and all devices."""
    traj.require_complete(cfg)
    return float(sum(device_weighted_aoi(s.age_steps, s.t, cfg).sum() for s in traj.states[1:]))


def per_device_f(traj: TrajectoryRecord, cfg: EnvConfig) -> np.ndarray:
    traj.require_complete(cfg)
    tau = cfg.interval_len
    out = np.zeros(cfg.num_devices)
    for i, dev in enumerate(cfg.devices):
        history = np.stack([s.age_steps[i] for s in traj.states]) * tau
        out[i] = weighted_aoi_device(history, dev.gen_period_k, cfg)
    return out


def objective2(traj: TrajectoryRecord, cfg: EnvConfig) -> float:
    """Surrogate: sum over u, t, i of alpha_iu[t] * sum_n w^n[t] A_i^n[t-1]."""
    traj.require_complete(cfg)
    tau = cfg.interval_len
    total = 0.0
    for t in range(1, cfg.horizon + 1):
        alpha = traj.granted[t - 1]
        w = weight_matrix(t, cfg)
        prior = traj.states[t - 1].age_steps
        for i in range(cfg.num_devices):
            served = alpha[i].sum()
            if served:
                total += served * float((w[i] * prior[i]).sum()) * tau
    return total


def per_uav_returns(traj: TrajectoryRecord, cfg: EnvConfig) -> np.ndarray:
    traj.require_complete(cfg)
    out = np.zeros(cfg.num_uavs)
    for t in range(1, cfg.horizon + 1):
        prior = traj.states[t - 1].age_steps
        for u in range(cfg.num_uavs):
            out[u] += per_uav_reward(u, traj.granted[t - 1][:, u], prior, t, cfg)
    return out


def report(traj: TrajectoryRecord, cfg: EnvConfig) -> ObjectiveReport:
    return ObjectiveReport(
        objective1=objective1(traj, cfg),
        objective2=objective2(traj, cfg),
        per_device_f=per_device_f(traj, cfg),
        per_uav_return=per_uav_returns(traj, cfg),
    )


class Violation(NamedTuple):
    constraint: str
    t: int
    entity: int


def check_feasibility(traj: TrajectoryRecord, cfg: EnvConfig) -> list[Violation]:
    """Audit every constraint; returns an empty list for a feasible trajectory.

    Codes: ``rate`` (rate gate), ``one_uav`` (one UAV per device), ``budget``
    (flight time), ``area_x``/``area_y`` (area bounds), ``binary`` (binary
    associations). The rate check needs ``traj.rates``.
    """
    traj.require_complete(cfg)
    out: list[Violation] = []
    step = cfg.grid_step
    for t, alpha in enumerate(traj.granted, start=1):
        a = np.asarray(alpha)
        if not np.all((a == 0) | (a == 1)):
            for i, u in zip(*np.nonzero((a != 0) & (a != 1))):
                out.append(Violation("binary", t, int(i)))
        a = a.astype(bool)
        if traj.rates:
            low = a & (np.asarray(traj.rates[t - 1]) < cfg.min_rate)
            for i, u in zip(*np.nonzero(low)):
                out.append(Violation("rate", t, int(i)))
        for i in np.nonzero(a.sum(axis=1) > 1)[0]:
            out.append(Violation("one_uav", t, int(i)))
    cells = traj.cells().astype(float) * step
    for t in range(cells.shape[0]):
        for u in range(cfg.num_uavs):
            x, y = cells[t, u]
            if not 0 <= x <= cfg.area_x:
                out.append(Violation("area_x", t, u))
            if not 0 <= y <= cfg.area_y:
                out.append(Violation("area_y", t, u))
    for u, uav in enumerate(cfg.uavs):
        path = np.diff(cells[:, u, :], axis=0)
        flight = float(np.sqrt((path**2).sum(axis=1)).sum()) / uav.speed
        if flight > uav.max_flight_time * (1 + FLIGHT_TOL):
            out.append(Violation("budget", cfg.horizon, u))
    return out


def flight_time(traj: TrajectoryRecord, cfg: EnvConfig) -> np.ndarray:
    cells = traj.cells().astype(float) * cfg.grid_step
    out = np.zeros(cfg.num_uavs)
    for u, uav in enumerate(cfg.uavs):
        out[u] = math.fsum(np.sqrt((np.diff(cells[:, u, :], axis=0) ** 2).sum(axis=1))) / uav.speed
    return out


def build_trajectory(cfg: EnvConfig, granted_seq, moves_seq=None, rates_seq=None) -> TrajectoryRecord:
    """Replay a schedule of (I, U) association matrices without any arbitration.

    Moves are applied verbatim (no bounds or budget checks) so hand-built
    infeasible trajectories can be audited.
    """
    state = initial_state(cfg)
    traj = TrajectoryRecord(states=[state])
    zero_moves = np.zeros(cfg.num_uavs, dtype=np.int64)
    for idx, alpha in enumerate(granted_seq):
        alpha = np.asarray(alpha)
        moves = zero_moves if moves_seq is None else np.asarray(moves_seq[idx], dtype=np.int64)
        t1 = state.t + 1
        rewards = uav_rewards(alpha.astype(bool), state.age_steps, t1, cfg)
        nxt = _advance_unchecked(state, alpha.astype(bool), cfg)
        nxt.uav_cells = state.uav_cells + MOVE_DELTAS[moves]
        nxt.moves_made = state.moves_made + (moves != 0)
        traj.states.append(nxt)
        traj.granted.append(alpha)
        traj.rewards.append(rewards)
        traj.moves.append(moves)
        if rates_seq is not None:
            traj.rates.append(np.asarray(rates_seq[idx], dtype=float))
        state = nxt
    return traj


def _advance_unchecked(state, granted, cfg):
    if granted.size and granted.sum(axis=1).max() > 1:
        # collapse duplicate grants so the age recursion is still defined
        granted = granted.any(axis=1, keepdims=True) & (np.arange(granted.shape[1]) == 0)
    return aoi_advance(state, granted, cfg)
