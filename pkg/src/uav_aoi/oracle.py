"""Exact optima on tiny deterministic instances, and a greedy heuristic for any size.

The search is a depth-first enumeration over joint moves (pruned by grid
bounds and flight budget) and collection sets (pruned by the rate gate),
memoized on the full environment state. Because the channel is pure
line-of-sight the rates at a cell are fixed, so the optimum is well defined.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aoi import aoi_advance, device_weighted_aoi, weighted_aoi_snapshot
from .channel import distance_matrix, rate_matrix
from .config import ConfigError, EnvConfig
from .env import AoIEnv, move_mask
from .errors import UsageError
from .problem import TrajectoryRecord, check_feasibility, objective1, objective2, uav_rewards
from .state import MOVE_DELTAS, NUM_MOVES, STAY, EnvState, JointAction, geometry, initial_state

TARGETS = ("obj1_min", "obj2_max")
DEFAULT_NODE_BUDGET = 100_000_000
LIMITS = {"num_uavs": 2, "num_cells": 9, "horizon": 5, "num_devices": 3}


class OracleBudgetExceeded(UsageError):
    """The instance is too large for exhaustive search under the node budget."""


def check_instance(cfg: EnvConfig) -> None:
    if not cfg.pure_los:
        raise ConfigError("oracle instances need a deterministic (pure line-of-sight) channel")
    for name, cap in LIMITS.items():
        if getattr(cfg, name) > cap:
            raise ConfigError(f"oracle instance too large: {name}={getattr(cfg, name)} exceeds {cap}")


@dataclass
class OracleSolution:
    target: str
    value: float
    objective1: float
    objective2: float
    nodes_explored: int
    trajectory: TrajectoryRecord
    moves: np.ndarray  # (K, U)
    associations: np.ndarray  # (K, U, I) claims that reproduce the trajectory

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "value": self.value,
            "objective1": self.objective1,
            "objective2": self.objective2,
            "nodes_explored": self.nodes_explored,
            "moves": self.moves.tolist(),
            "associations": self.associations.astype(int).tolist(),
            "trajectory": self.trajectory.to_dict(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def _los_rates(cells: np.ndarray, cfg: EnvConfig) -> np.ndarray:
    geo = geometry(cfg)
    dist = distance_matrix(cells, geo.altitude, geo.device_xy, cfg.grid_step)
    # line-of-sight gain; equals the realized gain when cfg.pure_los is set
    return rate_matrix(1.0 / (dist * dist), geo.bandwidth, geo.tx_power, cfg.noise_power)


class _Search:
    def __init__(self, cfg: EnvConfig, target: str, node_budget: int, move_order=None):
        self.cfg = cfg
        self.maximize = target == "obj2_max"
        self.budget = node_budget
        self.nodes = 0
        self.memo: dict = {}
        self.move_order = list(move_order) if move_order is not None else list(range(NUM_MOVES))
        self.rate_cache: dict = {}

    def key(self, s: EnvState):
        return (s.t, s.uav_cells.tobytes(), s.moves_made.tobytes(), s.collected.tobytes())

    def rates(self, cells):
        k = cells.tobytes()
        if k not in self.rate_cache:
            self.rate_cache[k] = _los_rates(cells, self.cfg)
        return self.rate_cache[k]

    def actions(self, s: EnvState):
        """Yield (moves, granted (I, U)) for every distinct feasible joint action."""
        cfg = self.cfg
        per_uav = [[m for m in self.move_order if move_mask(s, u, cfg)[m]] for u in range(cfg.num_uavs)]
        due = geometry(cfg).due(s.t + 1)
        pending = (due & ~s.collected).any(axis=1)
        for moves in itertools.product(*per_uav):
            moves = np.array(moves, dtype=np.int64)
            cells = s.uav_cells + MOVE_DELTAS[moves]
            rates = self.rates(cells)
            ok = rates >= cfg.min_rate
            # only devices with something to send can change the outcome
            candidates = [i for i in range(cfg.num_devices) if pending[i] and ok[i].any()]
            for r in range(len(candidates) + 1):
                for chosen in itertools.combinations(candidates, r):
                    granted = np.zeros((cfg.num_devices, cfg.num_uavs), dtype=bool)
                    for i in chosen:
                        granted[i, int(np.argmax(np.where(ok[i], rates[i], -np.inf)))] = True
                    yield moves, granted

    def transition(self, s: EnvState, moves, granted):
        nxt = aoi_advance(s, granted, self.cfg)
        nxt.uav_cells = s.uav_cells + MOVE_DELTAS[moves]
        nxt.moves_made = s.moves_made + (moves != STAY)
        nxt.spent_flight = nxt.moves_made * (self.cfg.grid_step / geometry(self.cfg).speed)
        if self.maximize:
            gain = float(uav_rewards(granted, s.age_steps, nxt.t, self.cfg).sum())
        else:
            gain = weighted_aoi_snapshot(nxt, self.cfg)
        return nxt, gain

    def value(self, s: EnvState) -> float:
        if s.t >= self.cfg.horizon:
            return 0.0
        k = self.key(s)
        hit = self.memo.get(k)
        if hit is not None:
            return hit[0]
        best, best_action = None, None
        for moves, granted in self.actions(s):
            self.nodes += 1
            if self.nodes > self.budget:
                raise OracleBudgetExceeded(
                    f"instance too large: more than {self.budget} search nodes (raise node_budget or shrink the instance)"
                )
            nxt, gain = self.transition(s, moves, granted)
            v = gain + self.value(nxt)
            better = best is None or (v > best if self.maximize else v < best)
            if better:
                best, best_action = v, (moves, granted)
        self.memo[k] = (best, best_action)
        return best


def solve_exact(cfg: EnvConfig, target: str = "obj2_max", node_budget: int = DEFAULT_NODE_BUDGET, move_order=None) -> OracleSolution:
    """Globally optimal objective2 (``obj2_max``) or objective1 (``obj1_min``).

    Raises :class:`OracleBudgetExceeded` rather than returning a suboptimum.
    ``move_order`` permutes the enumeration order; the value never depends on it.
    """
    if target not in TARGETS:
        raise UsageError(f"target must be one of {TARGETS}")
    check_instance(cfg)
    search = _Search(cfg, target, node_budget, move_order)
    start = initial_state(cfg)
    value = search.value(start)

    # replay the optimal policy through the real environment
    env = AoIEnv(cfg, seed=0)
    s = env.reset()
    moves_seq, claims_seq = [], []
    while not env.done:
        moves, granted = search.memo[search.key(s)][1]
        claims = granted.T.copy()
        env.step(JointAction.build(moves, claims))
        moves_seq.append(moves)
        claims_seq.append(claims)
        s = env.state
    traj = env.trajectory
    o1, o2 = objective1(traj, cfg), objective2(traj, cfg)
    achieved = o2 if target == "obj2_max" else o1
    if not np.isclose(achieved, value, rtol=1e-9, atol=1e-12):
        raise AssertionError(f"replayed value {achieved} differs from search value {value}")
    if check_feasibility(traj, cfg):
        raise AssertionError("oracle trajectory is infeasible")
    return OracleSolution(
        target=target,
        value=float(value),
        objective1=o1,
        objective2=o2,
        nodes_explored=search.nodes,
        trajectory=traj,
        moves=np.array(moves_seq, dtype=np.int64).reshape(cfg.horizon, cfg.num_uavs),
        associations=np.array(claims_seq, dtype=bool).reshape(cfg.horizon, cfg.num_uavs, cfg.num_devices),
    )


def _step_toward(cell, goal, mask) -> int:
    best, best_d = STAY, None
    for m in range(NUM_MOVES):
        if not mask[m]:
            continue
        d = np.abs(cell + MOVE_DELTAS[m] - goal).sum()
        if best_d is None or d < best_d:
            best, best_d = m, d
    return best


def greedy_actions(state: EnvState, cfg: EnvConfig) -> JointAction:
    """Heuristic joint action from the current state.

    Each UAV in id order picks the device with the largest current weighted
    age that no lower-id UAV picked (ties to the lowest device id), steps
    toward it unless it is already in line-of-sight range, and claims every
    device that has data pending and is in line-of-sight range of its new cell.
    """
    geo = geometry(cfg)
    weighted = device_weighted_aoi(state.age_steps, state.t, cfg)
    moves = np.zeros(cfg.num_uavs, dtype=np.int64)
    taken: set[int] = set()
    here = _los_rates(state.uav_cells, cfg) >= cfg.min_rate
    for u in range(cfg.num_uavs):
        order = [i for i in np.argsort(-weighted, kind="stable") if weighted[i] > 0 and i not in taken]
        if not order:
            continue
        target = int(order[0])
        taken.add(target)
        if here[target, u]:
            continue
        goal = geo.device_xy[target] / cfg.grid_step
        moves[u] = _step_toward(state.uav_cells[u], goal, move_mask(state, u, cfg))
    cells = state.uav_cells + MOVE_DELTAS[moves]
    reach = _los_rates(cells, cfg) >= cfg.min_rate
    pending = (geo.due(state.t + 1) & ~state.collected).any(axis=1)
    claims = (reach & pending[:, None]).T
    return JointAction.build(moves, claims)


def greedy_baseline(cfg: EnvConfig, seed: int = 0) -> TrajectoryRecord:
    """Run the greedy heuristic for one episode; feasible by construction (arbitrated by the env)."""
    env = AoIEnv(cfg, seed=seed)
    env.reset()
    while not env.done:
        env.step(greedy_actions(env.state, cfg))
    return env.trajectory
