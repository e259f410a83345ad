"""Discrete-time multi-UAV data-collection environment.

One call to :func:`step` moves the UAVs, draws the block-fading channel at
their new positions, arbitrates the association claims, advances every
packet age by one interval and pays out the per-UAV rewards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aoi import aoi_advance, weighted_aoi_snapshot
from .channel import distance_matrix, rate_matrix, sample_gains
from .config import EnvConfig
from .errors import UsageError
from .problem import TrajectoryRecord, uav_rewards
from .state import MOVE_DELTAS, NUM_MOVES, STAY, EnvState, JointAction, geometry, initial_state


def flight_cost(move: int, cfg: EnvConfig, uav: int = 0) -> float:
    """Seconds of flight budget consumed by one move: 0 to stay, grid_step / V otherwise."""
    if not 0 <= move < NUM_MOVES:
        raise ValueError(f"invalid move {move}")
    if move == STAY:
        return 0.0
    return cfg.grid_step / cfg.uavs[uav].speed


def move_mask(state: EnvState, u: int, cfg: EnvConfig) -> np.ndarray:
    """Boolean mask over the 5 moves that keep UAV ``u`` in the grid and within budget."""
    nx, ny = cfg.grid_shape
    target = state.uav_cells[u] + MOVE_DELTAS
    inside = (target[:, 0] >= 0) & (target[:, 0] < nx) & (target[:, 1] >= 0) & (target[:, 1] < ny)
    cost = flight_cost(1, cfg, u)
    affordable = (state.moves_made[u] + 1) * cost <= cfg.uavs[u].max_flight_time * (1 + 1e-12)
    mask = inside & affordable
    mask[STAY] = True
    return mask


def resolve_moves(moves, state: EnvState, cfg: EnvConfig) -> tuple[np.ndarray, int]:
    """Replace moves that leave the grid or overrun the flight budget by stay."""
    moves = np.asarray(moves, dtype=np.int64).copy()
    rejected = 0
    for u in range(cfg.num_uavs):
        if not move_mask(state, u, cfg)[moves[u]]:
            moves[u] = STAY
            rejected += 1
    return moves, rejected


@dataclass
class Arbitration:
    moves: np.ndarray
    granted: np.ndarray
    move_violations: int
    claim_rejections: int

    @property
    def violations(self) -> int:
        return self.move_violations + self.claim_rejections


def arbitrate(proposed: JointAction, rates: np.ndarray, state: EnvState, cfg: EnvConfig) -> Arbitration:
    """Map a proposed joint action to a feasible one.

    ``rates`` is the (I, U) matrix realized at the post-move positions. A
    claim survives when its rate reaches ``min_rate``; if several UAVs claim
    a device the highest rate wins and ties go to the lower UAV id.
    """
    moves, move_violations = resolve_moves(proposed.moves, state, cfg)
    claims = np.asarray(proposed.assoc, dtype=bool).T  # (I, U)
    valid = claims & (rates >= cfg.min_rate)
    granted = np.zeros_like(valid)
    contested = valid.any(axis=1)
    if contested.any():
        ranked = np.where(valid, rates, -np.inf)
        winner = np.argmax(ranked, axis=1)  # first maximum -> lowest id on ties
        rows = np.nonzero(contested)[0]
        granted[rows, winner[rows]] = True
    rejections = int(claims.sum() - granted.sum())
    return Arbitration(moves, granted, move_violations, rejections)


@dataclass
class StepOutcome:
    granted: np.ndarray
    per_uav_reward: np.ndarray
    aoi_snapshot: float
    violations: int
    move_violations: int
    claim_rejections: int
    moves: np.ndarray
    rates: np.ndarray
    # devices that delivered at least one pending packet this interval
    delivered: np.ndarray


def step(state: EnvState, proposed: JointAction, rng: np.random.Generator, cfg: EnvConfig):
    """Advance one interval; returns ``(next_state, outcome)``."""
    if state.t >= cfg.horizon:
        raise UsageError(f"episode finished at t={state.t}; call reset")
    geo = geometry(cfg)
    moves, _ = resolve_moves(proposed.moves, state, cfg)
    cells = state.uav_cells + MOVE_DELTAS[moves]
    dist = distance_matrix(cells, geo.altitude, geo.device_xy, cfg.grid_step)
    gains, _, _ = sample_gains(rng, dist, cfg)
    rates = rate_matrix(gains, geo.bandwidth, geo.tx_power, cfg.noise_power)
    arb = arbitrate(proposed, rates, state, cfg)

    moved = arb.moves != STAY
    nxt = aoi_advance(state, arb.granted, cfg)
    nxt.uav_cells = state.uav_cells + MOVE_DELTAS[arb.moves]
    nxt.moves_made = state.moves_made + moved
    nxt.spent_flight = nxt.moves_made * (cfg.grid_step / geo.speed)

    t1 = nxt.t
    rewards = uav_rewards(arb.granted, state.age_steps, t1, cfg)
    pending = (geo.due(t1) & ~state.collected).any(axis=1)
    outcome = StepOutcome(
        granted=arb.granted,
        per_uav_reward=rewards,
        aoi_snapshot=weighted_aoi_snapshot(nxt, cfg),
        violations=arb.violations,
        move_violations=arb.move_violations,
        claim_rejections=arb.claim_rejections,
        moves=arb.moves,
        rates=rates,
        delivered=arb.granted.any(axis=1) & pending,
    )
    return nxt, outcome


class AoIEnv:
    """Stateful wrapper owning a config, a state and a private RNG.

    Each instance records the running episode as a :class:`TrajectoryRecord`.
    """

    def __init__(self, cfg: EnvConfig, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg.rng_seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.state: EnvState | None = None
        self.trajectory: TrajectoryRecord | None = None

    def reset(self) -> EnvState:
        self.state = initial_state(self.cfg)
        self.trajectory = TrajectoryRecord(states=[self.state])
        return self.state

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.t >= self.cfg.horizon

    def step(self, action: JointAction) -> StepOutcome:
        if self.state is None:
            raise UsageError("reset() must be called before step()")
        self.state, outcome = step(self.state, action, self.rng, self.cfg)
        traj = self.trajectory
        traj.states.append(self.state)
        traj.granted.append(outcome.granted)
        traj.rewards.append(outcome.per_uav_reward)
        traj.rates.append(outcome.rates)
        traj.moves.append(outcome.moves)
        return outcome

    def move_mask(self, u: int) -> np.ndarray:
        return move_mask(self.state, u, self.cfg)
