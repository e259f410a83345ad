"""Packet ages, their weights and the weighted-AoI aggregates."""
from __future__ import annotations

import numpy as np

from .config import EnvConfig
from .errors import ArbitrationError, UsageError
from .state import EnvState, geometry


def packet_weight(n: int, t: int, k: int, cfg: EnvConfig) -> float:
    """Weight at interval ``t`` of the packet from generation period ``n``.

    ``paper_literal`` uses gamma**(t - n); ``generation_time`` measures the
    exponent from the packet's generation interval instead, gamma**(t - n*k).
    """
    if n * k > t:
        raise ValueError(f"packet n={n} (k={k}) is not generated by t={t}")
    exponent = t - n if cfg.weight_mode == "paper_literal" else t - n * k
    return float(cfg.aoi_weight_gamma**exponent)


def weight_matrix(t: int, cfg: EnvConfig) -> np.ndarray:
    """(I, N) weights at interval ``t``; zero for packets not generated yet."""
    geo = geometry(cfg)
    due = geo.due(t)
    if cfg.weight_mode == "paper_literal":
        exponent = t - np.broadcast_to(geo.packet_index, due.shape)
    else:
        exponent = t - geo.gen_interval
    exponent = np.where(due, exponent, 0)
    return np.where(due, np.power(float(cfg.aoi_weight_gamma), exponent), 0.0)


def aoi_advance(state: EnvState, granted: np.ndarray, cfg: EnvConfig) -> EnvState:
    """Advance ages from ``state.t`` to ``state.t + 1`` given the granted associations.

    ``granted`` is the (I, U) matrix of collections made during the new
    interval. A collected packet stays at age 0 from then on; any other
    generated packet gains one interval, so a packet entering at ``n*k_i``
    already carries one interval of age at the end of that interval.
    """
    if state.t >= cfg.horizon:
        raise UsageError(f"cannot advance past the horizon K={cfg.horizon}")
    granted = np.asarray(granted, dtype=bool)
    if granted.shape != (cfg.num_devices, cfg.num_uavs):
        raise ValueError(f"granted must have shape {(cfg.num_devices, cfg.num_uavs)}, got {granted.shape}")
    if granted.size and granted.sum(axis=1).max() > 1:
        raise ArbitrationError("a device was granted to more than one UAV")
    t1 = state.t + 1
    due = geometry(cfg).due(t1)
    hit = granted.any(axis=1)
    collected = state.collected | (due & hit[:, None])
    age_steps = np.where(due & ~collected, state.age_steps + 1, 0)
    out = state.copy()
    out.t = t1
    out.collected = collected
    out.age_steps = age_steps
    return out


def device_weighted_aoi(age_steps: np.ndarray, t: int, cfg: EnvConfig) -> np.ndarray:
    """Per-device sum_n w^n[t] * A_i^n for the ages given (in intervals)."""
    return (weight_matrix(t, cfg) * age_steps).sum(axis=1) * cfg.interval_len


def weighted_aoi_snapshot(state: EnvState, cfg: EnvConfig) -> float:
    """Total weighted AoI sum_i sum_n w^n[t] A_i^n[t] at ``state.t``."""
    return float(device_weighted_aoi(state.age_steps, state.t, cfg).sum())


def weighted_aoi_device(age_history, k: int, cfg: EnvConfig) -> float:
    """f_i: weighted AoI of one device over the horizon.

    ``age_history[t][n]`` is A_i^n[t] in seconds for t = 0..K. Only packets
    with ``n * k <= t`` enter the inner sum.
    """
    hist = np.asarray(age_history, dtype=float)
    K = cfg.horizon
    if hist.shape[0] != K + 1:
        raise UsageError(f"age history must cover t = 0..{K}, got {hist.shape[0]} rows")
    total = 0.0
    for t in range(1, K + 1):
        for n in range(K // k + 1):
            if n * k <= t and n < hist.shape[1]:
                total += packet_weight(n, t, k, cfg) * hist[t, n]
    return total
