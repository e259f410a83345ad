"""Air-to-ground block Rician channel, SNR and achievable rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DeviceConfig, EnvConfig


@dataclass(frozen=True)
class ChannelSample:
    los_phase: float
    nlos_re: float
    nlos_im: float
    distance: float
    gain_sq: float


def distance(uav_cell, uav_altitude: float, device_pos, grid_step: float = 1.0) -> float:
    """3D distance between a UAV over ``uav_cell`` and a ground device.

    ``uav_cell`` is in grid units and scaled by ``grid_step``; ``device_pos``
    is in meters.
    """
    dx = uav_cell[0] * grid_step - device_pos[0]
    dy = uav_cell[1] * grid_step - device_pos[1]
    return math.sqrt(dx * dx + dy * dy + uav_altitude * uav_altitude)


def distance_matrix(uav_cells: np.ndarray, altitudes: np.ndarray, device_xy: np.ndarray, grid_step: float) -> np.ndarray:
    """(I, U) device-to-UAV distances."""
    uav_xy = np.asarray(uav_cells, dtype=float) * grid_step
    diff = device_xy[:, None, :] - uav_xy[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1) + altitudes[None, :] ** 2)


def sample_gains(rng: np.random.Generator, distances: np.ndarray, cfg: EnvConfig):
    """Draw |h|^2 for every entry of ``distances``.

    Returns ``(gain_sq, los_phase, nlos)`` where ``nlos`` is complex with unit
    total variance. With ``cfg.pure_los`` nothing is drawn and the gain is
    exactly 1/d^2.
    """
    d = np.asarray(distances, dtype=float)
    if np.any(d <= 0):
        raise ValueError("channel distance must be positive")
    if cfg.pure_los:
        zeros = np.zeros_like(d)
        return 1.0 / (d * d), zeros, zeros.astype(complex)
    phi = cfg.rician_factor
    phase = rng.uniform(0.0, 2.0 * np.pi, size=d.shape)
    nlos = (rng.standard_normal(d.shape) + 1j * rng.standard_normal(d.shape)) / np.sqrt(2.0)
    fading = np.sqrt(phi / (phi + 1.0)) * np.exp(1j * phase) + np.sqrt(1.0 / (phi + 1.0)) * nlos
    gain_sq = np.abs(fading) ** 2 / (d * d)
    return gain_sq, phase, nlos


def sample_channel(rng: np.random.Generator, d: float, cfg: EnvConfig) -> ChannelSample:
    gain, phase, nlos = sample_gains(rng, np.array([d]), cfg)
    return ChannelSample(
        los_phase=float(phase[0]),
        nlos_re=float(nlos[0].real),
        nlos_im=float(nlos[0].imag),
        distance=float(d),
        gain_sq=float(gain[0]),
    )


def achievable_rate(sample: ChannelSample, device: DeviceConfig, cfg: EnvConfig) -> float:
    """Shannon rate B log2(1 + P |h|^2 / sigma^2) in bits/second."""
    snr = device.tx_power * sample.gain_sq / cfg.noise_power
    return device.bandwidth * math.log2(1.0 + snr)


def rate_matrix(gain_sq: np.ndarray, bandwidth: np.ndarray, tx_power: np.ndarray, noise_power: float) -> np.ndarray:
    snr = tx_power[:, None] * gain_sq / noise_power
    return bandwidth[:, None] * np.log2(1.0 + snr)
