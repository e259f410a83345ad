import math

import numpy as np
import pytest

from uav_aoi.channel import ChannelSample, achievable_rate, distance, sample_channel, sample_gains
from uav_aoi.config import DeviceConfig, dbm_to_watt

from conftest import make_cfg


def test_distance_directly_above():
    assert distance((1, 1), 100.0, (100.0, 100.0), grid_step=100.0) == 100.0


def test_distance_planar_triangle():
    assert distance((300.0, 400.0), 0.0, (0.0, 0.0)) == 500.0


def test_distance_diagonal():
    assert distance((1, 1), 100.0, (0.0, 0.0), grid_step=100.0) == pytest.approx(math.sqrt(30000.0), rel=1e-15)


def test_pure_los_gain_is_inverse_square():
    cfg = make_cfg(pure_los=True)
    s = sample_channel(np.random.default_rng(0), 100.0, cfg)
    assert s.gain_sq == 1e-4
    d = np.array([1.0, 37.5, 123.0, 1e3])
    g, _, _ = sample_gains(None, d, cfg)
    # exact up to the rounding of the final multiply
    np.testing.assert_array_max_ulp(np.sqrt(g) * d, np.ones_like(d), maxulp=2)


def test_zero_distance_is_a_domain_error():
    with pytest.raises(ValueError):
        sample_channel(np.random.default_rng(0), 0.0, make_cfg(pure_los=False))


def test_rayleigh_limit_unit_mean():
    cfg = make_cfg(pure_los=False, rician_factor=0.0)
    g, _, nlos = sample_gains(np.random.default_rng(1), np.ones(100_000), cfg)
    assert np.mean(g) == pytest.approx(1.0, rel=0.02)
    assert np.mean(np.abs(nlos) ** 2) == pytest.approx(1.0, rel=0.02)
    assert np.all(g >= 0)


@pytest.mark.parametrize("phi", [0.0, 1.0, 10.0])
def test_fading_power_normalized(phi):
    cfg = make_cfg(pure_los=False, rician_factor=phi)
    d = 250.0
    g, phase, _ = sample_gains(np.random.default_rng(2), np.full(100_000, d), cfg)
    assert 0.98 <= np.mean(g * d * d) <= 1.02
    assert phase.min() >= 0 and phase.max() < 2 * np.pi


def test_rate_zero_power():
    dev = DeviceConfig(0, 0.0, 0.0, 1, 1.5e9, 0.0)
    s = ChannelSample(0.0, 0.0, 0.0, 100.0, 1e-4)
    assert achievable_rate(s, dev, make_cfg()) == 0.0


def test_rate_pure_los_table_values():
    cfg = make_cfg(noise_power=dbm_to_watt(-120), pure_los=True)
    dev = DeviceConfig(0, 0.0, 0.0, 1, 1.5e9, 1e-3)
    s = sample_channel(None, 100.0, cfg)
    snr = dev.tx_power * s.gain_sq / cfg.noise_power
    assert snr == pytest.approx(1e8, rel=1e-12)
    assert achievable_rate(s, dev, cfg) == pytest.approx(3.986e10, rel=1e-3)
    assert achievable_rate(s, dev, cfg) == pytest.approx(1.5e9 * math.log2(1 + 1e8), rel=1e-12)


def test_rate_linear_in_bandwidth():
    cfg = make_cfg()
    s = ChannelSample(0.0, 0.0, 0.0, 150.0, 1 / 150.0**2)
    a = achievable_rate(s, DeviceConfig(0, 0, 0, 1, 1e9, 1e-3), cfg)
    b = achievable_rate(s, DeviceConfig(0, 0, 0, 1, 2e9, 1e-3), cfg)
    assert b == pytest.approx(2 * a, rel=1e-15)
