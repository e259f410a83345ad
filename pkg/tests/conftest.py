import numpy as np
import pytest

from uav_aoi.config import DeviceConfig, EnvConfig, UavConfig


def make_cfg(devices=None, uavs=None, **kw):
    """Small deterministic scenario; every field overridable."""
    devices = devices if devices is not None else [DeviceConfig(0, 100.0, 100.0, 1, 1.5e9, 1e-3)]
    uavs = uavs if uavs is not None else [UavConfig(0, 100.0, 15.0, 1e6, (0, 0))]
    base = dict(
        num_devices=len(devices),
        num_uavs=len(uavs),
        area_x=200.0,
        area_y=200.0,
        grid_step=100.0,
        horizon=5,
        interval_len=1.0,
        rician_factor=10.0,
        noise_power=1e-9,
        min_rate=8.5e9,
        aoi_weight_gamma=1.0,
        weight_mode="paper_literal",
        devices=tuple(devices),
        uavs=tuple(uavs),
        rng_seed=0,
        pure_los=True,
    )
    base.update(kw)
    return EnvConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> str:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ACCEPTANCE_LINES[number]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
