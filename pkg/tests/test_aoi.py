import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uav_aoi.aoi import aoi_advance, packet_weight, weight_matrix, weighted_aoi_device, weighted_aoi_snapshot
from uav_aoi.config import DeviceConfig
from uav_aoi.errors import ArbitrationError, UsageError
from uav_aoi.state import initial_state

from conftest import make_cfg


def devices_with_periods(periods):
    return [DeviceConfig(i, 0.0, 0.0, k, 1.5e9, 1e-3) for i, k in enumerate(periods)]


def run_schedule(cfg, schedule):
    """schedule[t-1][i] -> collected during interval t. Returns all states."""
    state = initial_state(cfg)
    states = [state]
    for hits in schedule:
        granted = np.asarray(hits, dtype=bool)[:, None]
        state = aoi_advance(state, granted, cfg)
        states.append(state)
    return states


def closed_form_age(n, k, t, collect_times, tau):
    """Age of packet n at t from first principles, independent of aoi_advance."""
    born = n * k
    if n == 0 or any(born <= c <= t for c in collect_times):
        return 0.0
    return (t - born + 1) * tau


def test_ages_zero_at_start():
    cfg = make_cfg(devices=devices_with_periods([1, 2, 3]))
    s = initial_state(cfg)
    assert s.t == 0
    assert not s.age_steps.any()
    assert all(p.age == 0 for i in range(3) for p in s.packets(i, cfg))


def test_uncollected_packet_unrolls():
    cfg = make_cfg(devices=devices_with_periods([2]), interval_len=3e-3, horizon=6)
    states = run_schedule(cfg, [[False]] * 4)
    ages = [states[t].ages(cfg)[0, 1] for t in (2, 3, 4)]
    assert ages == pytest.approx([3e-3, 6e-3, 9e-3], rel=1e-14)
    assert [states[t].age_steps[0, 1] for t in (2, 3, 4)] == [1, 2, 3]
    assert states[1].ages(cfg)[0, 1] == 0


def test_collection_is_sticky():
    cfg = make_cfg(devices=devices_with_periods([1]), horizon=6)
    schedule = [[False], [False], [True], [False], [False]]
    states = run_schedule(cfg, schedule)
    assert states[3].age_steps[0, 2] == 0 and states[3].collected[0, 2]
    assert states[5].age_steps[0, 2] == 0 and states[5].collected[0, 2]
    # packet 4 was born after the collection and keeps ageing
    assert states[5].age_steps[0, 4] == 2


def test_closed_form_matches_recursion_on_random_schedules():
    rng = np.random.default_rng(7)
    for _ in range(200):
        K = int(rng.integers(1, 15))
        periods = rng.integers(1, K + 2, size=int(rng.integers(1, 5)))
        tau = float(rng.choice([1.0, 3e-3, 0.5]))
        cfg = make_cfg(devices=devices_with_periods(periods.tolist()), horizon=K, interval_len=tau)
        sched = rng.random((K, len(periods))) < rng.uniform(0, 0.5)
        states = run_schedule(cfg, sched)
        for t, s in enumerate(states):
            for i, k in enumerate(periods):
                hits = [c + 1 for c in range(K) if sched[c, i]]
                for n in range(t // k + 1):
                    assert s.ages(cfg)[i, n] == closed_form_age(n, k, t, hits, tau)


def test_buffer_count_matches_generation_schedule():
    cfg = make_cfg(devices=devices_with_periods([1, 2, 3, 7]), horizon=10)
    states = run_schedule(cfg, [[False] * 4] * 10)
    for s in states:
        for i, dev in enumerate(cfg.devices):
            assert len(s.packets(i, cfg)) == s.t // dev.gen_period_k + 1


def test_double_grant_rejected():
    cfg = make_cfg(devices=devices_with_periods([1]), uavs=None)
    from uav_aoi.config import UavConfig

    cfg = make_cfg(
        devices=devices_with_periods([1]),
        uavs=[UavConfig(0, 80.0, 15.0, 1e3), UavConfig(1, 90.0, 15.0, 1e3)],
    )
    with pytest.raises(ArbitrationError):
        aoi_advance(initial_state(cfg), np.array([[True, True]]), cfg)


def test_advance_past_horizon_rejected():
    cfg = make_cfg(horizon=1)
    s = aoi_advance(initial_state(cfg), np.zeros((1, 1), bool), cfg)
    with pytest.raises(UsageError):
        aoi_advance(s, np.zeros((1, 1), bool), cfg)


@pytest.mark.parametrize(
    "gamma,n,t,expected",
    [(0.8, 4, 4, 1.0), (0.8, 3, 5, 0.64), (1.0, 0, 9, 1.0), (1.0, 3, 3, 1.0)],
)
def test_packet_weight_paper_literal(gamma, n, t, expected):
    cfg = make_cfg(aoi_weight_gamma=gamma, horizon=10)
    assert packet_weight(n, t, 1, cfg) == pytest.approx(expected, rel=1e-15)


def test_packet_weight_generation_time():
    cfg = make_cfg(aoi_weight_gamma=0.5, weight_mode="generation_time", horizon=10)
    # n=2, k=3 generated at interval 6; at t=8 the exponent is 2
    assert packet_weight(2, 8, 3, cfg) == 0.25


@settings(max_examples=200, deadline=None)
@given(
    gamma=st.floats(0.01, 0.99),
    k=st.integers(1, 4),
    t=st.integers(0, 30),
    mode=st.sampled_from(["paper_literal", "generation_time"]),
)
def test_weights_increase_with_generation_index(gamma, k, t, mode):
    cfg = make_cfg(aoi_weight_gamma=gamma, weight_mode=mode, horizon=30)
    for n in range(t // k):
        assert packet_weight(n + 1, t, k, cfg) > packet_weight(n, t, k, cfg)


def test_weight_matrix_matches_scalar_weights():
    cfg = make_cfg(devices=devices_with_periods([1, 3]), aoi_weight_gamma=0.7, horizon=9)
    for t in range(10):
        w = weight_matrix(t, cfg)
        for i, k in enumerate((1, 3)):
            for n in range(cfg.max_packets):
                expected = packet_weight(n, t, k, cfg) if n * k <= t else 0.0
                assert w[i, n] == pytest.approx(expected, rel=1e-14)


def test_weighted_aoi_device_hand_enumeration():
    # K=2, k=1, gamma=1, tau=1, nothing collected:
    # packet 1 has age 1 at t=1 and 2 at t=2, packet 2 has age 1 at t=2
    cfg = make_cfg(devices=devices_with_periods([1]), horizon=2)
    states = run_schedule(cfg, [[False], [False]])
    hist = np.stack([s.ages(cfg)[0] for s in states])
    assert weighted_aoi_device(hist, 1, cfg) == 4.0


def test_weighted_aoi_device_silent_device():
    cfg = make_cfg(devices=devices_with_periods([9]), horizon=5)
    states = run_schedule(cfg, [[False]] * 5)
    hist = np.stack([s.ages(cfg)[0] for s in states])
    assert weighted_aoi_device(hist, 9, cfg) == 0.0


def test_weighted_aoi_device_always_collected():
    cfg = make_cfg(devices=devices_with_periods([1]), horizon=5, aoi_weight_gamma=0.8)
    states = run_schedule(cfg, [[True]] * 5)
    hist = np.stack([s.ages(cfg)[0] for s in states])
    assert weighted_aoi_device(hist, 1, cfg) == 0.0


def test_snapshot_is_sum_of_weighted_ages():
    cfg = make_cfg(devices=devices_with_periods([1, 2]), horizon=6, aoi_weight_gamma=0.9, interval_len=0.5)
    states = run_schedule(cfg, [[False, False], [True, False], [False, False], [False, True]])
    s = states[-1]
    expected = 0.0
    for i, k in enumerate((1, 2)):
        for p in s.packets(i, cfg):
            expected += packet_weight(p.gen_index, s.t, k, cfg) * p.age
    assert weighted_aoi_snapshot(s, cfg) == pytest.approx(expected, rel=1e-12)
