import numpy as np
import pytest

from uav_aoi.config import DeviceConfig, UavConfig, desk_config
from uav_aoi.env import AoIEnv, arbitrate, flight_cost, move_mask, step
from uav_aoi.errors import UsageError
from uav_aoi.problem import check_feasibility
from uav_aoi.state import DOWN, LEFT, RIGHT, STAY, UP, JointAction, initial_state

from conftest import make_cfg


def two_uav_cfg(**kw):
    devices = [DeviceConfig(i, 100.0 * (i % 3), 100.0 * (i // 3), 1, 1.5e9, 1e-3) for i in range(5)]
    uavs = [UavConfig(0, 80.0, 15.0, 1e6, (0, 0)), UavConfig(1, 100.0, 15.0, 1e6, (2, 2))]
    return make_cfg(devices=devices, uavs=uavs, **kw)


def test_flight_cost():
    cfg = make_cfg(uavs=[UavConfig(0, 100.0, 15.0, 1e6)])
    assert flight_cost(STAY, cfg) == 0.0
    assert flight_cost(UP, cfg) == pytest.approx(100.0 / 15.0, rel=1e-15)
    K = 7
    assert sum(flight_cost(RIGHT, cfg) for _ in range(K)) == pytest.approx(K * 100.0 / 15.0, rel=1e-12)


def test_arbitration_prefers_faster_uav():
    cfg = two_uav_cfg(min_rate=1e6)
    s = initial_state(cfg)
    assoc = np.zeros((2, 5), bool)
    assoc[:, 3] = True
    rates = np.full((5, 2), 5e7)
    rates[3] = (1e8, 2e8)
    arb = arbitrate(JointAction.build([STAY, STAY], assoc), rates, s, cfg)
    assert arb.granted[3].tolist() == [False, True]
    assert arb.claim_rejections == 1
    # equal rates: lower id wins
    rates[3] = (2e8, 2e8)
    arb = arbitrate(JointAction.build([STAY, STAY], assoc), rates, s, cfg)
    assert arb.granted[3].tolist() == [True, False]


def test_arbitration_rate_gate():
    cfg = two_uav_cfg(min_rate=1e8)
    s = initial_state(cfg)
    assoc = np.zeros((2, 5), bool)
    assoc[0, 1] = True
    rates = np.full((5, 2), 5e7)
    arb = arbitrate(JointAction.build([STAY, STAY], assoc), rates, s, cfg)
    assert not arb.granted.any()
    assert arb.violations == 1


def test_arbitration_boundary_move_replaced_by_stay():
    cfg = two_uav_cfg()
    s = initial_state(cfg)
    arb = arbitrate(JointAction.build([LEFT, UP], np.zeros((2, 5), bool)), np.zeros((5, 2)), s, cfg)
    assert arb.moves.tolist() == [STAY, STAY]
    assert arb.move_violations == 2


def test_flight_budget_enforced():
    cfg = make_cfg(uavs=[UavConfig(0, 100.0, 10.0, 25.0)], area_x=1000.0, area_y=1000.0)
    env = AoIEnv(cfg)
    env.reset()
    outs = [env.step(JointAction.build([RIGHT], [[False]])) for _ in range(4)]
    assert [o.move_violations for o in outs] == [0, 0, 1, 1]
    assert env.state.spent_flight[0] == 20.0
    assert not move_mask(env.state, 0, cfg)[RIGHT]
    assert move_mask(env.state, 0, cfg)[STAY]


def test_idle_step_ages_everything():
    cfg = two_uav_cfg()
    env = AoIEnv(cfg)
    s0 = env.reset()
    env.step(JointAction.stay(cfg))
    out = env.step(JointAction.stay(cfg))
    assert not out.per_uav_reward.any()
    s = env.state
    due = np.arange(cfg.max_packets)[None, :] * 1 <= s.t
    assert np.all(s.age_steps[:, 1:3] == [2, 1])
    assert not s.age_steps[:, 3:].any()
    assert s0.t == 0


def test_single_collection_reward():
    dev = DeviceConfig(0, 0.0, 0.0, 5, 1.5e9, 1e-3)
    cfg = make_cfg(devices=[dev], horizon=10, aoi_weight_gamma=1.0, interval_len=0.25)
    env = AoIEnv(cfg)
    env.reset()
    for _ in range(7):
        env.step(JointAction.stay(cfg))
    assert env.state.ages(cfg)[0, 1] == 3 * 0.25
    out = env.step(JointAction.build([STAY], [[True]]))
    assert out.per_uav_reward[0] == 3 * 0.25
    assert out.granted[0, 0] and out.delivered[0]


def test_episode_has_exactly_K_steps():
    cfg = desk_config(0)
    env = AoIEnv(cfg, seed=3)
    env.reset()
    n = 0
    while not env.done:
        env.step(JointAction.stay(cfg))
        n += 1
    assert n == cfg.horizon
    with pytest.raises(UsageError):
        env.step(JointAction.stay(cfg))


def random_rollout(cfg, seed, action_seed):
    env = AoIEnv(cfg, seed=seed)
    env.reset()
    arng = np.random.default_rng(action_seed)
    while not env.done:
        a = JointAction.build(arng.integers(0, 5, cfg.num_uavs), arng.random((cfg.num_uavs, cfg.num_devices)) < 0.7)
        out = env.step(a)
        g = out.granted
        assert g.sum(axis=1).max() <= 1
        assert np.all(out.rates[g] >= cfg.min_rate)
        assert np.all(env.state.spent_flight <= [u.max_flight_time for u in cfg.uavs])
        nx, ny = cfg.grid_shape
        assert np.all((env.state.uav_cells >= 0) & (env.state.uav_cells < [nx, ny]))
        assert np.all(out.per_uav_reward >= 0)
    return env


def test_random_rollouts_always_feasible():
    cfg = desk_config(1)
    for seed in range(5):
        env = random_rollout(cfg, seed, 100 + seed)
        assert check_feasibility(env.trajectory, cfg) == []


def test_determinism():
    cfg = desk_config(2)
    a = random_rollout(cfg, 9, 4).trajectory
    b = random_rollout(cfg, 9, 4).trajectory
    assert all(x.equals(y) for x, y in zip(a.states, b.states))
    assert all(np.array_equal(x, y) for x, y in zip(a.rates, b.rates))
