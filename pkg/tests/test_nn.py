import numpy as np
import pytest

from uav_aoi.errors import UsageError
from uav_aoi.nn import Gradients, Mlp, OptimizerState, adam_step, load_checkpoint, save_checkpoint


def fd_gradients(net, x, out_grad, h=1e-5):
    """Central finite differences of loss = sum(out_grad * net(x)) for every parameter."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = float((net(x) * out_grad).sum())
            p[idx] = old - h
            down = float((net(x) * out_grad).sum())
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def finite_difference_error(net, x, rng):
    """Max relative error of backward against central differences for a random output gradient."""
    og = rng.normal(size=(x.shape[0], net.output_size))
    _, tape = net.forward(x)
    return max_rel_error(list(net.backward(tape, og).arrays()), fd_gradients(net, x, og))


def test_zero_net_outputs_zero():
    net = Mlp([3, 4, 2], ["tanh", "identity"])
    for p in net.parameters():
        p[...] = 0
    assert np.all(net(np.array([1.0, -2.0, 3.0])) == 0)


def test_affine_scalar():
    net = Mlp([1, 1], ["identity"])
    net.weights[0][...] = 2.0
    net.biases[0][...] = 1.0
    assert net(np.array([3.0]))[0] == 7.0


def test_tanh_codomain():
    net = Mlp([1, 5], ["tanh"], rng=np.random.default_rng(0))
    out = net(np.array([1e3]))
    assert np.all((out > -1) & (out < 1) | (np.abs(out) == 1.0))
    assert np.all(np.abs(out) <= 1)


def test_shape_mismatch_is_usage_error():
    net = Mlp([3, 2])
    with pytest.raises(UsageError):
        net.forward(np.zeros(4))


def test_identity_bias_gradient_is_one():
    net = Mlp([2, 1], ["identity"])
    _, tape = net.forward(np.array([0.3, -0.1]))
    g = net.backward(tape, np.array([1.0]))
    assert g.biases[0][0] == 1.0
    assert np.allclose(g.weights[0][:, 0], [0.3, -0.1])


def test_zero_output_grad_gives_zero_gradients():
    net = Mlp([4, 8, 3], rng=np.random.default_rng(1))
    _, tape = net.forward(np.ones(4))
    g = net.backward(tape, np.zeros(3))
    assert all(not a.any() for a in g.arrays())


def test_stale_tape_rejected():
    net = Mlp([2, 2], rng=np.random.default_rng(0))
    _, tape = net.forward(np.ones(2))
    opt = OptimizerState.for_net(net, lr=0.1)
    adam_step(net, net.backward(tape, np.ones(2)), opt)
    with pytest.raises(UsageError):
        net.backward(tape, np.ones(2))


def test_gradient_matches_finite_differences_4_8_3():
    rng = np.random.default_rng(2)
    net = Mlp([4, 8, 3], rng=rng)
    x = rng.normal(size=(5, 4))
    og = rng.normal(size=(5, 3))
    _, tape = net.forward(x)
    analytic = list(net.backward(tape, og).arrays())
    assert max_rel_error(analytic, fd_gradients(net, x, og)) < 1e-4


@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_input_gradient(act):
    rng = np.random.default_rng(3)
    net = Mlp([3, 6, 2], [act, "identity"], rng=rng)
    x = rng.normal(size=3)
    og = rng.normal(size=2)
    _, tape = net.forward(x)
    gi = net.input_grad(tape, og)
    h = 1e-6
    num = np.array([((net(x + h * e) - net(x - h * e)) * og).sum() / (2 * h) for e in np.eye(3)])
    assert np.allclose(gi, num, rtol=1e-5, atol=1e-8)


def test_adam_zero_gradient_keeps_parameters():
    net = Mlp([3, 2], rng=np.random.default_rng(0))
    before = net.checksum()
    opt = OptimizerState.for_net(net, lr=0.1)
    adam_step(net, Gradients([np.zeros((3, 2))], [np.zeros(2)]), opt)
    assert net.checksum() == before
    assert opt.step == 1


@pytest.mark.parametrize("g", [3.7, -0.02, 1e3])
def test_adam_first_step_is_lr_times_sign(g):
    net = Mlp([1, 1], ["identity"])
    net.weights[0][...] = 0.5
    opt = OptimizerState.for_net(net, lr=0.01)
    adam_step(net, Gradients([np.full((1, 1), g)], [np.zeros(1)]), opt)
    assert net.weights[0][0, 0] - 0.5 == pytest.approx(-0.01 * np.sign(g), rel=1e-6)


def test_adam_minimizes_quadratic():
    net = Mlp([1, 1], ["identity"])
    net.weights[0][...] = 1.0
    opt = OptimizerState.for_net(net, lr=0.1)
    for _ in range(100):
        w = net.weights[0][0, 0]
        adam_step(net, Gradients([np.full((1, 1), 2 * w)], [np.zeros(1)]), opt)
    assert abs(net.weights[0][0, 0]) < 0.1


def test_adam_rejects_nan():
    net = Mlp([1, 1])
    opt = OptimizerState.for_net(net)
    with pytest.raises(FloatingPointError):
        adam_step(net, Gradients([np.full((1, 1), np.nan)], [np.zeros(1)]), opt)


def test_seeded_init_is_reproducible():
    a = Mlp([5, 64, 64, 3], rng=np.random.default_rng(42))
    b = Mlp([5, 64, 64, 3], rng=np.random.default_rng(42))
    assert a.checksum() == b.checksum()
    limit = np.sqrt(6 / (5 + 64))
    assert np.abs(a.weights[0]).max() <= limit
    assert not any(b_.any() for b_ in a.biases)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    net = Mlp([3, 4, 2], rng=rng)
    opt = OptimizerState.for_net(net, lr=0.05)
    _, tape = net.forward(rng.normal(size=(4, 3)))
    adam_step(net, net.backward(tape, rng.normal(size=(4, 2))), opt)
    save_checkpoint(tmp_path / "checkpoints" / "a.json", net, opt, agent=0)
    net2, opt2, doc = load_checkpoint(tmp_path / "checkpoints" / "a.json")
    assert net2.checksum() == net.checksum()
    assert opt2.step == 1 and doc["agent"] == 0
    assert all(np.array_equal(a, b) for a, b in zip(opt.m, opt2.m))
