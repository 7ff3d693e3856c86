"""Tests for the flat-parameter MLP, Adam, and the finite-difference checker."""

import numpy as np
import pytest

from sortline.neural import (Adam, Network, ShapeError, StaleCache, grad_check,
                             load_checkpoint, save_checkpoint)


def quad_loss(y):
    return 0.5 * float(np.sum(y * y)), y


def tiny_net():
    # [2, 2, 1] with hand-set parameters
    net = Network([2, 2, 1])
    w1, w2 = net.weights
    b1, b2 = net.biases
    w1[...] = np.eye(2)
    b1[...] = 0.0
    w2[...] = np.array([[1.0], [1.0]])
    b2[...] = 0.5
    return net


# ----------------------------------------------------------------- forward

def test_forward_hand_computed():
    net = tiny_net()
    out = net.forward(np.array([1.0, -2.0]))
    # relu kills the second unit: 1*1 + 0*1 + 0.5
    assert out.shape == (1,)
    assert out[0] == pytest.approx(1.5)


def test_forward_batch_matches_single():
    rng = np.random.default_rng(3)
    net = Network([3, 5, 2], rng=rng)
    xs = rng.normal(size=(4, 3))
    batch = net.forward(xs)
    singles = np.stack([net.forward(x) for x in xs])
    assert np.allclose(batch, singles)


def test_forward_rejects_wrong_width():
    net = Network([3, 2])
    with pytest.raises(ShapeError):
        net.forward(np.zeros(4))


# ---------------------------------------------------------------- backward

def test_backward_needs_forward_first():
    net = Network([2, 1])
    with pytest.raises(StaleCache):
        net.backward(np.array([1.0]))


def test_backward_rejects_mismatched_dout():
    net = Network([2, 3, 1])
    net.forward(np.zeros(2))
    with pytest.raises(ShapeError):
        net.backward(np.zeros((2, 1)))


def test_relu_blocks_gradient_through_dead_unit():
    net = tiny_net()
    net.forward(np.array([1.0, -2.0]))  # second hidden unit inactive
    grad = net.backward(np.array([1.0]))
    g_w1 = net._views(grad)[0][0]
    assert g_w1[0, 1] == 0.0 and g_w1[1, 1] == 0.0  # dead column
    assert g_w1[0, 0] == 1.0  # live column: x0 * delta


def test_backward_sums_over_batch():
    rng = np.random.default_rng(11)
    net = Network([3, 4, 2], rng=rng)
    xs = rng.normal(size=(3, 3))
    douts = rng.normal(size=(3, 2))
    net.forward(xs)
    batched = net.backward(douts)
    acc = np.zeros_like(batched)
    for x, d in zip(xs, douts):
        net.forward(x)
        acc += net.backward(d)
    assert np.allclose(batched, acc)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(5):
        net = Network([3, 4, 2], rng=rng)
        x = rng.normal(size=3)
        worst = max(worst, grad_check(net, x, quad_loss))
    assert worst < 1e-6


def test_gradient_check_conventions():
    rng = np.random.default_rng(21)
    net = Network([3, 4, 2], rng=rng)
    x = rng.normal(size=3)

    def zero_loss(y):
        return 0.0, np.zeros_like(y)

    assert grad_check(net, x, zero_loss) == 0.0

    def flipped_quad(y):
        return 0.5 * float(np.sum(y * y)), -y  # corrupted backward

    assert grad_check(net, x, flipped_quad) == pytest.approx(2.0, abs=0.1)


def test_gradient_matches_finite_differences_on_batch():
    rng = np.random.default_rng(6)
    net = Network([4, 6, 3], rng=rng)
    xs = rng.normal(size=(5, 4))

    def mean_quad(y):
        n = y.shape[0]
        return 0.5 * float(np.sum(y * y)) / n, y / n

    assert grad_check(net, xs, mean_quad) < 1e-6


# ------------------------------------------------------------- params/init

def test_views_alias_theta():
    net = Network([2, 2])
    net.weights[0][0, 0] = 42.0
    assert 42.0 in net.theta


def test_init_respects_fan_in_limits():
    net = Network([100, 50, 10], rng=np.random.default_rng(0))
    for i, w in enumerate(net.weights):
        limit = np.sqrt(6.0 / net.layer_sizes[i])
        assert np.abs(w).max() <= limit
        assert np.abs(w).max() > 0
    for b in net.biases:
        assert (b == 0).all()


def test_init_is_deterministic_per_seed():
    a = Network([5, 4, 3], rng=np.random.default_rng(77))
    b = Network([5, 4, 3], rng=np.random.default_rng(77))
    assert np.array_equal(a.theta, b.theta)


def test_copy_is_deep():
    net = Network([2, 2], rng=np.random.default_rng(1))
    twin = net.copy()
    net.theta[0] += 1.0
    assert twin.theta[0] != net.theta[0]


def test_single_layer_net_is_affine():
    net = Network([2, 2])
    net.weights[0][...] = [[2.0, 0.0], [0.0, 3.0]]
    net.biases[0][...] = [1.0, -1.0]
    # no hidden layer, so no relu anywhere
    out = net.forward(np.array([-1.0, -1.0]))
    assert list(out) == [-1.0, -4.0]


def test_bad_layer_sizes_rejected():
    with pytest.raises(ShapeError):
        Network([3])
    with pytest.raises(ShapeError):
        Network([3, 0, 2])


# -------------------------------------------------------------------- adam

def test_adam_first_step_closed_form():
    opt = Adam(1, lr=0.1)
    theta = np.zeros(1)
    opt.step(theta, np.array([2.0]))
    # bias-corrected m̂ = g, v̂ = g²  →  Δ = lr·g/(|g| + eps)
    assert theta[0] == pytest.approx(-0.1, abs=1e-8)


def test_adam_matches_reference_loop():
    rng = np.random.default_rng(4)
    n = 7
    opt = Adam(n, lr=0.01)
    theta = rng.normal(size=n)
    ref_theta = theta.copy()
    m = np.zeros(n)
    v = np.zeros(n)
    for t in range(1, 6):
        g = rng.normal(size=n)
        opt.step(theta, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9 ** t)
        v_hat = v / (1 - 0.999 ** t)
        ref_theta -= 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert np.allclose(theta, ref_theta, atol=1e-15)


def test_adam_zero_gradient_is_a_noop():
    opt = Adam(3, lr=0.5)
    theta = np.ones(3)
    opt.step(theta, np.zeros(3))
    assert np.array_equal(theta, np.ones(3))
    assert opt.t == 1


def test_adam_minimizes_quadratic():
    opt = Adam(1, lr=0.05)
    theta = np.zeros(1)
    for _ in range(500):
        opt.step(theta, 2.0 * (theta - 3.0))
    assert abs(theta[0] - 3.0) < 0.05


def test_adam_shape_guard():
    opt = Adam(3, lr=0.1)
    with pytest.raises(ShapeError):
        opt.step(np.zeros(4), np.zeros(4))


# -------------------------------------------------------------- checkpoints

def test_network_dict_round_trip_is_exact():
    net = Network([4, 3, 2], rng=np.random.default_rng(9))
    clone = Network.from_dict(net.to_dict())
    assert np.array_equal(clone.theta, net.theta)
    assert clone.layer_sizes == net.layer_sizes


def test_from_dict_rejects_wrong_parameter_count():
    net = Network([4, 3, 2])
    doc = net.to_dict()
    doc["theta"] = doc["theta"][:-1]
    with pytest.raises(ShapeError):
        Network.from_dict(doc)


def test_checkpoint_file_round_trip_is_exact(tmp_path):
    net = Network([3, 3, 1], rng=np.random.default_rng(2))
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, {"net": net.to_dict(), "extra": 5})
    doc = load_checkpoint(path)
    assert doc["extra"] == 5
    clone = Network.from_dict(doc["net"])
    assert np.array_equal(clone.theta, net.theta)
