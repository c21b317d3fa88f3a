import numpy as np
import pytest

from bellhedge.nn import MLP, Adam, Approximator, Momentum, Normalizer, buehler_zero_init, clip_grads, flatten_grads, forward
from bellhedge.rng import keyed_rng

H = 1e-5


def _fd_check(appr, x, c):
    """Max relative error of analytic vs central-difference gradients of sum(c * out)."""
    out, state = appr.forward_cache(x)
    grads, _ = appr.backward(state, c)
    g = flatten_grads(grads)
    theta = appr.flat()
    fd = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += H
        tm[i] -= H
        appr.set_flat(tp)
        fp = np.sum(c * appr.forward_cache(x)[0])
        appr.set_flat(tm)
        fm = np.sum(c * appr.forward_cache(x)[0])
        fd[i] = (fp - fm) / (2 * H)
    appr.set_flat(theta)
    return np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))


@pytest.mark.parametrize("i", range(20))
def test_gradients_match_finite_differences(i):
    rng = np.random.default_rng(100 + i)
    act = ["softplus", "tanh", "relu"][i % 3]
    d_in, d_out = int(rng.integers(2, 5)), int(rng.integers(1, 3))
    sizes = [d_in, int(rng.integers(3, 7)), int(rng.integers(3, 7)), d_out]
    net = MLP.random(sizes, act, rng)
    assert net.n_params <= 200
    norm = Normalizer(rng.normal(size=d_in), rng.uniform(0.5, 2.0, d_in))
    frozen = MLP.random(sizes, act, rng) if i % 2 else None
    appr = Approximator(net, frozen, norm, bound=2.0 if i % 4 == 1 else None)
    x = rng.normal(size=(7, d_in))
    c = rng.normal(size=(7, d_out))
    assert _fd_check(appr, x, c) < 1e-5


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    appr = buehler_zero_init([3, 5, 1], 4, "softplus", Normalizer(np.zeros(3), np.array([1.0, 2.0, 0.5])), bound=1.5)
    appr.set_flat(appr.flat() + 0.3 * rng.normal(size=appr.n_params))
    x = rng.normal(size=(4, 3))
    _, state = appr.forward_cache(x)
    _, gin = appr.backward(state, np.ones((4, 1)), need_input=True)
    for j in range(3):
        e = np.zeros(3)
        e[j] = H
        fd = (appr.forward_cache(x + e)[0] - appr.forward_cache(x - e)[0])[:, 0] / (2 * H)
        assert np.allclose(gin[:, j], fd, rtol=1e-6, atol=1e-9)


def test_buehler_zero_is_exactly_zero():
    appr = buehler_zero_init([6, 32, 32, 2], 11)
    x = keyed_rng(0, "x").normal(size=(100, 6)) * 10
    assert np.all(forward(appr, x) == 0.0)


def test_buehler_zero_gradients_are_the_random_nets():
    appr = buehler_zero_init([4, 8, 1], 2)
    x = np.random.default_rng(0).normal(size=(5, 4))
    _, state = appr.forward_cache(x)
    g, _ = appr.backward(state, np.ones((5, 1)))
    plain = appr.net.copy()
    _, cache = plain.forward_cache(x)
    g0, _ = plain.backward(cache, np.ones((5, 1)))
    assert np.array_equal(flatten_grads(g), flatten_grads(g0))


def test_one_step_leaves_zero():
    appr = buehler_zero_init([3, 8, 1], 5)
    x = np.random.default_rng(1).normal(size=(10, 3))
    _, state = appr.forward_cache(x)
    grads, _ = appr.backward(state, -np.ones((10, 1)))  # d/dout of the loss -sum(out)
    Momentum(0.1).step(appr, grads, sign=-1.0)
    assert np.all(appr(x) != 0.0)


def test_zero_weight_network_is_bias_constant():
    net = MLP([2, 3, 1], "tanh")
    net.params = [(np.zeros((2, 3)), np.array([0.5, -1.0, 2.0])), (np.zeros((3, 1)), np.array([0.25]))]
    out = net(np.random.default_rng(0).normal(size=(4, 2)))
    assert np.all(out == 0.25)
    net.params[1] = (np.ones((3, 1)), np.array([0.25]))
    assert np.allclose(net(np.zeros(2)), 0.25 + np.tanh(0.5) + np.tanh(-1.0) + np.tanh(2.0))


def test_errors():
    with pytest.raises(ValueError):
        MLP([3], "tanh")
    with pytest.raises(ValueError):
        MLP([3, 1], "sigmoid")
    appr = buehler_zero_init([3, 4, 1], 0)
    with pytest.raises(ValueError):
        appr(np.zeros(4))
    with pytest.raises(ValueError):
        appr.set_flat(np.zeros(3))


def test_bounded_output_and_roundtrip():
    appr = buehler_zero_init([2, 6, 1], 7, "tanh", bound=0.8)
    appr.set_flat(appr.flat() * 5.0 + 1.0)
    x = np.random.default_rng(2).normal(size=(50, 2)) * 100
    assert np.all(np.abs(appr(x)) <= 0.8)
    back = Approximator.from_dict(appr.to_dict())
    assert np.array_equal(back(x), appr(x))


def test_adam_first_step_and_clip():
    appr = buehler_zero_init([2, 3, 1], 0)
    theta = appr.flat()
    grads = [(np.full(W.shape, 2.0), np.full(b.shape, -0.5)) for W, b in appr.net.params]
    Adam(0.01).step(appr, grads, sign=1.0)
    step = appr.flat() - theta
    assert np.allclose(np.abs(step), 0.01, rtol=1e-6)
    assert np.array_equal(np.sign(step), np.sign(flatten_grads(grads)))
    clipped = clip_grads(grads, 1.0)
    assert np.linalg.norm(flatten_grads(clipped)) == pytest.approx(1.0)
    assert clip_grads(grads, None) is grads
    assert clip_grads(grads, 1e6) is grads


def test_momentum_first_step_is_plain_gradient():
    appr = buehler_zero_init([2, 3, 1], 0)
    theta = appr.flat()
    grads = [(np.ones(W.shape), np.ones(b.shape)) for W, b in appr.net.params]
    Momentum(0.1, 0.9).step(appr, grads, sign=-1.0)
    assert np.allclose(appr.flat(), theta - 0.1)
