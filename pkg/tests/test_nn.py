import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prbsim.rl.nn import Adam, PolicyNet, ShapeMismatch, gaussian_entropy, gaussian_log_prob


def logp_and_partials(net, obs, actions):
    mean, log_std, value, cache = net.forward(obs)
    logp = gaussian_log_prob(actions, mean, log_std)
    z = (actions - mean) * np.exp(-log_std)
    d_mean = z * np.exp(-log_std)
    d_log_std = (z * z - 1.0).sum(axis=0)
    return float(logp.sum()), cache, d_mean, d_log_std, value


def finite_difference(net, fn, h=1e-6):
    flat = net.get_flat()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        net.set_flat(up)
        f_up = fn()
        net.set_flat(dn)
        f_dn = fn()
        grad[i] = (f_up - f_dn) / (2 * h)
    net.set_flat(flat)
    return grad


def flat_grads(net, grads):
    return np.concatenate([grads[k].ravel() for k in PolicyNet.PARAM_NAMES])


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


class TestForward:
    def test_zero_weights(self):
        net = PolicyNet(5, 3, hidden=7, zero=True)
        mean, log_std, value, _ = net.forward(np.ones(5))
        np.testing.assert_array_equal(mean, 0.0)
        assert value == 0.0
        np.testing.assert_array_equal(log_std, 0.0)

    def test_batch_matches_single(self, rng):
        net = PolicyNet(6, 2, hidden=9, rng=rng)
        obs = rng.normal(size=(5, 6))
        mean, _, value, _ = net.forward(obs)
        for i in range(5):
            m, _, v, _ = net.forward(obs[i])
            np.testing.assert_allclose(mean[i], m, rtol=1e-14, atol=1e-15)
            np.testing.assert_allclose(value[i], v, rtol=1e-14, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            PolicyNet(4, 2, hidden=3).forward(np.zeros(5))

    def test_mean_bias(self):
        net = PolicyNet(3, 2, hidden=4, mean_bias=[1.0, -8.0])
        np.testing.assert_allclose(net.forward(np.zeros(3))[0], [1.0, -8.0])

    def test_deterministic_act_is_mean(self, rng):
        net = PolicyNet(3, 2, hidden=4, rng=rng)
        a, _, _ = net.act(np.ones(3), rng, deterministic=True)
        np.testing.assert_array_equal(a, net.forward(np.ones(3))[0])

    def test_sampling_reproducible(self):
        net = PolicyNet(3, 2, hidden=4)
        a = net.act(np.ones(3), np.random.default_rng(8))[0]
        b = net.act(np.ones(3), np.random.default_rng(8))[0]
        np.testing.assert_array_equal(a, b)


class TestDistribution:
    def test_log_prob_standard_normal(self):
        np.testing.assert_allclose(
            gaussian_log_prob(np.zeros(2), np.zeros(2), np.zeros(2)), -np.log(2 * np.pi), rtol=1e-15
        )

    def test_entropy(self):
        np.testing.assert_allclose(gaussian_entropy(np.array([0.0])), 0.5 * np.log(2 * np.pi * np.e))


class TestGradients:
    @given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3))
    def test_log_prob_gradient(self, seed, batch, act_dim):
        rng = np.random.default_rng(seed)
        net = PolicyNet(4, act_dim, hidden=5, rng=rng, init_log_std=-0.3)
        for k in net.params:
            net.params[k] = net.params[k] + 0.3 * rng.normal(size=net.params[k].shape)
        obs = rng.normal(size=(batch, 4))
        actions = rng.normal(size=(batch, act_dim))
        _, cache, d_mean, d_log_std, _ = logp_and_partials(net, obs, actions)
        analytic = flat_grads(net, net.backward(cache, d_mean, np.zeros(batch), d_log_std))
        numeric = finite_difference(net, lambda: logp_and_partials(net, obs, actions)[0])
        assert rel_err(analytic, numeric) < 1e-4

    def test_value_loss_gradient(self, rng):
        net = PolicyNet(3, 2, hidden=6, rng=rng)
        obs = rng.normal(size=(7, 3))
        target = rng.normal(size=7)

        def loss():
            return 0.5 * np.sum((net.forward(obs)[2] - target) ** 2)

        _, _, value, cache = net.forward(obs)
        analytic = flat_grads(net, net.backward(cache, np.zeros((7, 2)), value - target))
        assert rel_err(analytic, finite_difference(net, loss)) < 1e-4


class TestParams:
    def test_flat_round_trip(self, rng):
        net = PolicyNet(3, 2, hidden=4, rng=rng)
        other = PolicyNet(3, 2, hidden=4, zero=True)
        other.set_flat(net.get_flat())
        assert other.checksum() == net.checksum()

    def test_load_shape_checked(self):
        a, b = PolicyNet(3, 2, hidden=4), PolicyNet(3, 2, hidden=5)
        with pytest.raises(ShapeMismatch):
            a.load_params(b.copy_params())


class TestAdam:
    def test_first_step_is_sign(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        opt = Adam(params, lr=0.1)
        opt.step(params, {"w": np.array([0.5, -4.0, 0.0])})
        np.testing.assert_allclose(params["w"], [0.9, -1.9, 3.0], rtol=1e-7)

    def test_state_round_trip(self):
        params = {"w": np.ones(2)}
        opt = Adam(params, lr=0.01)
        opt.step(params, {"w": np.array([1.0, 2.0])})
        clone = Adam({"w": np.zeros(2)})
        clone.load_state(opt.state())
        assert clone.t == 1 and clone.lr == 0.01
        np.testing.assert_array_equal(clone.m["w"], opt.m["w"])

    def test_minimizes_quadratic(self):
        params = {"w": np.array([5.0, -3.0])}
        opt = Adam(params, lr=0.1)
        for _ in range(500):
            opt.step(params, {"w": 2 * params["w"]})
        np.testing.assert_allclose(params["w"], 0.0, atol=1e-2)
