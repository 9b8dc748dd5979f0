import numpy as np
import pytest

from ptspinn.autodiff import Jet, value_and_grad, ops
from ptspinn.models import ConfigError, FourierEmbedding, PeriodicEmbedding, PirateNetConfig, apply, forward, init_params

from conftest import central_fd


def _net(**kw):
    base = dict(in_dim=2, width=16, num_blocks=2, periodic=PeriodicEmbedding({1: 2.0}), time_axis=0, time_bounds=(0.0, 1.5))
    base.update(kw)
    return PirateNetConfig(**base)


class TestConfig:
    def test_layout_segments(self):
        net = _net(num_blocks=3)
        names = net.layout().names
        # 4 gate segments, 7 per block, 1 output
        assert len(names) == 4 + 3 * 7 + 1
        assert names[-1] == "out.W"
        assert "block2.alpha" in names

    def test_mlp_has_no_gates(self):
        names = _net(arch="mlp").layout().names
        assert not any(n.startswith("gate") or n.endswith("alpha") for n in names)

    @pytest.mark.parametrize("kw", [{"width": 15}, {"activation": "relu"}, {"arch": "resnet"}, {"width": 0}, {"fourier_scale": -1.0}])
    def test_rejects_bad_settings(self, kw):
        with pytest.raises(ConfigError):
            _net(**kw)

    def test_periodic_needs_positive_period(self):
        with pytest.raises(ConfigError):
            PeriodicEmbedding({0: 0.0})

    def test_fourier_draw_is_seeded(self):
        a = FourierEmbedding.draw(8, 3, 2.0, seed=4)
        b = FourierEmbedding.draw(8, 3, 2.0, seed=4)
        c = FourierEmbedding.draw(8, 3, 2.0, seed=5)
        np.testing.assert_array_equal(a.matrix, b.matrix)
        assert not np.array_equal(a.matrix, c.matrix)


class TestInit:
    def test_gates_start_closed(self):
        theta = init_params(_net(), 0)
        assert theta.segment_array("block0.alpha")[0] == 0.0
        assert not theta.segment_array("gate_u.b").any()

    def test_glorot_bounds(self):
        theta = init_params(_net(width=32), 1)
        w = theta.segment_array("block1.W2")
        assert np.abs(w).max() <= np.sqrt(6.0 / 64)
        assert np.abs(w).max() > 0.8 * np.sqrt(6.0 / 64)

    def test_identity_at_init(self):
        """With every skip coefficient 0 the output is W_out applied to the embedding."""
        net = _net()
        theta = init_params(net, 2)
        pts = np.random.default_rng(0).uniform(0, 1, (10, 2))
        emb = net.fourier(np.column_stack([pts[:, 0] / 1.5, np.cos(np.pi * pts[:, 1]), np.sin(np.pi * pts[:, 1])]))
        np.testing.assert_allclose(apply(net, theta, pts)[:, 0], emb @ theta.segment_array("out.W")[:, 0], rtol=1e-12)


class TestForward:
    def test_periodicity(self):
        net = _net()
        theta = init_params(net, 0)
        theta = theta.with_values(theta.numpy() + 0.1)
        pts = np.array([[0.3, -0.4], [0.9, 0.2]])
        shifted = pts + np.array([0.0, 2.0])
        np.testing.assert_allclose(apply(net, theta, pts), apply(net, theta, shifted), atol=1e-13)

    @pytest.mark.parametrize("activation", ["tanh", "swish"])
    @pytest.mark.parametrize("arch", ["pirate", "mlp"])
    def test_input_derivatives_match_fd(self, activation, arch):
        net = _net(activation=activation, arch=arch)
        theta = init_params(net, 1)
        theta = theta.with_values(theta.numpy() + 0.05)
        t0, x0 = 0.37, 0.21
        for order in (1, 2, 4):
            (out,) = forward(net, theta, (Jet.constant(np.array([t0]), order), Jet.seed(np.array([x0]), order)))
            d = [float(np.asarray(v)[0]) for v in out.derivatives()]
            f = lambda x: apply(net, theta, np.array([[t0, x]]))[0, 0]  # noqa: E731
            h = 1e-3
            fd2 = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h**2
            np.testing.assert_allclose(d[0], f(x0), rtol=1e-13)
            np.testing.assert_allclose(d[1], (f(x0 + 1e-6) - f(x0 - 1e-6)) / 2e-6, rtol=1e-6)
            if order >= 2:
                np.testing.assert_allclose(d[2], fd2, rtol=1e-4, atol=1e-6)

    def test_fast_path_equals_generic(self):
        """Order-1 tanh jets take the fused path, order-2 jets the generic one."""
        net = _net()
        theta = init_params(net, 3)
        theta = theta.with_values(theta.numpy() + 0.02)
        pts = np.random.default_rng(1).uniform(0, 1, (6, 2))
        seeds = (Jet([pts[:, 0][None], np.ones((1, 6))]), Jet([pts[:, 1][None], np.zeros((1, 6))]))
        (fast,) = forward(net, theta, seeds)
        # order-2 jets go through the generic path; their first two coefficients must agree
        seeds2 = tuple(Jet(list(s.coeffs) + [np.zeros((1, 6))]) for s in seeds)
        (slow,) = forward(net, theta, seeds2)
        np.testing.assert_allclose(fast.coeffs[0], slow.coeffs[0], rtol=1e-13)
        np.testing.assert_allclose(fast.coeffs[1], slow.coeffs[1], rtol=1e-12, atol=1e-14)

    def test_parameter_gradient_through_network(self):
        net = _net(width=8)
        theta = init_params(net, 0)
        theta = theta.with_values(theta.numpy() + 0.03)
        pts = np.random.default_rng(2).uniform(0, 1, (5, 2))

        def loss(p):
            (o,) = forward(net, p, tuple(pts[:, a] for a in range(2)))
            return ops.sum(o.value * o.value)

        _, g = value_and_grad(loss, theta)
        f = lambda v: float(np.sum(apply(net, theta.with_values(v), pts) ** 2))  # noqa: E731
        np.testing.assert_allclose(g.numpy(), central_fd(f, theta.numpy()), rtol=1e-6, atol=1e-9)

    def test_multiple_outputs(self):
        net = PirateNetConfig(in_dim=2, out_dim=3, width=8)
        out = apply(net, init_params(net, 0), np.zeros((4, 2)))
        assert out.shape == (4, 3)

    def test_wrong_coordinate_count(self):
        net = _net()
        with pytest.raises(ConfigError):
            forward(net, init_params(net, 0), (np.zeros(3),))
