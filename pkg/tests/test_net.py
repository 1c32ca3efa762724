"""Networks: initialization, forward passes, jets, parameter vector, IO.

Jet oracles come in two kinds: an exact one (a single affine layer with
hand-set weights, where every derivative is known in closed form) and
central finite differences on random nets.
"""

import numpy as np
import pytest

import mdapnn.autodiff as ad
from mdapnn.errors import ContractViolation, NumericalError
from mdapnn.net import (Jet, ParamVector, forward, forward_jet,
                        forward_values, init_network, load_checkpoint,
                        loss_gradient, save_checkpoint)

RNG = np.random.default_rng(7041)


def small_net(seed=0, sizes=(3, 8, 8, 1), act="identity",
              labels=("t", "x", "mu")):
    return init_network(list(sizes), labels, act, seed=seed)


class TestInit:
    def test_same_seed_same_weights(self):
        a, b = small_net(seed=5), small_net(seed=5)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa.value, wb.value)

    def test_different_seed_differs(self):
        a, b = small_net(seed=5), small_net(seed=6)
        assert not np.array_equal(a.weights[0].value, b.weights[0].value)

    def test_glorot_bound(self):
        net = small_net(seed=3, sizes=(3, 40, 1))
        bound = np.sqrt(6.0 / (3 + 40))
        assert np.max(np.abs(net.weights[0].value)) <= bound
        assert np.all(net.biases[0].value == 0.0)

    def test_bad_arguments(self):
        with pytest.raises(ContractViolation):
            init_network([3], ["t", "x", "mu"])
        with pytest.raises(ContractViolation):
            init_network([3, 4, 1], ["t", "x"])
        with pytest.raises(ContractViolation):
            init_network([2, 4, 1], ["t", "x"], output_activation="relu")

    def test_input_shape_checked(self):
        net = small_net()
        with pytest.raises(ContractViolation):
            forward(net, np.zeros((5, 2)))
        with pytest.raises(ContractViolation):
            forward(net, np.array([[0.0, np.nan, 0.0]]))


class TestForward:
    def test_forward_values_matches_tape(self):
        for act in ("identity", "softplus", "negexp"):
            net = small_net(seed=11, act=act)
            x = RNG.uniform(-1, 1, size=(17, 3))
            assert np.allclose(forward(net, x).value, forward_values(net, x),
                               rtol=0, atol=0)

    def test_positive_activations(self):
        x = RNG.uniform(-3, 3, size=(50, 3))
        for act in ("softplus", "negexp"):
            net = small_net(seed=2, act=act)
            assert np.all(forward_values(net, x) > 0.0)

    def test_softplus_at_zero_is_log_two(self):
        # zero-weight affine net: output softplus(0) exactly
        net = init_network([2, 1], ("t", "x"), "softplus", seed=0)
        net.weights[0].value[:] = 0.0
        out = forward_values(net, np.array([[0.3, -0.8]]))
        assert out[0, 0] == pytest.approx(np.log(2.0), rel=1e-15)


class TestJetExact:
    def make_affine(self, w_t, w_x, bias):
        net = init_network([2, 1], ("t", "x"), "identity", seed=0)
        net.weights[0].value[:] = [[w_t, w_x]]
        net.biases[0].value[:] = bias
        return net

    def test_linear_function_jet(self):
        # u = 2t + 3x + 0.5: d_t = 2, d_x = 3, d_xx = 0 everywhere
        net = self.make_affine(2.0, 3.0, 0.5)
        pts = RNG.uniform(-2, 2, size=(9, 2))
        jet = forward_jet(net, pts, channels=("d_t", "d_x", "d_xx"))
        assert np.allclose(jet.value.value.ravel(),
                           2 * pts[:, 0] + 3 * pts[:, 1] + 0.5)
        assert np.allclose(jet.d_t.value, 2.0)
        assert np.allclose(jet.d_x.value, 3.0)
        assert np.allclose(jet.d_xx.value, 0.0)

    def test_negexp_affine_jet(self):
        # u = exp(-(2t + 3x)): d_x = -3u, d_xx = 9u
        net = self.make_affine(2.0, 3.0, 0.0)
        net.output_activation = "negexp"
        pts = RNG.uniform(-0.5, 0.5, size=(6, 2))
        jet = forward_jet(net, pts, channels=("d_x", "d_xx"))
        u = np.exp(-(2 * pts[:, 0] + 3 * pts[:, 1]))[:, None]
        assert np.allclose(jet.value.value, u)
        assert np.allclose(jet.d_x.value, -3 * u)
        assert np.allclose(jet.d_xx.value, 9 * u)

    def test_channel_validation(self):
        net = small_net()
        with pytest.raises(ContractViolation):
            forward_jet(net, np.zeros((2, 3)), channels=("d_q",))
        net_x = init_network([1, 4, 1], ("x",), seed=0)
        with pytest.raises(ContractViolation):
            forward_jet(net_x, np.zeros((2, 1)), channels=("d_t",))


def fd_jet(net, pts, coord, h=1e-5):
    """Central differences of the network value along one input column."""
    e = np.zeros(pts.shape[1])
    e[coord] = 1.0
    up = forward_values(net, pts + h * e)
    dn = forward_values(net, pts - h * e)
    mid = forward_values(net, pts)
    first = (up - dn) / (2 * h)
    second = (up - 2 * mid + dn) / (h * h)
    return first, second


class TestJetAgainstFiniteDifferences:
    @pytest.mark.parametrize("act", ["identity", "softplus", "negexp"])
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_first_and_second_derivatives(self, act, seed):
        net = init_network([3, 10, 10, 1], ("t", "x", "mu"), act, seed=seed)
        pts = np.random.default_rng(seed).uniform(-1, 1, size=(25, 3))
        jet = forward_jet(net, pts, channels=("d_t", "d_x", "d_xx"))
        dt_fd, _ = fd_jet(net, pts, 0)
        dx_fd, dxx_fd = fd_jet(net, pts, 1)
        scale = np.max(np.abs(dt_fd)) + 1.0
        assert np.max(np.abs(jet.d_t.value - dt_fd)) / scale < 1e-6
        assert np.max(np.abs(jet.d_x.value - dx_fd)) / scale < 1e-6
        assert np.max(np.abs(jet.d_xx.value - dxx_fd)) / scale < 1e-4

    def test_jet_value_channel_equals_forward(self):
        net = small_net(seed=9, act="softplus")
        pts = RNG.uniform(-1, 1, size=(11, 3))
        jet = forward_jet(net, pts, channels=("d_x",))
        assert np.allclose(jet.value.value, forward_values(net, pts))


class TestParamVector:
    def test_flat_vector_is_a_view(self):
        nets = {"g": small_net(seed=1), "rho": init_network(
            [2, 6, 1], ("t", "x"), "softplus", seed=2)}
        pv = ParamVector(nets)
        before = forward_values(nets["g"], np.zeros((1, 3)))
        pv.data[:] = pv.data * 0.5
        after = forward_values(nets["g"], np.zeros((1, 3)))
        assert not np.allclose(before, after)

    def test_pack_unpack_roundtrip(self):
        pv = ParamVector({"g": small_net(seed=4)})
        arrays = pv.unpack()
        theta = pv.pack(arrays)
        assert np.array_equal(theta, pv.data)
        with pytest.raises(ContractViolation):
            pv.pack(arrays[:-1])

    def test_set_theta_shape_check(self):
        pv = ParamVector({"g": small_net(seed=4)})
        with pytest.raises(ContractViolation):
            pv.set_theta(np.zeros(pv.size + 1))

    def test_loss_gradient_finite_difference(self):
        nets = {"g": small_net(seed=8)}
        pv = ParamVector(nets)
        x = RNG.uniform(-1, 1, size=(20, 3))

        def loss_eval():
            return ad.tensor_mean(forward(nets["g"], x) ** 2)

        val, grad = loss_gradient(pv, loss_eval)
        rng = np.random.default_rng(0)
        d = rng.standard_normal(pv.size)
        d /= np.linalg.norm(d)
        h = 1e-6
        theta0 = pv.copy_theta()
        pv.set_theta(theta0 + h * d)
        up = float(ad.tensor_mean(forward(nets["g"], x) ** 2).value)
        pv.set_theta(theta0 - h * d)
        dn = float(ad.tensor_mean(forward(nets["g"], x) ** 2).value)
        pv.set_theta(theta0)
        assert np.dot(grad, d) == pytest.approx((up - dn) / (2 * h), rel=1e-6)

    def test_loss_gradient_rejects_nonfinite(self):
        nets = {"g": small_net(seed=8)}
        pv = ParamVector(nets)

        def bad_eval():
            return ad.Tensor(np.array(np.inf))

        with pytest.raises(NumericalError):
            loss_gradient(pv, bad_eval)


class TestCheckpointIO:
    def test_roundtrip_exact(self, tmp_path):
        nets = {"g": small_net(seed=13), "rho": init_network(
            [2, 5, 1], ("t", "x"), "negexp", seed=14)}
        pv = ParamVector(nets)
        m = RNG.standard_normal(pv.size)
        v = np.abs(RNG.standard_normal(pv.size))
        path = tmp_path / "ck.npz"
        save_checkpoint(path, pv, state={"m": m, "v": v, "step": 321},
                        meta={"note": "unit"})
        read = load_checkpoint(path)
        assert np.array_equal(read["theta"], pv.data)
        assert np.array_equal(read["m"], m)
        assert np.array_equal(read["v"], v)
        assert read["step"] == 321
        assert read["meta"]["note"] == "unit"

    def test_restore_checks_architecture(self, tmp_path):
        pv = ParamVector({"g": small_net(seed=13)})
        path = tmp_path / "ck.npz"
        save_checkpoint(path, pv)
        other = ParamVector({"g": small_net(seed=0, sizes=(3, 9, 1))})
        with pytest.raises(ContractViolation):
            load_checkpoint(path, other)

    def test_restore_applies_theta(self, tmp_path):
        pv = ParamVector({"g": small_net(seed=13)})
        theta0 = pv.copy_theta()
        path = tmp_path / "ck.npz"
        save_checkpoint(path, pv)
        pv.data[:] = 0.0
        load_checkpoint(path, pv)
        assert np.array_equal(pv.data, theta0)
