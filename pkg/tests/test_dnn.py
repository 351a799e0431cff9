import math

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinncert import dnn
from oracles import fd_gradient, fd_hessian, numpy_forward, rel_err


def tanh_unit_net():
    # realizes f(x) = tanh(x1): one hidden unit, identity-ish wiring
    params = ((jnp.array([[1.0, 0.0]]), jnp.array([0.0])),
              (jnp.array([[1.0]]), jnp.array([0.0])))
    return dnn.Network(arch=(2, 1, 1), params=params)


class TestInit:
    def test_deterministic_for_seed(self):
        a = dnn.init_network([2, 8, 1], seed=7)
        b = dnn.init_network([2, 8, 1], seed=7)
        for (wa, ba), (wb, bb) in zip(a.params, b.params):
            assert np.array_equal(np.asarray(wa), np.asarray(wb))
            assert np.array_equal(np.asarray(ba), np.asarray(bb))

    def test_zero_bound_collapses_parameters(self):
        net = dnn.init_network([2, 8, 1], seed=3, bound=0.0)
        assert dnn.forward(net, [0.3, -0.7]) == pytest.approx(0.0)
        assert dnn.params_pack(net).max() == 0.0

    def test_clipping_contract(self):
        bound = dnn.WeightBound(0.1)
        net = dnn.init_network([2, 32, 32, 1], seed=3, bound=bound)
        assert np.abs(dnn.params_pack(net)).max() <= bound.b

    def test_bad_arch_rejected(self):
        with pytest.raises(ValueError):
            dnn.init_network([2])
        with pytest.raises(ValueError):
            dnn.init_network([2, 0, 1])
        with pytest.raises(ValueError):
            dnn.init_network([5, 8, 1])  # input dim > 3

    def test_smooth_activation_required(self):
        with pytest.raises(ValueError, match="smooth"):
            dnn.init_network([2, 8, 1], activation="relu")


class TestForward:
    def test_zero_network(self):
        net = dnn.init_network([2, 8, 1], seed=0, bound=0.0)
        assert dnn.forward(net, [1.3, 2.4])[0] == 0.0

    def test_single_tanh_unit(self):
        net = tanh_unit_net()
        value = dnn.forward(net, [0.5, 0.0])[0]
        assert value == pytest.approx(math.tanh(0.5), abs=1e-12)

    def test_matches_straight_line_numpy(self):
        net = dnn.init_network([2, 16, 8, 1], seed=11)
        x = np.array([0.37, -0.21])
        assert rel_err(dnn.forward(net, x), numpy_forward(net, x)) < 1e-14

    def test_dimension_mismatch(self):
        net = dnn.init_network([2, 8, 1], seed=0)
        with pytest.raises(ValueError, match="shape"):
            dnn.forward(net, [1.0, 2.0, 3.0])


class TestDerivatives:
    def test_tanh_unit_gradient(self):
        net = tanh_unit_net()
        grad = dnn.grad_x(net, [0.5, 0.0])[0]
        expected = 1.0 - math.tanh(0.5) ** 2
        assert grad[0] == pytest.approx(expected, abs=1e-12)
        assert grad[1] == 0.0

    def test_laplacian_is_hessian_trace(self):
        net = dnn.init_network([3, 16, 2], seed=5)
        x = np.array([0.2, -0.4, 0.9])
        for out in range(2):
            hess = dnn.hessian_x(net, x, output=out)
            assert dnn.laplacian_x(net, x, output=out) == pytest.approx(
                np.trace(hess), abs=0.0)

    @pytest.mark.parametrize("arch", [[2, 16, 1], [2, 32, 32, 1], [3, 32, 3]])
    def test_matches_finite_differences(self, arch):
        rng = np.random.default_rng(1234)
        net = dnn.init_network(arch, seed=2)
        for _ in range(8):
            x = rng.uniform(-1, 1, arch[0])
            for out in range(arch[-1]):
                f = lambda p: numpy_forward(net, p)[out]
                assert rel_err(dnn.grad_x(net, x)[out], fd_gradient(f, x)) < 1e-6
                assert rel_err(dnn.hessian_x(net, x, out), fd_hessian(f, x)) < 1e-6


class TestParamGrad:
    def test_constant_loss_gives_zero(self):
        net = dnn.init_network([2, 8, 1], seed=0)
        grad = dnn.param_grad(net, lambda n: jnp.asarray(4.2))
        assert np.all(grad == 0.0)

    def test_square_of_forward_matches_fd(self):
        net = dnn.init_network([2, 8, 1], seed=4)
        x0 = jnp.array([0.3, 0.6])
        loss = lambda n: dnn.apply_params(n.params, x0, n.activation)[0] ** 2
        grad = dnn.param_grad(net, loss)
        theta = dnn.params_pack(net)

        def loss_at(vec):
            m = dnn.params_unpack(net, vec)
            return float(numpy_forward(m, np.asarray(x0))[0] ** 2)

        fd = np.array([
            (loss_at(theta + h_vec) - loss_at(theta - h_vec)) / 2e-5
            for h_vec in np.eye(theta.size) * 1e-5
        ])
        assert rel_err(grad, fd, floor=1e-6) < 1e-5

    def test_pack_unpack_roundtrip(self):
        net = dnn.init_network([2, 16, 8, 1], seed=9)
        vec = dnn.params_pack(net)
        again = dnn.params_pack(dnn.params_unpack(net, vec))
        assert np.array_equal(vec, again)

    def test_unpack_size_mismatch(self):
        net = dnn.init_network([2, 8, 1], seed=0)
        with pytest.raises(ValueError):
            dnn.params_unpack(net, np.zeros(3))


class TestProjection:
    def test_inside_box_unchanged(self):
        net = dnn.init_network([2, 8, 1], seed=1, bound=5.0)
        projected = dnn.project_params(net)
        assert np.array_equal(dnn.params_pack(net), dnn.params_pack(projected))

    def test_weight_clipped_to_box(self):
        net = dnn.init_network([2, 4, 1], seed=0, bound=1.0)
        params = list(net.params)
        w, b = params[0]
        params[0] = (w.at[0, 0].set(2.0), b)
        blown = dnn.Network(arch=net.arch, params=tuple(params), bound=net.bound)
        clipped = dnn.project_params(blown)
        assert np.asarray(clipped.params[0][0])[0, 0] == 1.0

    def test_hidden_bias_untouched(self):
        net = dnn.init_network([2, 4, 1], seed=0, bound=1.0)
        params = list(net.params)
        w, b = params[0]
        params[0] = (w, b.at[1].set(10.0))  # hidden bias far outside the box
        blown = dnn.Network(arch=net.arch, params=tuple(params), bound=net.bound)
        clipped = dnn.project_params(blown)
        assert np.asarray(clipped.params[0][1])[1] == 10.0
        # but the final bias is clipped
        params = list(net.params)
        w, b = params[-1]
        params[-1] = (w, b.at[0].set(10.0))
        blown = dnn.Network(arch=net.arch, params=tuple(params), bound=net.bound)
        assert np.asarray(dnn.project_params(blown).params[-1][1])[0] == 1.0


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = dnn.init_network([2, 16, 1], seed=3, bound=2.5, activation="sigmoid")
        path = tmp_path / "net.json"
        dnn.save_checkpoint(net, path)
        loaded = dnn.load_checkpoint(path)
        assert loaded.arch == net.arch
        assert loaded.activation == net.activation
        assert loaded.bound == net.bound
        assert loaded.seed == net.seed
        assert np.array_equal(dnn.params_pack(loaded), dnn.params_pack(net))

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError, match="checkpoint"):
            dnn.load_checkpoint(path)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1),
       x1=st.floats(-2, 2), x2=st.floats(-2, 2))
def test_forward_matches_numpy_property(seed, x1, x2):
    net = dnn.init_network([2, 8, 4, 1], seed=seed)
    x = np.array([x1, x2])
    assert rel_err(dnn.forward(net, x), numpy_forward(net, x), floor=1e-12) < 1e-12
