import numpy as np
import numpy.testing as npt
import pytest

from trofi import nn
from trofi.errors import ConfigError, DivergenceError, ShapeError


def central_differences(loss_fn, params, h=1e-5):
    """Numeric gradient of loss_fn() w.r.t. every element of every array."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = loss_fn()
            p[idx] = orig - h
            down = loss_fn()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-5):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestInit:
    def test_same_rng_identical(self):
        a = nn.init([3, 8, 2], nn.Rng(7))
        b = nn.init([3, 8, 2], nn.Rng(7))
        for wa, wb in zip(a.weights, b.weights):
            npt.assert_array_equal(wa, wb)

    def test_biases_zero(self):
        m = nn.init([4, 5, 1], nn.Rng(0))
        for b in m.biases:
            npt.assert_array_equal(b, 0.0)

    def test_weight_magnitude_bound(self):
        m = nn.init([10, 20, 3], nn.Rng(1))
        for w, fan_in, fan_out in zip(m.weights, [10, 20], [20, 3]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(w) <= limit)

    def test_too_few_layers(self):
        with pytest.raises(ConfigError):
            nn.init([4], nn.Rng(0))

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            nn.init([2, 2], nn.Rng(0), hidden_activation="selu")


class TestForward:
    def test_zero_net_zero_output(self):
        m = nn.init([3, 4, 2], nn.Rng(0))
        for w in m.weights:
            w[:] = 0.0
        out = nn.forward(m, np.ones((5, 3)))
        npt.assert_array_equal(out, 0.0)

    def test_single_layer_hand_case(self):
        # x @ W + b on a 2x2 case, computed by hand
        m = nn.Mlp([2, 2], [np.array([[1.0, 2.0], [3.0, 4.0]])],
                   [np.array([0.5, -0.5])])
        x = np.array([[1.0, 1.0], [2.0, 0.0]])
        expected = np.array([[4.5, 5.5], [2.5, 3.5]])
        npt.assert_allclose(nn.forward(m, x), expected)

    def test_batch_rows(self):
        m = nn.init([3, 6, 2], nn.Rng(2))
        out = nn.forward(m, np.zeros((7, 3)))
        assert out.shape == (7, 2)

    def test_width_mismatch(self):
        m = nn.init([3, 2], nn.Rng(0))
        with pytest.raises(ShapeError):
            nn.forward(m, np.zeros((1, 4)))

    def test_batch_equals_rowwise(self):
        m = nn.init([4, 8, 3], nn.Rng(3), hidden_activation="tanh")
        x = nn.Rng(4).generator().normal(size=(6, 4))
        batch = nn.forward(m, x)
        rows = np.concatenate([nn.forward(m, x[i:i + 1]) for i in range(6)])
        npt.assert_allclose(batch, rows, atol=1e-12)


class TestBackward:
    @pytest.mark.parametrize("hidden,out_act", [("relu", "identity"),
                                                ("tanh", "identity"),
                                                ("tanh", "tanh")])
    def test_matches_finite_differences(self, hidden, out_act):
        m = nn.init([4, 8, 8, 1], nn.Rng(11), hidden_activation=hidden,
                    output_activation=out_act)
        gen = nn.Rng(12).generator()
        x = gen.normal(size=(5, 4))
        upstream = gen.normal(size=(5, 1))

        grads = nn.backward(m, x, upstream)

        def loss():
            return float((nn.forward(m, x) * upstream).sum())

        numeric = central_differences(loss, m.weights + m.biases)
        analytic = grads.weights + grads.biases
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_input_gradient_matches_fd(self):
        m = nn.init([3, 6, 2], nn.Rng(13), hidden_activation="tanh")
        gen = nn.Rng(14).generator()
        x = gen.normal(size=(4, 3))
        upstream = gen.normal(size=(4, 2))
        grads = nn.backward(m, x, upstream)

        def loss():
            return float((nn.forward(m, x) * upstream).sum())

        numeric = central_differences(loss, [x])
        assert max_rel_error([grads.inputs], numeric) <= 1e-4

    def test_zero_upstream_zero_grads(self):
        m = nn.init([3, 5, 2], nn.Rng(0))
        grads = nn.backward(m, np.ones((2, 3)), np.zeros((2, 2)))
        for g in grads.weights + grads.biases:
            npt.assert_array_equal(g, 0.0)

    def test_linear_layer_weight_grad_is_outer_product(self):
        m = nn.Mlp([2, 2], [np.array([[0.3, -0.2], [0.1, 0.7]])],
                   [np.zeros(2)])
        x = np.array([[1.0, 2.0]])
        up = np.array([[3.0, -1.0]])
        grads = nn.backward(m, x, up)
        npt.assert_allclose(grads.weights[0], x.T @ up)


class TestAdam:
    def test_first_step_is_lr_times_sign(self):
        m = nn.init([2, 2], nn.Rng(5))
        before = [w.copy() for w in m.weights]
        g = nn.Gradients([np.array([[0.5, -2.0], [0.0, 1e-3]])], [np.zeros(2)],
                         None)
        state = nn.adam_init(m, learning_rate=1e-2)
        nn.adam_step(m, g, state)
        # at step 1 the bias-corrected moments reduce to g and g^2, so the
        # update is -lr * g / (|g| + eps) elementwise
        expected = before[0] - 1e-2 * g.weights[0] / (np.abs(g.weights[0]) + 1e-8)
        npt.assert_allclose(m.weights[0], expected, atol=1e-12)

    def test_zero_gradient_keeps_parameters(self):
        m = nn.init([2, 3], nn.Rng(6))
        before = [w.copy() for w in m.weights]
        state = nn.adam_init(m)
        nn.adam_step(m, nn.Gradients([np.zeros((2, 3))], [np.zeros(3)], None), state)
        npt.assert_array_equal(m.weights[0], before[0])
        assert state.step == 1

    def test_deterministic_runs(self):
        def run():
            m = nn.init([3, 4, 1], nn.Rng(7))
            state = nn.adam_init(m)
            gen = nn.Rng(8).generator()
            x = gen.normal(size=(10, 3))
            for _ in range(20):
                out = nn.forward(m, x)
                grads = nn.backward(m, x, 2 * out / len(out))
                nn.adam_step(m, grads, state)
            return m

        a, b = run(), run()
        for wa, wb in zip(a.weights, b.weights):
            npt.assert_array_equal(wa, wb)

    def test_nonfinite_gradient_raises(self):
        m = nn.init([2, 2], nn.Rng(0))
        state = nn.adam_init(m)
        bad = nn.Gradients([np.full((2, 2), np.nan)], [np.zeros(2)], None)
        with pytest.raises(DivergenceError):
            nn.adam_step(m, bad, state)


class TestSoftUpdate:
    def test_tau_one_copies(self):
        t, o = nn.init([2, 3], nn.Rng(1)), nn.init([2, 3], nn.Rng(2))
        nn.soft_update(t, o, 1.0)
        npt.assert_array_equal(t.weights[0], o.weights[0])

    def test_tau_zero_keeps_target(self):
        t, o = nn.init([2, 3], nn.Rng(1)), nn.init([2, 3], nn.Rng(2))
        before = t.weights[0].copy()
        nn.soft_update(t, o, 0.0)
        npt.assert_array_equal(t.weights[0], before)

    def test_halfway_blend(self):
        t, o = nn.init([2, 2], nn.Rng(1)), nn.init([2, 2], nn.Rng(2))
        t.weights[0][:] = 0.0
        o.weights[0][:] = 2.0
        nn.soft_update(t, o, 0.5)
        npt.assert_allclose(t.weights[0], 1.0)

    def test_architecture_mismatch(self):
        with pytest.raises(ShapeError):
            nn.soft_update(nn.init([2, 3], nn.Rng(0)), nn.init([2, 4], nn.Rng(0)), 0.5)


class TestCheckpoint:
    def test_round_trip_lossless(self, tmp_path):
        m = nn.init([3, 7, 2], nn.Rng(9), hidden_activation="tanh",
                    output_activation="tanh")
        path = tmp_path / "net.json"
        nn.save_mlp(m, path)
        loaded = nn.load_mlp(path)
        assert loaded.layer_sizes == m.layer_sizes
        assert loaded.hidden_activation == m.hidden_activation
        for wa, wb in zip(m.weights, loaded.weights):
            npt.assert_array_equal(wa, wb)
        for ba, bb in zip(m.biases, loaded.biases):
            npt.assert_array_equal(ba, bb)


class TestRng:
    def test_streams_reproducible(self):
        a = nn.Rng(3, 5).generator().normal(size=4)
        b = nn.Rng(3, 5).generator().normal(size=4)
        npt.assert_array_equal(a, b)

    def test_streams_independent(self):
        a = nn.Rng(3, 1).generator().normal(size=4)
        b = nn.Rng(3, 2).generator().normal(size=4)
        assert not np.allclose(a, b)

    def test_negative_seed_ok(self):
        nn.Rng(-17).generator().normal()

    def test_children_distinct(self):
        parent = nn.Rng(0, 0)
        kids = {parent.child(k).stream_id for k in range(100)}
        assert len(kids) == 100
