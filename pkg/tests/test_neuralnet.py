import numpy as np
import pytest

from cmitest.neuralnet import (
    RELU,
    TANH,
    MlpGrads,
    NumericalError,
    adam_init,
    adam_step,
    load_mlp,
    mlp_forward,
    mlp_gradient,
    mlp_init,
    save_mlp,
)


def loss_value(params, x, upstream):
    return float(np.sum(mlp_forward(params, x) * upstream))


def fd_gradient(params, x, upstream, arr, idx, h=1e-5):
    arr[idx] += h
    up = loss_value(params, x, upstream)
    arr[idx] -= 2 * h
    down = loss_value(params, x, upstream)
    arr[idx] += h
    return (up - down) / (2 * h)


class TestInit:
    def test_output_bias_zero(self):
        p = mlp_init((3, 1), RELU, seed=9)
        assert np.all(p.biases[-1] == 0.0)

    def test_determinism_bitwise(self):
        a = mlp_init((4, 8, 2), TANH, seed=5)
        b = mlp_init((4, 8, 2), TANH, seed=5)
        for wa, wb in zip(a.weights, b.weights):
            assert wa.tobytes() == wb.tobytes()

    def test_shape_chaining(self):
        p = mlp_init((2, 8, 1), RELU, seed=0)
        assert [w.shape for w in p.weights] == [(8, 2), (1, 8)]
        assert [b.shape for b in p.biases] == [(8,), (1,)]

    def test_glorot_scale(self):
        p = mlp_init((100, 50), RELU, seed=1)
        bound = np.sqrt(6.0 / 150)
        assert np.abs(p.weights[0]).max() <= bound

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            mlp_init((3,), RELU, seed=0)
        with pytest.raises(ValueError):
            mlp_init((3, 0, 1), RELU, seed=0)


class TestForward:
    def test_zero_params_zero_output(self):
        p = mlp_init((3, 4, 2), RELU, seed=0)
        for w in p.weights:
            w[:] = 0.0
        out = mlp_forward(p, np.random.default_rng(0).standard_normal((5, 3)))
        assert np.all(out == 0.0)

    def test_identity_single_layer(self):
        p = mlp_init((3, 3), TANH, seed=0)
        p.weights[0][:] = np.eye(3)
        x = np.random.default_rng(1).standard_normal((4, 3))
        assert np.allclose(mlp_forward(p, x), x)

    def test_matches_independent_forward(self):
        # second implementation as oracle: explicit per-row loop
        p = mlp_init((3, 5, 4, 2), TANH, seed=3)
        x = np.random.default_rng(2).standard_normal((6, 3))
        out = mlp_forward(p, x)
        for r in range(6):
            h = x[r]
            for l in range(3):
                h = p.weights[l] @ h + p.biases[l]
                if l < 2:
                    h = np.tanh(h)
            assert np.allclose(out[r], h, atol=1e-12)

    def test_width_mismatch(self):
        p = mlp_init((3, 2), RELU, seed=0)
        with pytest.raises(ValueError, match="width"):
            mlp_forward(p, np.zeros((2, 4)))

    def test_non_finite_input(self):
        p = mlp_init((2, 2), RELU, seed=0)
        with pytest.raises(ValueError, match="finite"):
            mlp_forward(p, np.array([[np.inf, 0.0]]))


class TestGradient:
    def test_zero_upstream(self):
        p = mlp_init((3, 4, 2), RELU, seed=0)
        g = mlp_gradient(p, np.ones((3, 3)), np.zeros((3, 2)))
        assert all(np.all(gw == 0.0) for gw in g.weights + g.biases)

    def test_linear_layer_closed_form(self):
        # single linear layer, upstream of ones: weight grad = column sums
        p = mlp_init((3, 1), RELU, seed=4)
        x = np.random.default_rng(3).standard_normal((7, 3))
        g = mlp_gradient(p, x, np.ones((7, 1)))
        assert np.allclose(g.weights[0], x.sum(axis=0)[None, :], atol=1e-12)
        assert g.biases[0] == pytest.approx(7.0)

    def test_finite_difference_small_tanh(self):
        p = mlp_init((2, 4, 1), TANH, seed=5)
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 2))
        up = rng.standard_normal((5, 1))
        g = mlp_gradient(p, x, up)
        for arrs, grads in ((p.weights, g.weights), (p.biases, g.biases)):
            for arr, garr in zip(arrs, grads):
                flat, gflat = arr.ravel(), garr.ravel()
                for idx in range(flat.size):
                    fd = fd_gradient(p, x, up, flat, idx)
                    denom = max(abs(fd), abs(gflat[idx]), 1e-4)
                    assert abs(fd - gflat[idx]) / denom < 1e-6

    @pytest.mark.parametrize("dims,act", [((5, 16, 16, 3), RELU), ((5, 16, 16, 3), TANH),
                                          ((4, 8, 2), RELU), ((3, 7, 7, 1), TANH)])
    def test_finite_difference_probes(self, dims, act):
        # 100 random parameter probes per architecture
        p = mlp_init(dims, act, seed=7)
        rng = np.random.default_rng(8)
        x = rng.standard_normal((6, dims[0]))
        up = rng.standard_normal((6, dims[-1]))
        g = mlp_gradient(p, x, up)
        arrs = p.weights + p.biases
        grads = g.weights + g.biases
        for _ in range(100):
            which = rng.integers(len(arrs))
            flat, gflat = arrs[which].ravel(), grads[which].ravel()
            idx = int(rng.integers(flat.size))
            fd = fd_gradient(p, x, up, flat, idx)
            denom = max(abs(fd), abs(gflat[idx]), 1e-4)
            assert abs(fd - gflat[idx]) / denom < 1e-5

    def test_shape_mismatch(self):
        p = mlp_init((2, 3), RELU, seed=0)
        with pytest.raises(ValueError, match="upstream"):
            mlp_gradient(p, np.zeros((2, 2)), np.zeros((2, 2)))


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = mlp_init((2, 3, 1), RELU, seed=1)
        before = [w.copy() for w in p.weights]
        g = MlpGrads(weights=[np.zeros_like(w) for w in p.weights],
                     biases=[np.zeros_like(b) for b in p.biases])
        adam_step(p, g, adam_init(p, 0.1))
        for w0, w1 in zip(before, p.weights):
            assert np.allclose(w0, w1)

    def test_first_step_magnitude_is_learning_rate(self):
        p = mlp_init((2, 1), RELU, seed=2)
        before = p.weights[0].copy()
        g = MlpGrads(weights=[np.ones_like(p.weights[0])],
                     biases=[np.zeros_like(p.biases[0])])
        adam_step(p, g, adam_init(p, 0.05))
        assert np.allclose(np.abs(before - p.weights[0]), 0.05, atol=1e-8)

    def test_scalar_quadratic_converges(self):
        # adam on f(w) = w^2 from w = 1 with lr 0.1: |w| < 0.2 after 100 steps
        p = mlp_init((1, 1), RELU, seed=0)
        p.weights[0][:] = 1.0
        state = adam_init(p, 0.1)
        for _ in range(100):
            g = MlpGrads(weights=[2.0 * p.weights[0]], biases=[np.zeros(1)])
            adam_step(p, g, state)
        assert abs(p.weights[0][0, 0]) < 0.2

    def test_non_finite_gradient_aborts(self):
        p = mlp_init((2, 1), RELU, seed=0)
        g = MlpGrads(weights=[np.full_like(p.weights[0], np.nan)],
                     biases=[np.zeros_like(p.biases[0])])
        with pytest.raises(NumericalError):
            adam_step(p, g, adam_init(p, 0.1))

    def test_step_counter_increases(self):
        p = mlp_init((2, 1), RELU, seed=0)
        state = adam_init(p, 0.1)
        g = MlpGrads(weights=[np.ones_like(p.weights[0])],
                     biases=[np.ones_like(p.biases[0])])
        adam_step(p, g, state)
        adam_step(p, g, state)
        assert state.step == 2


class TestSerialization:
    def test_round_trip_bit_exact(self):
        p = mlp_init((3, 8, 4, 2), TANH, seed=11)
        q = load_mlp(save_mlp(p))
        assert q.layer_dims == p.layer_dims
        assert q.activation == p.activation
        for a, b in zip(p.weights + p.biases, q.weights + q.biases):
            assert a.tobytes() == b.tobytes()

    def test_forward_identical_after_round_trip(self):
        p = mlp_init((3, 6, 1), RELU, seed=12)
        q = load_mlp(save_mlp(p))
        x = np.random.default_rng(13).standard_normal((4, 3))
        assert mlp_forward(p, x).tobytes() == mlp_forward(q, x).tobytes()

    def test_version_guard(self):
        rec = save_mlp(mlp_init((2, 1), RELU, seed=0)).replace('"version": 1', '"version": 9')
        with pytest.raises(ValueError, match="unsupported"):
            load_mlp(rec)
