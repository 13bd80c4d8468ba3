import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swift_sr import ops
from swift_sr.errors import ShapeError
from swift_sr.ops import BatchNormState, ConvParams, PReluParams

from conftest import rand_nchw


def conv2d_reference(x, weight, bias, stride, padding):
    """Independent direct convolution: six explicit loops, float64."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    n, cin, h, w = x.shape
    cout, _, k, _ = weight.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin):
                        for u in range(k):
                            for v in range(k):
                                acc += xp[b, c, i * stride + u, j * stride + v] * weight[o, c, u, v]
                    out[b, o, i, j] = acc + (bias[o] if bias is not None else 0.0)
    return out


class TestConv2d:
    def test_constant_field(self):
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        p = ConvParams(weight=np.ones((1, 1, 2, 2), dtype=np.float32))
        y = ops.conv2d(x, p)
        assert y.shape == (1, 1, 2, 2)
        assert np.all(y == 4.0)

    def test_1x1_identity(self, rng):
        x = rand_nchw(rng, 2, 1, 4, 4)
        p = ConvParams(weight=np.ones((1, 1, 1, 1), dtype=np.float32))
        assert np.array_equal(ops.conv2d(x, p), x)

    def test_matches_direct_reference(self, rng):
        x = rand_nchw(rng, 1, 2, 5, 5)
        w = rand_nchw(rng, 3, 2, 3, 3)
        b = rng.uniform(-1, 1, size=3).astype(np.float32)
        p = ConvParams(weight=w, bias=b, stride=2, padding=1)
        got = ops.conv2d(x, p)
        want = conv2d_reference(x, w, b, stride=2, padding=1)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_constant_input_all_ones_kernel(self, rng):
        # k x k all-ones kernel on a constant field sums k^2 * c_in * value.
        x = np.full((1, 3, 6, 6), 0.5, dtype=np.float32)
        p = ConvParams(weight=np.ones((2, 3, 3, 3), dtype=np.float32))
        y = ops.conv2d(x, p)
        np.testing.assert_allclose(y, 9 * 3 * 0.5, rtol=1e-6)

    def test_channel_mismatch(self, rng):
        x = rand_nchw(rng, 1, 2, 5, 5)
        p = ConvParams(weight=np.zeros((3, 4, 3, 3), dtype=np.float32))
        with pytest.raises(ShapeError, match="channels"):
            ops.conv2d(x, p)

    def test_too_small_input(self):
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        p = ConvParams(weight=np.ones((1, 1, 3, 3), dtype=np.float32))
        with pytest.raises(ShapeError, match="output size"):
            ops.conv2d(x, p)


class TestDepthwiseConv2d:
    def test_center_one_identity(self, rng):
        x = rand_nchw(rng, 2, 3, 5, 5)
        w = np.zeros((3, 1, 3, 3), dtype=np.float32)
        w[:, 0, 1, 1] = 1.0
        p = ConvParams(weight=w, padding=1)
        np.testing.assert_array_equal(ops.depthwise_conv2d(x, p), x)

    def test_all_ones_on_constant(self):
        x = np.full((1, 2, 4, 4), 3.0, dtype=np.float32)
        p = ConvParams(weight=np.ones((2, 1, 2, 2), dtype=np.float32))
        y = ops.depthwise_conv2d(x, p)
        assert np.all(y == 12.0)

    def test_matches_per_channel_conv2d(self, rng):
        x = rand_nchw(rng, 2, 3, 6, 6)
        w = rand_nchw(rng, 3, 1, 3, 3)
        b = rng.uniform(-1, 1, size=3).astype(np.float32)
        p = ConvParams(weight=w, bias=b, stride=2, padding=1)
        got = ops.depthwise_conv2d(x, p)
        for c in range(3):
            single = ConvParams(
                weight=w[c : c + 1], bias=b[c : c + 1], stride=2, padding=1
            )
            want = ops.conv2d(x[:, c : c + 1], single)
            np.testing.assert_allclose(got[:, c : c + 1], want, atol=1e-6)

    def test_channel_mismatch(self, rng):
        x = rand_nchw(rng, 1, 2, 5, 5)
        p = ConvParams(weight=np.zeros((3, 1, 3, 3), dtype=np.float32))
        with pytest.raises(ShapeError):
            ops.depthwise_conv2d(x, p)


class TestDSConv2d:
    def test_identity_composition(self, rng):
        x = rand_nchw(rng, 1, 3, 5, 5)
        dw_w = np.zeros((3, 1, 3, 3), dtype=np.float32)
        dw_w[:, 0, 1, 1] = 1.0
        pw_w = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
        y = ops.ds_conv2d(x, ConvParams(dw_w, padding=1), ConvParams(pw_w))
        np.testing.assert_array_equal(y, x)

    def test_equals_manual_composition(self, rng):
        x = rand_nchw(rng, 2, 4, 6, 6)
        dw = ConvParams(rand_nchw(rng, 4, 1, 3, 3), rng.uniform(size=4).astype(np.float32), stride=2, padding=1)
        pw = ConvParams(rand_nchw(rng, 6, 4, 1, 1), rng.uniform(size=6).astype(np.float32))
        fused = ops.ds_conv2d(x, dw, pw)
        staged = ops.conv2d(ops.depthwise_conv2d(x, dw), pw)
        np.testing.assert_array_equal(fused, staged)

    def test_requires_pointwise_1x1(self, rng):
        x = rand_nchw(rng, 1, 2, 5, 5)
        dw = ConvParams(rand_nchw(rng, 2, 1, 3, 3), padding=1)
        pw = ConvParams(rand_nchw(rng, 3, 2, 3, 3), padding=1)
        with pytest.raises(ShapeError, match="pointwise"):
            ops.ds_conv2d(x, dw, pw)

    def test_parameter_count_formulas(self):
        sep, std = ops.conv_weight_counts(3, 64, 64)
        assert sep == 4672
        assert std == 36864


class TestBatchNorm:
    def test_eval_closed_form(self):
        s = BatchNormState(
            gamma=np.ones(1, dtype=np.float32),
            beta=np.zeros(1, dtype=np.float32),
            running_mean=np.full(1, 2.0, dtype=np.float32),
            running_var=np.ones(1, dtype=np.float32),
        )
        x = np.array([1.0, 3.0], dtype=np.float32).reshape(2, 1, 1, 1)
        y = ops.batch_norm(x, s, train=False)
        want = (np.array([1.0, 3.0]) - 2.0) / np.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(y.reshape(-1), want, rtol=1e-6)

    def test_gamma_zero_gives_beta(self, rng):
        s = BatchNormState.fresh(3)
        s.gamma[:] = 0.0
        s.beta[:] = 1.5
        x = rand_nchw(rng, 2, 3, 4, 4)
        assert np.all(ops.batch_norm(x, s, train=True) == 1.5)

    def test_train_on_normalized_input(self, rng):
        # Zero-mean unit-variance input passes through up to the eps effect.
        x = rng.normal(size=(4, 2, 8, 8))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        x = x.astype(np.float32)
        s = BatchNormState.fresh(2)
        s.gamma[:] = 2.0
        s.beta[:] = -1.0
        y = ops.batch_norm(x, s, train=True)
        np.testing.assert_allclose(y, 2.0 * x - 1.0, atol=1e-4)

    def test_train_output_statistics(self, rng):
        # Per-channel mean ~ beta and variance ~ gamma^2 on large batches.
        x = rand_nchw(rng, 4, 3, 8, 8, lo=-2.0, hi=5.0)
        s = BatchNormState.fresh(3)
        s.gamma[:] = np.array([0.5, 1.0, 3.0])
        s.beta[:] = np.array([-1.0, 0.25, 2.0])
        y = ops.batch_norm(x, s, train=True)
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), s.beta, atol=1e-3)
        np.testing.assert_allclose(y.var(axis=(0, 2, 3)), s.gamma**2, rtol=1e-3)

    def test_running_stats_update(self, rng):
        x = rand_nchw(rng, 2, 1, 4, 4, lo=0.0, hi=4.0)
        s = BatchNormState.fresh(1)
        ops.batch_norm(x, s, train=True)
        count = 2 * 4 * 4
        want_mean = 0.1 * x.mean()
        want_var = 0.9 * 1.0 + 0.1 * x.var() * count / (count - 1)
        np.testing.assert_allclose(s.running_mean, want_mean, rtol=1e-5)
        np.testing.assert_allclose(s.running_var, want_var, rtol=1e-5)

    def test_train_needs_two_values(self):
        s = BatchNormState.fresh(2)
        x = np.ones((1, 2, 1, 1), dtype=np.float32)
        with pytest.raises(ShapeError):
            ops.batch_norm(x, s, train=True)


class TestActivations:
    def test_prelu_values(self):
        p = PReluParams(slope=np.full(1, 0.25, dtype=np.float32))
        x = np.array([3.0, -2.0], dtype=np.float32).reshape(1, 1, 1, 2)
        y = ops.prelu(x, p)
        assert y.reshape(-1).tolist() == [3.0, -0.5]

    def test_prelu_slope_one_is_identity(self, rng):
        x = rand_nchw(rng, 2, 3, 4, 4, lo=-5, hi=5)
        p = PReluParams(slope=np.ones(3, dtype=np.float32))
        np.testing.assert_array_equal(ops.prelu(x, p), x)

    def test_prelu_channel_mismatch(self, rng):
        p = PReluParams(slope=np.ones(2, dtype=np.float32))
        with pytest.raises(ShapeError):
            ops.prelu(rand_nchw(rng, 1, 3, 2, 2), p)

    def test_leaky_relu(self):
        x = np.array([-1.0, 5.0], dtype=np.float32).reshape(1, 1, 1, 2)
        y = ops.leaky_relu(x, 0.2)
        np.testing.assert_allclose(y.reshape(-1), [-0.2, 5.0], rtol=1e-6)
        y = ops.leaky_relu(x, 0.0)
        assert y.reshape(-1).tolist() == [0.0, 5.0]

    def test_relu6(self):
        x = np.array([7.0, -1.0, 3.0], dtype=np.float32).reshape(1, 1, 1, 3)
        assert ops.relu6(x).reshape(-1).tolist() == [6.0, 0.0, 3.0]
        six = np.full((1, 1, 2, 2), 6.0, dtype=np.float32)
        np.testing.assert_array_equal(ops.relu6(six), six)

    def test_sigmoid_values(self):
        x = np.zeros((1, 1, 1, 1), dtype=np.float32)
        assert ops.sigmoid(x).item() == 0.5
        big = np.full((1, 1, 1, 1), 200.0, dtype=np.float32)
        assert ops.sigmoid(big).item() <= 1.0 - ops.SIGMOID_CLAMP
        assert ops.sigmoid(-big).item() >= ops.SIGMOID_CLAMP

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-30, 30))
    def test_sigmoid_symmetry(self, v):
        x = np.array([[[[v]]]], dtype=np.float32)
        s1 = ops.sigmoid(x).item()
        s2 = ops.sigmoid(-x).item()
        assert s1 + s2 == pytest.approx(1.0, abs=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-10, 10, width=32), min_size=2, max_size=16))
    def test_monotone_nondecreasing(self, values):
        xs = np.sort(np.array(values, dtype=np.float32)).reshape(1, 1, 1, -1)
        p = PReluParams(slope=np.full(1, 0.3, dtype=np.float32))
        for f in (
            lambda a: ops.relu6(a),
            lambda a: ops.leaky_relu(a, 0.2),
            lambda a: ops.prelu(a, p),
            lambda a: ops.sigmoid(a),
        ):
            y = f(xs).reshape(-1)
            assert np.all(np.diff(y) >= 0)


class TestPixelShuffle:
    def test_definitional_2x2(self):
        x = np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32).reshape(1, 4, 1, 1)
        y = ops.pixel_shuffle(x, 2)
        assert y.shape == (1, 1, 2, 2)
        assert y.reshape(2, 2).tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_r1_identity(self, rng):
        x = rand_nchw(rng, 2, 3, 4, 4)
        np.testing.assert_array_equal(ops.pixel_shuffle(x, 1), x)
        np.testing.assert_array_equal(ops.pixel_unshuffle(x, 1), x)

    def test_round_trip_bitwise(self, rng):
        x = rand_nchw(rng, 2, 8, 3, 3)
        y = ops.pixel_unshuffle(ops.pixel_shuffle(x, 2), 2)
        assert np.array_equal(y, x)

    def test_multiset_preserved(self, rng):
        x = rand_nchw(rng, 1, 4, 3, 3)
        y = ops.pixel_shuffle(x, 2)
        assert np.array_equal(np.sort(x.reshape(-1)), np.sort(y.reshape(-1)))

    def test_unshuffle_shape_rule(self, rng):
        x = rand_nchw(rng, 1, 1, 4, 4)
        assert ops.pixel_unshuffle(x, 2).shape == (1, 4, 2, 2)

    def test_divisibility_errors(self, rng):
        with pytest.raises(ShapeError):
            ops.pixel_shuffle(rand_nchw(rng, 1, 3, 2, 2), 2)
        with pytest.raises(ShapeError):
            ops.pixel_unshuffle(rand_nchw(rng, 1, 1, 3, 3), 2)


class TestAdaptiveAvgPool:
    def test_identity_partition(self, rng):
        x = rand_nchw(rng, 1, 2, 6, 6)
        np.testing.assert_array_equal(ops.adaptive_avg_pool(x, 6, 6), x)

    def test_constant(self):
        x = np.full((1, 1, 12, 12), 2.5, dtype=np.float32)
        y = ops.adaptive_avg_pool(x, 6, 6)
        assert y.shape == (1, 1, 6, 6)
        np.testing.assert_allclose(y, 2.5, rtol=1e-6)

    def test_matches_window_oracle(self, rng):
        import math

        x = rand_nchw(rng, 1, 1, 5, 5)
        out_h = out_w = 3
        y = ops.adaptive_avg_pool(x, out_h, out_w)
        for i in range(out_h):
            for j in range(out_w):
                h0, h1 = math.floor(i * 5 / out_h), math.ceil((i + 1) * 5 / out_h)
                w0, w1 = math.floor(j * 5 / out_w), math.ceil((j + 1) * 5 / out_w)
                want = x[0, 0, h0:h1, w0:w1].mean()
                assert y[0, 0, i, j] == pytest.approx(want, abs=1e-6)

    def test_upsampling_pool(self, rng):
        # Output larger than input: windows repeat source pixels.
        x = rand_nchw(rng, 1, 1, 3, 3)
        y = ops.adaptive_avg_pool(x, 6, 6)
        assert y.shape == (1, 1, 6, 6)


class TestLinear:
    def test_identity(self, rng):
        x = rng.uniform(size=(3, 4)).astype(np.float32)
        y = ops.linear(x, np.eye(4, dtype=np.float32), np.zeros(4, dtype=np.float32))
        np.testing.assert_allclose(y, x, rtol=1e-6)

    def test_zero_weight_bias_only(self, rng):
        x = rng.uniform(size=(3, 4)).astype(np.float32)
        b = np.array([1.0, -2.0], dtype=np.float32)
        y = ops.linear(x, np.zeros((2, 4), dtype=np.float32), b)
        for row in y:
            np.testing.assert_array_equal(row, b)

    def test_matches_triple_loop(self, rng):
        x = rng.uniform(-1, 1, size=(3, 4)).astype(np.float32)
        w = rng.uniform(-1, 1, size=(2, 4)).astype(np.float32)
        b = rng.uniform(-1, 1, size=2).astype(np.float32)
        want = np.zeros((3, 2))
        for i in range(3):
            for o in range(2):
                acc = 0.0
                for j in range(4):
                    acc += float(x[i, j]) * float(w[o, j])
                want[i, o] = acc + float(b[o])
        np.testing.assert_allclose(ops.linear(x, w, b), want, atol=1e-6)

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ops.linear(rng.uniform(size=(3, 4)).astype(np.float32), np.zeros((2, 5), dtype=np.float32), None)
