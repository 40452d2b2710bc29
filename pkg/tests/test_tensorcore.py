import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plastinet import tensorcore as tc
from plastinet.tensorcore import DimensionError

from .conftest import central_difference, max_rel_err


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def naive_conv(x, w, stride, pad):
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for oy in range(ho):
            for ox in range(wo):
                s = 0.0
                for c in range(c_in):
                    for ki in range(k):
                        for kj in range(k):
                            iy, ix = oy * stride + ki - pad, ox * stride + kj - pad
                            if 0 <= iy < h and 0 <= ix < wd:
                                s += x[c, iy, ix] * w[o, c, ki, kj]
                out[o, oy, ox] = s
    return out


class TestMatmul:
    def test_identity(self):
        np.testing.assert_array_equal(tc.matmul(np.eye(2), np.eye(2)), np.eye(2))

    def test_row_sums(self):
        out = tc.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
        np.testing.assert_array_equal(out, [[3.0], [7.0]])

    def test_against_triple_loop(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(tc.matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("m,k,n", [(1, 1, 1), (16, 16, 16), (7, 13, 5)])
    def test_oracle_up_to_16(self, rng, m, k, n):
        a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
        np.testing.assert_allclose(tc.matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)

    def test_shape_error_names_both(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            tc.matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_backward_finite_difference(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        weights = rng.normal(size=(3, 2))
        ga, gb = tc.matmul_backward(a, b, weights)
        f = lambda: float(np.sum(tc.matmul(a, b) * weights))
        assert max_rel_err(ga, central_difference(f, a)) < 1e-6
        assert max_rel_err(gb, central_difference(f, b)) < 1e-6


class TestConv2d:
    def test_scalar_kernel(self, backend):
        out = tc.conv2d(np.ones((1, 3, 3)), np.full((1, 1, 1, 1), 2.0))
        np.testing.assert_array_equal(out, np.full((1, 3, 3), 2.0))

    def test_box_filter_sum(self, rng, backend):
        x = rng.normal(size=(1, 3, 3))
        out = tc.conv2d(x, np.ones((1, 1, 3, 3)))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == pytest.approx(x.sum(), abs=1e-12)

    def test_six_loop_oracle(self, rng, backend):
        x, w = rng.normal(size=(2, 8, 8)), rng.normal(size=(4, 2, 3, 3))
        np.testing.assert_allclose(tc.conv2d(x, w), naive_conv(x, w, 1, 0), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("size,stride,pad,k", [(16, 2, 1, 3), (9, 3, 2, 5), (5, 1, 1, 1), (16, 1, 0, 3)])
    def test_oracle_strides_and_padding(self, rng, backend, size, stride, pad, k):
        x, w = rng.normal(size=(3, size, size)), rng.normal(size=(2, 3, k, k))
        np.testing.assert_allclose(tc.conv2d(x, w, stride, pad), naive_conv(x, w, stride, pad), rtol=0, atol=1e-12)

    def test_output_extent(self, backend):
        assert tc.conv2d(np.zeros((1, 32, 32)), np.zeros((8, 1, 3, 3)), 2, 1).shape == (8, 16, 16)

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError):
            tc.conv2d(np.zeros((1, 3, 3)), np.zeros((1, 1, 5, 5)))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            tc.conv2d(np.zeros((2, 5, 5)), np.zeros((1, 3, 3, 3)))

    def test_batched_matches_per_sample(self, rng, backend):
        x, w = rng.normal(size=(3, 2, 7, 7)), rng.normal(size=(4, 2, 3, 3))
        batched = tc.conv2d(x, w, 2, 1)
        for i in range(3):
            np.testing.assert_allclose(batched[i], naive_conv(x[i], w, 2, 1), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1), (1, 1)])
    def test_backward_finite_difference(self, rng, backend, stride, pad):
        x, w = rng.normal(size=(2, 6, 6)), rng.normal(size=(3, 2, 3, 3))
        weights = rng.normal(size=tc.conv2d(x, w, stride, pad).shape)
        gx, gw = tc.conv2d_backward(x, w, weights, stride, pad)
        f = lambda: float(np.sum(tc.conv2d(x, w, stride, pad) * weights))
        assert max_rel_err(gx, central_difference(f, x)) < 1e-6
        assert max_rel_err(gw, central_difference(f, w)) < 1e-6

    def test_backends_agree(self, rng):
        from plastinet import kernels

        if len(kernels.BACKENDS) < 2:
            pytest.skip("compiled kernels not built")
        x, w = rng.normal(size=(4, 3, 9, 9)), rng.normal(size=(5, 3, 3, 3))
        c, p = kernels.BACKENDS["compiled"], kernels.BACKENDS["python"]
        out_c, _ = c.conv2d_forward(x, w, 2, 1)
        out_p, _ = p.conv2d_forward(x, w, 2, 1)
        np.testing.assert_allclose(out_c, out_p, rtol=0, atol=1e-12)
        g = rng.normal(size=out_c.shape)
        for a, b in zip(c.conv2d_backward(x, w, g, 2, 1), p.conv2d_backward(x, w, g, 2, 1)):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


class TestElementwise:
    def test_sigmoid_zero(self):
        assert tc.sigmoid(0.0) == 0.5

    def test_relu(self):
        np.testing.assert_array_equal(tc.relu(np.array([-3.0, 3.0])), [0.0, 3.0])

    def test_relu_subgradient_at_zero(self):
        assert tc.relu_backward(np.array([0.0]), np.array([1.0]))[0] == 0.0

    def test_pool(self):
        assert tc.global_avg_pool(np.array([[[1.0, 2.0], [3.0, 4.0]]]))[0] == 2.5

    @given(st.floats(min_value=-700, max_value=700))
    def test_sigmoid_open_interval(self, x):
        # the open interval holds wherever float64 can represent it
        y = tc.sigmoid(np.array([x]))[0]
        assert 0.0 < y <= 1.0
        if x < 36:
            assert y < 1.0

    def test_sigmoid_stable_extremes(self):
        y = tc.sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(y))
        assert y[0] >= 0.0 and y[1] == 1.0

    def test_sigmoid_backward(self, rng):
        x = rng.normal(size=5)
        weights = rng.normal(size=5)
        g = tc.sigmoid_backward(tc.sigmoid(x), weights)
        f = lambda: float(np.sum(tc.sigmoid(x) * weights))
        assert max_rel_err(g, central_difference(f, x)) < 1e-6

    def test_relu_backward(self, rng):
        x = rng.normal(size=20)
        weights = rng.normal(size=20)
        f = lambda: float(np.sum(tc.relu(x) * weights))
        assert max_rel_err(tc.relu_backward(x, weights), central_difference(f, x)) < 1e-6

    def test_pool_backward(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        weights = rng.normal(size=(2, 3))
        f = lambda: float(np.sum(tc.global_avg_pool(x) * weights))
        assert max_rel_err(tc.global_avg_pool_backward(x.shape, weights), central_difference(f, x)) < 1e-6


class TestSerialization:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=0, max_size=4), st.integers(0, 2**32 - 1))
    def test_round_trip_bit_exact(self, shape, seed):
        arr = np.random.default_rng(seed).normal(size=shape)
        buf = io.BytesIO()
        tc.write_tensor(buf, arr)
        buf.seek(0)
        back = tc.read_tensor(buf)
        assert back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()

    def test_layout(self):
        buf = io.BytesIO()
        tc.write_tensor(buf, np.array([[1.0, 2.0, 3.0]]))
        raw = buf.getvalue()
        assert raw[:4] == b"PTNS"
        assert raw[4:8] == (2).to_bytes(4, "little")
        assert raw[8:16] == (1).to_bytes(4, "little") + (3).to_bytes(4, "little")
        assert np.frombuffer(raw[16:], "<f8").tolist() == [1.0, 2.0, 3.0]

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            tc.read_tensor(io.BytesIO(b"XXXX"))

    def test_file_round_trip(self, tmp_path, rng):
        arr = rng.normal(size=(2, 3, 4))
        tc.save_tensor(tmp_path / "t.ptns", arr)
        assert tc.load_tensor(tmp_path / "t.ptns").tobytes() == arr.tobytes()

    def test_as_tensor_shape_check(self):
        assert tc.as_tensor(range(6), (2, 3)).shape == (2, 3)
        with pytest.raises(DimensionError):
            tc.as_tensor(range(5), (2, 3))
