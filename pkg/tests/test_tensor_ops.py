"""Forward semantics of every tensor op."""

import numpy as np
import pytest

from vitmaps import Tensor
from vitmaps.errors import ShapeError
from vitmaps.tensor import (
    add,
    add_bias,
    concat,
    elementwise_mul,
    gelu,
    layernorm,
    matmul,
    relu,
    reshape,
    scale,
    slice_axis,
    softmax_lastaxis,
    transpose,
)


def t64(values):
    return Tensor(values, dtype="f64")


class TestMatmul:
    def test_identity(self):
        a = t64([[1.0, 0.0], [0.0, 1.0]])
        b = t64([[3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(matmul(a, b).array, b.array)

    def test_hand_product(self):
        # [[1,2]] x [[3],[4]] = [[11]]
        out = matmul(t64([[1.0, 2.0]]), t64([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.array, [[11.0]])

    def test_zero_annihilates(self):
        z = Tensor.zeros((3, 4), dtype="f64")
        b = t64(np.random.default_rng(0).normal(size=(4, 5)))
        assert not matmul(z, b).array.any()

    def test_batched(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(5, 3, 4)), rng.normal(size=(5, 4, 2))
        out = matmul(t64(a), t64(b))
        np.testing.assert_allclose(out.array, a @ b, rtol=0, atol=0)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(t64(np.ones((2, 3))), t64(np.ones((2, 2))))

    def test_identity_times_x_is_exact(self):
        # f32, values away from powers of two
        rng = np.random.default_rng(2)
        x = Tensor(rng.uniform(0.1, 0.9, size=(7, 7)), dtype="f32")
        eye = Tensor(np.eye(7), dtype="f32")
        np.testing.assert_allclose(matmul(eye, x).array, x.array, rtol=1e-6)


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax_lastaxis(t64([0.0, 0.0])).array, [0.5, 0.5])

    def test_stabilized_no_overflow(self):
        out = softmax_lastaxis(Tensor([1000.0, 0.0], dtype="f32")).array
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-6)

    def test_reference_values(self):
        # frozen from a 40-digit mpmath evaluation of exp(x)/sum(exp(x))
        expected = [0.09003057317038046, 0.24472847105479765, 0.6652409557748219]
        out = softmax_lastaxis(t64([1.0, 2.0, 3.0])).array
        np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(0, 5, size=(4, 6, 9)), dtype="f32")
        y = softmax_lastaxis(x).array
        assert (y >= 0).all()
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-6)


class TestLayernorm:
    def test_constant_slice_is_zero(self):
        # zero variance: eps keeps the division finite and the output exactly 0
        x = t64(np.full((3, 8), 2.5))
        out = layernorm(x, t64(np.ones(8)), t64(np.zeros(8)))
        np.testing.assert_array_equal(out.array, np.zeros((3, 8)))

    def test_zero_gamma_gives_beta(self):
        rng = np.random.default_rng(4)
        x = t64(rng.normal(size=(5, 6)))
        beta = rng.normal(size=6)
        out = layernorm(x, Tensor.zeros((6,), dtype="f64"), t64(beta))
        np.testing.assert_array_equal(out.array, np.broadcast_to(beta, (5, 6)))

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(5)
        x = rng.normal(0, 3, size=(4, 16))
        gamma, beta = rng.normal(size=16), rng.normal(size=16)
        out = layernorm(t64(x), t64(gamma), t64(beta)).array
        mu = x.mean(-1, keepdims=True)
        var = ((x - mu) ** 2).mean(-1, keepdims=True)
        ref = (x - mu) / np.sqrt(var + 1e-6) * gamma + beta
        np.testing.assert_allclose(out, ref, atol=1e-5)

    def test_normalized_moments(self):
        rng = np.random.default_rng(6)
        x = t64(rng.normal(2, 4, size=(10, 32)))
        out = layernorm(x, t64(np.ones(32)), t64(np.zeros(32))).array
        np.testing.assert_allclose(out.mean(-1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(-1), 1.0, atol=1e-5)


class TestElementwise:
    def test_gelu_zero(self):
        assert gelu(t64([0.0])).array[0] == 0.0

    def test_gelu_exact_form(self):
        from scipy.special import erf

        x = np.linspace(-4, 4, 33)
        expected = x * 0.5 * (1 + erf(x / np.sqrt(2)))
        np.testing.assert_allclose(gelu(t64(x)).array, expected, atol=1e-12)

    def test_relu(self):
        np.testing.assert_array_equal(relu(t64([-3.0, 0.0, 3.0])).array, [0.0, 0.0, 3.0])

    def test_add_and_mul(self):
        a, b = t64([1.0, 2.0]), t64([10.0, 20.0])
        np.testing.assert_array_equal(add(a, b).array, [11.0, 22.0])
        np.testing.assert_array_equal(elementwise_mul(a, b).array, [10.0, 40.0])
        with pytest.raises(ShapeError):
            add(a, t64([1.0, 2.0, 3.0]))

    def test_add_bias_broadcasts_leading(self):
        x = t64(np.zeros((2, 3)))
        out = add_bias(x, t64([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out.array, [[1, 2, 3], [1, 2, 3]])

    def test_scale(self):
        np.testing.assert_array_equal(scale(t64([1.5, -2.0]), 2.0).array, [3.0, -4.0])


class TestStructural:
    def test_reshape_preserves_flat_order(self):
        x = t64(np.arange(1.0, 7.0).reshape(2, 3))
        y = reshape(x, (3, 2))
        np.testing.assert_array_equal(x.data, y.data)

    def test_reshape_transpose_roundtrip_bitwise(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.normal(size=(3, 4, 5)), dtype="f32")
        back = transpose(transpose(x, (2, 0, 1)), (1, 2, 0))
        assert np.array_equal(back.array, x.array)
        back2 = reshape(reshape(x, (12, 5)), (3, 4, 5))
        assert np.array_equal(back2.array, x.array)

    def test_reshape_size_mismatch(self):
        with pytest.raises(ShapeError):
            reshape(t64(np.ones((2, 3))), (4, 2))

    def test_concat_and_slice(self):
        a, b = t64([[1.0, 2.0]]), t64([[3.0, 4.0], [5.0, 6.0]])
        c = concat([a, b], axis=0)
        np.testing.assert_array_equal(c.array, [[1, 2], [3, 4], [5, 6]])
        np.testing.assert_array_equal(slice_axis(c, 0, 1, 3).array, b.array)
        with pytest.raises(ShapeError):
            slice_axis(c, 0, 2, 5)


class TestTensorInvariants:
    def test_shape_matches_data_length(self):
        x = Tensor(np.ones((3, 5)), dtype="f32")
        assert x.data.shape == (15,)
        assert int(np.prod(x.shape)) == x.data.size

    def test_immutable(self):
        x = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            x.array[0] = 5.0

    def test_finite_outputs_on_finite_inputs(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(0, 100, size=(6, 6)), dtype="f32")
        for out in (
            softmax_lastaxis(x),
            gelu(x),
            relu(x),
            layernorm(x, Tensor(np.ones(6), dtype="f32"), Tensor(np.zeros(6), dtype="f32")),
            matmul(x, x),
        ):
            assert np.isfinite(out.array).all()
