import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlgcn.errors import ConfigurationError, DimensionError, NonFiniteError, UsageError
from mlgcn.tensor import (
    Tape,
    Tensor,
    backward,
    bce_with_logits,
    global_max_pool,
    leaky_relu,
    matmul,
    sigmoid,
)

from oracles import central_difference, relative_error

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


class TestTensor:
    def test_shape_and_size(self):
        t = Tensor([[1, 2, 3], [4, 5, 6]])
        assert t.shape == (2, 3)
        assert t.size == 6
        assert t.data.dtype == np.float64

    def test_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_constructor_copies_input(self):
        src = np.array([1.0, 2.0])
        t = Tensor(src)
        src[0] = 9.0
        assert t.data[0] == 1.0

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, bad])

    def test_rejects_empty_dimension(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((0, 3)))

    def test_overflow_detected_at_op_boundary(self):
        big = Tensor([[1e200]])
        with pytest.raises(NonFiniteError):
            matmul(big, big)


class TestMatmul:
    def test_identity(self):
        A = Tensor([[1, 2], [3, 4]])
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), A).data, [[1, 2], [3, 4]])

    def test_hand_product(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5], [6]]))
        np.testing.assert_array_equal(out.data, [[17], [39]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(3, 4\).*\(5, 2\)"):
            matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((5, 2))))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
    def test_identity_both_sides_exact(self, m, n, seed):
        A = np.random.default_rng(seed).uniform(-3, 3, (m, n))
        np.testing.assert_array_equal(matmul(Tensor(np.eye(m)), Tensor(A)).data, A)
        np.testing.assert_array_equal(matmul(Tensor(A), Tensor(np.eye(n))).data, A)


class TestLeakyRelu:
    @pytest.mark.parametrize("x, expected", [(3.0, 3.0), (-1.0, -0.2), (0.0, 0.0)])
    def test_values(self, x, expected):
        assert leaky_relu(Tensor([x]), 0.2).data[0] == pytest.approx(expected, abs=0)

    @given(finite)
    def test_piecewise_definition(self, x):
        y = leaky_relu(Tensor([x]), 0.2).data[0]
        assert y == (x if x >= 0 else 0.2 * x)

    @pytest.mark.parametrize("slope", [-0.1, 1.0, 1.5])
    def test_slope_range(self, slope):
        with pytest.raises(ConfigurationError):
            leaky_relu(Tensor([1.0]), slope)

    def test_gradient(self):
        x = Tensor([2.0, -3.0], requires_grad=True)
        with Tape() as tape:
            y = leaky_relu(x, 0.2).sum()
        np.testing.assert_array_equal(backward(y, tape)[x], [1.0, 0.2])


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_ln3(self):
        assert sigmoid(Tensor([math.log(3)])).data[0] == pytest.approx(0.75, rel=1e-15)

    def test_large_negative_stays_positive(self):
        v = sigmoid(Tensor([-1000.0])).data[0]
        assert 0.0 < v <= 1e-300

    def test_large_positive_stays_below_one(self):
        assert sigmoid(Tensor([1000.0])).data[0] < 1.0

    @given(st.floats(-1e300, 1e300, allow_nan=False))
    def test_open_unit_interval(self, x):
        v = sigmoid(Tensor([x])).data[0]
        assert 0.0 < v < 1.0

    @given(st.floats(-700, 700, allow_nan=False))
    def test_symmetry(self, x):
        s = sigmoid(Tensor([x, -x])).data
        assert abs(s[0] + s[1] - 1.0) <= 1e-15

    def test_gradient_at_zero(self):
        x = Tensor(0.0, requires_grad=True)
        with Tape() as tape:
            y = sigmoid(x)
        assert backward(y, tape)[x] == pytest.approx(0.25, abs=1e-16)


class TestGlobalMaxPool:
    def test_single_channel(self):
        np.testing.assert_array_equal(global_max_pool(Tensor([[[1, 2], [3, 4]]])).data, [4])

    def test_constant_map(self):
        np.testing.assert_array_equal(global_max_pool(Tensor(np.full((3, 2, 5), 7.0))).data, [7, 7, 7])

    def test_resnet_shape(self):
        fmap = Tensor(np.random.default_rng(0).standard_normal((2048, 14, 14)))
        assert global_max_pool(fmap).shape == (2048,)

    @pytest.mark.parametrize("shape", [(4,), (4, 4), (1, 2, 2, 2)])
    def test_rank_check(self, shape):
        with pytest.raises(DimensionError):
            global_max_pool(Tensor(np.ones(shape)))

    def test_gradient_first_occurrence_on_ties(self):
        fmap = Tensor([[[5.0, 1.0], [5.0, 5.0]], [[0.0, 2.0], [2.0, 1.0]]], requires_grad=True)
        with Tape() as tape:
            out = (global_max_pool(fmap) * Tensor([3.0, 7.0])).sum()
        g = backward(out, tape)[fmap]
        np.testing.assert_array_equal(g, [[[3, 0], [0, 0]], [[0, 7], [0, 0]]])


class TestBackward:
    def test_square(self):
        x = Tensor(3.0, requires_grad=True)
        with Tape() as tape:
            y = x * x
        assert backward(y, tape)[x] == 6.0

    def test_fan_out_accumulates(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        u = Tensor(rng.standard_normal((3, 3)))
        v = Tensor(rng.standard_normal((3, 3)))
        with Tape() as tape:
            both = (matmul(a, u) + matmul(a, v) * 2.0).sum()
        g_both = backward(both, tape)[a]
        singles = []
        for term in (lambda: matmul(a, u).sum(), lambda: (matmul(a, v) * 2.0).sum()):
            with Tape() as t:
                out = term()
            singles.append(backward(out, t)[a])
        np.testing.assert_allclose(g_both, singles[0] + singles[1], rtol=0, atol=1e-14)

    def test_untracked_tensor(self):
        with pytest.raises(UsageError):
            backward(Tensor(1.0))

    def test_not_recorded_without_tape(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x
        with pytest.raises(UsageError):
            backward(y)

    def test_non_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
        with pytest.raises(UsageError):
            backward(y, tape)

    def test_single_backward_per_tape(self):
        x = Tensor(2.0, requires_grad=True)
        with Tape() as tape:
            y = x * x
        backward(y, tape)
        with pytest.raises(UsageError):
            backward(y, tape)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((4, 4))

        def run():
            W = Tensor(w, requires_grad=True)
            with Tape() as tape:
                out = sigmoid(leaky_relu(matmul(W, W), 0.2)).sum()
            return backward(out, tape)[W]

        np.testing.assert_array_equal(run(), run())

    def test_constants_get_no_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        c = Tensor([3.0, 4.0])
        with Tape() as tape:
            y = (x * c).sum()
        grads = backward(y, tape)
        assert c not in grads
        np.testing.assert_array_equal(grads[x], [3.0, 4.0])


def _composite(W1, W2, W3, x, slope=0.2):
    h = leaky_relu(matmul(x, W1), slope)
    h = sigmoid(matmul(h, W2))
    h = leaky_relu(matmul(h, W3), slope)
    return (h * h).sum() + h.sum()


class TestFiniteDifferences:
    """Analytic gradients against central differences, h = 1e-5."""

    @pytest.mark.parametrize("seed", range(5))
    def test_four_layer_composite(self, seed):
        rng = np.random.default_rng(seed)
        arrays = [rng.uniform(-2, 2, s) for s in ((4, 5), (5, 3), (3, 4), (2, 4))]
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        with Tape() as tape:
            out = _composite(*tensors[:3], tensors[3])
        grads = backward(out, tape)
        numeric = central_difference(
            lambda *arrs: _composite(*(Tensor(a) for a in arrs)).item(), arrays
        )
        for t, n in zip(tensors, numeric):
            assert relative_error(grads[t], n) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31))
    def test_elementwise_ops(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-2, 2, (3, 3))
        b = rng.uniform(-2, 2, (3, 3))

        def f(a, b):
            return (sigmoid(Tensor(a)) * Tensor(b) - leaky_relu(Tensor(b), 0.1)).sum().item()

        A, B = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        with Tape() as tape:
            out = (sigmoid(A) * B - leaky_relu(B, 0.1)).sum()
        grads = backward(out, tape)
        na, nb = central_difference(f, [a, b])
        assert relative_error(grads[A], na) < 1e-6
        assert relative_error(grads[B], nb) < 1e-6

    def test_bce_with_logits(self):
        rng = np.random.default_rng(3)
        s = rng.uniform(-2, 2, (4, 5))
        y = (rng.random((4, 5)) < 0.5).astype(float)
        S = Tensor(s, requires_grad=True)
        with Tape() as tape:
            loss = bce_with_logits(S, y)
        (num,) = central_difference(lambda a: bce_with_logits(Tensor(a), y).item(), [s])
        assert relative_error(backward(loss, tape)[S], num) < 1e-6

    def test_max_pool(self):
        rng = np.random.default_rng(4)
        m = rng.uniform(-2, 2, (3, 4, 4))
        M = Tensor(m, requires_grad=True)
        w = rng.uniform(-2, 2, 3)
        with Tape() as tape:
            out = (global_max_pool(M) * Tensor(w)).sum()
        (num,) = central_difference(lambda a: (global_max_pool(Tensor(a)) * Tensor(w)).sum().item(), [m])
        assert relative_error(backward(out, tape)[M], num) < 1e-6
