"""Tensor engine tests: op semantics, error contracts, and the
finite-difference gradient oracle for every differentiable op."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lethevit.errors import (
    ContractError,
    DegenerateVectorError,
    DimensionError,
    LabelError,
    NonFiniteError,
)
from lethevit.tensor import (
    Tape,
    Tensor,
    add,
    backward,
    concat,
    cosine_similarity,
    cross_entropy,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean_all,
    per_sample_cross_entropy,
    repeat_batch,
    reshape,
    row_cosine,
    scale,
    softmax_rows,
    softplus,
    stop_recording,
    sum_all,
    take_token,
    transpose,
)

from helpers import assert_gradients_match

RNG = np.random.default_rng(20240811)


class TestTensorBasics:
    def test_values_are_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.values[0] = 5.0

    def test_leaf_copies_user_data(self):
        src = np.array([1.0, 2.0])
        t = Tensor(src)
        src[0] = 99.0
        assert t.values[0] == 1.0

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_inf_rejected_at_op_boundary(self):
        t = Tensor([1e308])
        with pytest.raises(NonFiniteError):
            scale(scale(t, 10.0), 10.0)

    def test_item_requires_scalar(self):
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), Tensor(m))
        np.testing.assert_array_equal(out.values, m)

    def test_direct_arithmetic(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
        np.testing.assert_array_equal(out.values, [[2.0], [4.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError) as exc:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        assert "(2, 3)" in str(exc.value)

    def test_rank_one_rejected(self):
        with pytest.raises(DimensionError):
            matmul(Tensor(np.zeros(3)), Tensor(np.zeros((3, 2))))

    def test_gradients_2d(self):
        a, b = RNG.normal(size=(3, 3)), RNG.normal(size=(3, 3))
        assert_gradients_match(lambda t: sum_all(matmul(t[0], t[1])), [a, b])

    def test_gradients_batched(self):
        a, b = RNG.normal(size=(2, 3, 4)), RNG.normal(size=(2, 4, 2))
        assert_gradients_match(lambda t: sum_all(matmul(t[0], t[1])), [a, b])

    def test_gradients_weight_broadcast(self):
        a, w = RNG.normal(size=(2, 3, 4)), RNG.normal(size=(4, 5))
        assert_gradients_match(lambda t: sum_all(matmul(t[0], t[1])), [a, w])


class TestSoftmaxRows:
    def test_zeros_are_uniform(self):
        out = softmax_rows(Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.values, 0.25)

    def test_closed_form(self):
        out = softmax_rows(Tensor([0.0, np.log(3.0)]))
        np.testing.assert_allclose(out.values, [0.25, 0.75], atol=1e-15)

    def test_large_values_stable(self):
        out = softmax_rows(Tensor([[1e9, 0.0]]))
        assert abs(out.values.sum() - 1.0) < 1e-12

    def test_empty_last_dim_rejected(self):
        with pytest.raises(DimensionError):
            softmax_rows(Tensor(np.zeros((2, 0))))

    def test_gradients(self):
        x = RNG.normal(size=(3, 5))
        weights = RNG.normal(size=(3, 5))
        assert_gradients_match(
            lambda t: sum_all(matmul(softmax_rows(t[0]), transpose(t[1], (1, 0)))), [x, weights]
        )

    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, min_side=1, max_side=6),
                      elements=st.floats(-50, 50)))
    @settings(max_examples=60, deadline=None)
    def test_rows_are_distributions(self, x):
        y = softmax_rows(Tensor(x)).values
        assert np.all(y >= 0.0) and np.all(y <= 1.0)
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-9)


class TestCosineSimilarity:
    def test_identical_vectors(self):
        v = Tensor([1.0, 2.0, -3.0])
        assert cosine_similarity(v, v).item() == pytest.approx(1.0, abs=1e-12)

    def test_antipodal(self):
        u = Tensor([1.0, 2.0])
        v = Tensor([-1.0, -2.0])
        assert cosine_similarity(u, v).item() == pytest.approx(-1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 0.0

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateVectorError):
            cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))

    def test_gradients(self):
        u, v = RNG.normal(size=4), RNG.normal(size=4)
        assert_gradients_match(lambda t: cosine_similarity(t[0], t[1]), [u, v])

    def test_row_cosine_gradients(self):
        a, b = RNG.normal(size=(3, 4)), RNG.normal(size=(3, 4))
        assert_gradients_match(lambda t: mean_all(row_cosine(t[0], t[1])), [a, b])

    @given(hnp.arrays(np.float64, st.integers(1, 8).map(lambda n: (n,)),
                      elements=st.floats(-100, 100)),
           st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_range(self, u, seed):
        v = np.random.default_rng(seed).normal(size=u.shape)
        if np.linalg.norm(u) < 1e-6 or np.linalg.norm(v) < 1e-6:
            return
        s = cosine_similarity(Tensor(u), Tensor(v)).item()
        assert -1.0 - 1e-9 <= s <= 1.0 + 1e-9


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = Tensor(np.zeros((1, 10)))
        assert cross_entropy(logits, np.array([7])).item() == pytest.approx(np.log(10.0), abs=1e-12)

    def test_confident_correct_is_near_zero(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 1e6
        assert cross_entropy(Tensor(logits), np.array([2])).item() == pytest.approx(0.0, abs=1e-9)

    def test_closed_form(self):
        loss = cross_entropy(Tensor([[1.0, 2.0]]), np.array([1]))
        assert loss.item() == pytest.approx(0.313262, abs=1e-6)

    def test_label_out_of_range_names_index(self):
        with pytest.raises(LabelError) as exc:
            cross_entropy(Tensor(np.zeros((3, 2))), np.array([0, 5, 1]))
        assert "index 1" in str(exc.value)

    def test_gradients(self):
        logits = RNG.normal(size=(4, 3))
        labels = np.array([0, 2, 1, 1])
        assert_gradients_match(lambda t: cross_entropy(t[0], labels), [logits])

    def test_per_sample_matches_mean(self):
        logits = RNG.normal(size=(5, 4))
        labels = np.array([0, 1, 2, 3, 0])
        per = per_sample_cross_entropy(logits, labels)
        mean = cross_entropy(Tensor(logits), labels).item()
        assert per.mean() == pytest.approx(mean, abs=1e-12)


class TestBackward:
    def test_square_gradient(self):
        x = Tensor([[3.0]], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(matmul(x, x))
        backward(loss, tape)
        assert x.grad[0, 0] == pytest.approx(6.0, abs=1e-12)

    def test_matmul_sum_against_finite_differences(self):
        a, b = RNG.normal(size=(3, 3)), RNG.normal(size=(3, 3))
        assert_gradients_match(lambda t: sum_all(matmul(t[0], t[1])), [a, b])

    def test_detached_parameter_grad_is_zero(self):
        x = Tensor([[2.0]], requires_grad=True)
        y = Tensor([[5.0]], requires_grad=True)
        with Tape() as tape:
            _unused = matmul(y, y)
            loss = sum_all(matmul(x, x))
        backward(loss, tape)
        assert y.grad is not None
        np.testing.assert_array_equal(y.grad, 0.0)

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = scale(x, 2.0)
        with pytest.raises(ContractError):
            backward(y, tape)

    def test_tape_is_single_use(self):
        x = Tensor([[1.0]], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(matmul(x, x))
        backward(loss, tape)
        with pytest.raises(ContractError):
            backward(loss, tape)

    def test_reused_tensor_accumulates(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        with Tape() as tape:
            doubled = add(x, x)
            loss = sum_all(doubled)
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [[2.0, 2.0]])

    def test_no_tape_means_no_tracking(self):
        x = Tensor([[1.0]], requires_grad=True)
        y = matmul(x, x)
        assert not y.requires_grad

    def test_stop_recording_hides_tape(self):
        x = Tensor([[1.0]], requires_grad=True)
        with Tape() as tape:
            with stop_recording():
                hidden = matmul(x, x)
            loss = sum_all(matmul(x, x))
        assert not hidden.requires_grad
        assert len(tape) == 2  # matmul + sum only
        backward(loss, tape)
        assert x.grad is not None


class TestRemainingOpGradients:
    """Finite-difference oracle for each op not covered above."""

    def test_add_same_shape(self):
        a, b = RNG.normal(size=(2, 3)), RNG.normal(size=(2, 3))
        assert_gradients_match(lambda t: sum_all(add(t[0], t[1])), [a, b])

    def test_add_bias_broadcast(self):
        a, b = RNG.normal(size=(2, 4, 3)), RNG.normal(size=3)
        assert_gradients_match(lambda t: sum_all(add(t[0], t[1])), [a, b])

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_scale(self):
        x = RNG.normal(size=(3, 2))
        assert_gradients_match(lambda t: sum_all(scale(t[0], -1.7)), [x])

    def test_transpose(self):
        x = RNG.normal(size=(2, 3, 4))
        assert_gradients_match(
            lambda t: sum_all(matmul(transpose(t[0], (1, 0, 2)), t[1])),
            [x, RNG.normal(size=(3, 4, 2))],
        )

    def test_transpose_bad_axes(self):
        with pytest.raises(DimensionError):
            transpose(Tensor(np.zeros((2, 3))), (0, 0))

    def test_reshape(self):
        x = RNG.normal(size=(2, 6))
        assert_gradients_match(
            lambda t: sum_all(matmul(reshape(t[0], (3, 4)), t[1])), [x, RNG.normal(size=(4, 2))]
        )

    def test_reshape_size_mismatch(self):
        with pytest.raises(DimensionError):
            reshape(Tensor(np.zeros((2, 3))), (4, 2))

    def test_concat(self):
        a, b = RNG.normal(size=(2, 2)), RNG.normal(size=(2, 3))
        w = RNG.normal(size=(5, 2))
        assert_gradients_match(lambda t: sum_all(matmul(concat([t[0], t[1]], 1), t[2])), [a, b, w])

    def test_concat_shape_mismatch(self):
        with pytest.raises(DimensionError):
            concat([Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 3)))], 1)

    def test_layer_norm(self):
        x = RNG.normal(size=(2, 5))
        gain = RNG.normal(size=5) + 1.0
        bias = RNG.normal(size=5)
        probe = RNG.normal(size=(2, 5))
        assert_gradients_match(
            lambda t: sum_all(matmul(layer_norm(t[0], t[1], t[2]), transpose(t[3], (1, 0)))),
            [x, gain, bias, probe],
        )

    def test_gelu(self):
        x = RNG.normal(size=(3, 4)) * 2.0
        assert_gradients_match(lambda t: sum_all(gelu(t[0])), [x])

    def test_gelu_values(self):
        # gelu(0) = 0; large positive is identity-like; large negative ~ 0
        y = gelu(Tensor([0.0, 10.0, -10.0])).values
        assert y[0] == 0.0
        assert y[1] == pytest.approx(10.0, abs=1e-9)
        assert y[2] == pytest.approx(0.0, abs=1e-9)

    def test_softplus(self):
        x = RNG.normal(size=(2, 3)) * 3.0
        assert_gradients_match(lambda t: sum_all(softplus(t[0])), [x])

    def test_softplus_extreme_stability(self):
        y = softplus(Tensor([-1e9, 0.0, 1e9])).values
        assert y[0] == 0.0
        assert y[1] == pytest.approx(np.log(2.0), abs=1e-15)
        assert y[2] == pytest.approx(1e9)

    def test_mean_all(self):
        x = RNG.normal(size=(4, 2))
        assert_gradients_match(lambda t: mean_all(t[0]), [x])

    def test_sum_all(self):
        x = RNG.normal(size=(2, 2))
        assert_gradients_match(lambda t: sum_all(t[0]), [x])

    def test_repeat_batch(self):
        x = RNG.normal(size=(1, 4))
        w = RNG.normal(size=(3, 1, 4))
        assert_gradients_match(
            lambda t: sum_all(matmul(repeat_batch(t[0], 3), transpose(t[1], (0, 2, 1)))), [x, w]
        )

    def test_take_token(self):
        x = RNG.normal(size=(2, 3, 4))
        w = RNG.normal(size=(4, 2))
        assert_gradients_match(lambda t: sum_all(matmul(take_token(t[0], 1), t[1])), [x, w])

    def test_take_token_bad_index(self):
        with pytest.raises(DimensionError):
            take_token(Tensor(np.zeros((1, 2, 3))), 2)

    def test_linear(self):
        x = RNG.normal(size=(2, 3))
        w = RNG.normal(size=(3, 4))
        b = RNG.normal(size=4)
        assert_gradients_match(lambda t: sum_all(linear(t[0], t[1], t[2])), [x, w, b])


class TestDeterminism:
    def test_forward_is_bit_identical(self):
        a = RNG.normal(size=(8, 8))
        b = RNG.normal(size=(8, 8))
        first = softmax_rows(matmul(Tensor(a), Tensor(b))).values
        second = softmax_rows(matmul(Tensor(a), Tensor(b))).values
        assert np.array_equal(first, second)
