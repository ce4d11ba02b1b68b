"""Tests for the reverse-mode differentiation kernel."""

import numpy as np
import pytest

from SaliencyWorkflow.util.autodiff import (
    NonFiniteError,
    OpKind,
    ShapeError,
    Tape,
    backward,
    directional_check,
    forward_op,
    gradient_check,
)


def _weighted_sum(tape, node, weights):
    return tape.sum(tape.mul(node, tape.constant(weights)))


def _positive(rng, shape, low=0.5, high=1.5):
    return rng.uniform(low, high, size=shape)


# Each case builds (point, fn) from a generator. Inputs and weights are kept
# in ranges where every non-zero gradient coordinate is bounded away from 0.

def _case_matmul_left(rng):
    b = _positive(rng, (3, 4))
    w = _positive(rng, (2, 4))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.matmul(x, t.constant(b)), w)


def _case_matmul_right(rng):
    a = _positive(rng, (2, 3))
    w = _positive(rng, (2, 4))
    return rng.normal(size=(3, 4)), lambda t, x: _weighted_sum(t, t.matmul(t.constant(a), x), w)


def _case_matmul_batched(rng):
    b = _positive(rng, (3, 2))
    w = _positive(rng, (2, 2, 2))
    return rng.normal(size=(2, 2, 3)), lambda t, x: _weighted_sum(t, t.matmul(x, t.constant(b)), w)


def _case_add_broadcast(rng):
    other = rng.normal(size=(2, 3))
    w = _positive(rng, (2, 3))
    return rng.normal(size=(3,)), lambda t, x: _weighted_sum(t, t.add(t.constant(other), x), w)


def _case_sub(rng):
    other = rng.normal(size=(2, 3))
    w = _positive(rng, (2, 3))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.sub(t.constant(other), x), w)


def _case_mul(rng):
    other = _positive(rng, (2, 3))
    w = _positive(rng, (2, 3))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.mul(x, t.constant(other)), w)


def _case_sigmoid(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(-2, 2, size=(2, 3)), lambda t, x: _weighted_sum(t, t.sigmoid(x), w)


def _case_tanh(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(-2, 2, size=(2, 3)), lambda t, x: _weighted_sum(t, t.tanh(x), w)


def _case_exp(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(-1, 1, size=(2, 3)), lambda t, x: _weighted_sum(t, t.exp(x), w)


def _case_log(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(0.5, 2, size=(2, 3)), lambda t, x: _weighted_sum(t, t.log(x), w)


def _case_pow_square(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(0.5, 2, size=(2, 3)), lambda t, x: _weighted_sum(t, t.pow(x, 2.0), w)


def _case_pow_rsqrt(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(0.5, 2, size=(2, 3)), lambda t, x: _weighted_sum(t, t.pow(x, -0.5), w)


def _case_gelu(rng):
    w = _positive(rng, (2, 3))
    return rng.uniform(0.1, 2, size=(2, 3)), lambda t, x: _weighted_sum(t, t.gelu(x), w)


def _one_hot_rows(rng, rows, cols):
    mask = np.zeros((rows, cols))
    mask[np.arange(rows), rng.integers(0, cols, size=rows)] = 1.0
    return mask * _positive(rng, (rows, 1))


def _case_softmax(rng):
    mask = _one_hot_rows(rng, 2, 4)
    return rng.uniform(-1, 1, size=(2, 4)), lambda t, x: _weighted_sum(t, t.softmax(x), mask)


def _case_log_softmax(rng):
    mask = _one_hot_rows(rng, 2, 4)
    return rng.uniform(-1, 1, size=(2, 4)), lambda t, x: _weighted_sum(t, t.log_softmax(x), mask)


def _case_concat(rng):
    other = rng.normal(size=(2, 2))
    w = _positive(rng, (2, 5))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.concat([x, t.constant(other)], axis=1), w)


def _case_slice(rng):
    w = _positive(rng, (2,))
    return rng.normal(size=(3, 4)), lambda t, x: _weighted_sum(t, t.slice(x, (slice(0, 2), 1)), w)


def _case_gather(rng):
    ids = np.array([0, 2, 2, 1])
    w = _positive(rng, (4, 3))
    return rng.normal(size=(4, 3)), lambda t, x: _weighted_sum(t, t.gather(x, ids), w)


def _case_index(rng):
    index = (np.array([0, 1, 1]), np.array([2, 0, 0]))
    w = _positive(rng, (3,))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.index(x, index), w)


def _case_sum_axis(rng):
    w = _positive(rng, (2,))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.sum(x, axis=1), w)


def _case_mean_keepdims(rng):
    w = _positive(rng, (1, 3))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.mean(x, axis=0, keepdims=True), w)


def _case_reshape(rng):
    w = _positive(rng, (3, 2))
    return rng.normal(size=(2, 3)), lambda t, x: _weighted_sum(t, t.reshape(x, (3, 2)), w)


def _case_transpose(rng):
    w = _positive(rng, (3, 2, 2))
    return rng.normal(size=(2, 2, 3)), lambda t, x: _weighted_sum(t, t.transpose(x, (2, 0, 1)), w)


KIND_CASES = {
    'matmul_left': _case_matmul_left,
    'matmul_right': _case_matmul_right,
    'matmul_batched': _case_matmul_batched,
    'add_broadcast': _case_add_broadcast,
    'sub': _case_sub,
    'mul': _case_mul,
    'sigmoid': _case_sigmoid,
    'tanh': _case_tanh,
    'exp': _case_exp,
    'log': _case_log,
    'pow_square': _case_pow_square,
    'pow_rsqrt': _case_pow_rsqrt,
    'gelu': _case_gelu,
    'softmax': _case_softmax,
    'log_softmax': _case_log_softmax,
    'concat': _case_concat,
    'slice': _case_slice,
    'gather': _case_gather,
    'index': _case_index,
    'sum': _case_sum_axis,
    'mean': _case_mean_keepdims,
    'reshape': _case_reshape,
    'transpose': _case_transpose,
}


@pytest.mark.parametrize('case', sorted(KIND_CASES))
def test_backward_matches_finite_differences_per_kind(case):
    for seed in range(20):
        rng = np.random.default_rng([seed, len(case)])
        point, fn = KIND_CASES[case](rng)
        assert gradient_check(fn, point, epsilon=1e-5) < 1e-6, f"{case} seed={seed}"


def test_sigmoid_at_zero_is_half():
    tape = Tape()
    out = tape.sigmoid(tape.constant(0.0))
    assert tape.value(out) == 0.5


def test_softmax_of_zeros_is_uniform():
    tape = Tape()
    out = tape.softmax(tape.constant(np.zeros(3)))
    np.testing.assert_allclose(tape.value(out), np.full(3, 1.0 / 3.0), rtol=0, atol=1e-15)


def test_matmul_matches_naive_triple_loop():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(3, 4))
    expected = np.zeros((2, 4))
    for i in range(2):
        for j in range(4):
            for k in range(3):
                expected[i, j] += a[i, k] * b[k, j]

    tape = Tape()
    out = forward_op(tape, OpKind.MATMUL, [tape.constant(a), tape.constant(b)])
    assert tape.value(out).shape == (2, 4)
    np.testing.assert_allclose(tape.value(out), expected, rtol=1e-12, atol=1e-12)


def test_shape_mismatch_names_operation_and_shapes():
    tape = Tape()
    a = tape.constant(np.ones((2, 3)))
    b = tape.constant(np.ones((2, 4)))
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 4\)"):
        tape.matmul(a, b)
    with pytest.raises(ShapeError, match="add"):
        tape.add(a, b)
    with pytest.raises(ShapeError, match="concat"):
        tape.concat([a, tape.constant(np.ones((3, 1)))], axis=1)


def test_forward_constants_are_appended_as_operands():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    out = forward_op(tape, OpKind.MUL, [x], constants=[np.array([3.0, 4.0])])
    np.testing.assert_array_equal(tape.value(out), [3.0, 8.0])


def test_non_finite_forward_is_rejected():
    tape = Tape()
    with pytest.raises(NonFiniteError, match="log"):
        tape.log(tape.constant(np.array([1.0, 0.0])))


def test_gather_rejects_out_of_range_ids():
    tape = Tape()
    table = tape.constant(np.ones((3, 2)))
    with pytest.raises(ShapeError, match="gather"):
        tape.gather(table, [0, 3])


def test_backward_of_sum_is_all_ones():
    tape = Tape()
    x = tape.leaf(np.arange(6.0).reshape(2, 3), target=True)
    grads = backward(tape, tape.sum(x))
    np.testing.assert_array_equal(grads[x], np.ones((2, 3)))


def test_backward_sigmoid_derivative_at_zero():
    tape = Tape()
    x = tape.leaf(0.0, target=True)
    grads = backward(tape, tape.sigmoid(x))
    assert grads[x] == pytest.approx(0.25, abs=1e-15)


def test_backward_rejects_non_scalar_output():
    tape = Tape()
    x = tape.leaf(np.ones(3), target=True)
    with pytest.raises(ShapeError, match="scalar"):
        backward(tape, tape.tanh(x))


def test_backward_twice_is_bit_identical():
    rng = np.random.default_rng(11)
    tape = Tape()
    x = tape.leaf(rng.normal(size=(3, 4)), target=True)
    w = tape.constant(rng.normal(size=(4, 2)))
    out = tape.sum(tape.tanh(tape.matmul(x, w)))
    first = backward(tape, out)[x]
    second = backward(tape, out)[x]
    assert np.array_equal(first, second)


def test_gradient_of_sum_is_sum_of_gradients():
    rng = np.random.default_rng(5)
    point = rng.normal(size=(2, 3))
    w = rng.normal(size=(3, 3))

    def grad_of(build):
        tape = Tape()
        x = tape.leaf(point, target=True)
        return backward(tape, build(tape, x))[x]

    f = lambda t, x: t.sum(t.tanh(t.matmul(x, t.constant(w))))
    g = lambda t, x: t.sum(t.exp(t.scale(x, 0.5)))
    both = lambda t, x: t.add(f(t, x), g(t, x))
    np.testing.assert_allclose(grad_of(both), grad_of(f) + grad_of(g), rtol=1e-12, atol=1e-14)


def test_untouched_target_gets_zero_gradient():
    tape = Tape()
    x = tape.leaf(np.ones(2), target=True)
    y = tape.leaf(np.ones((2, 2)), target=True)
    grads = backward(tape, tape.sum(x))
    np.testing.assert_array_equal(grads[y], np.zeros((2, 2)))


def test_two_layer_function_matches_finite_differences():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        w1 = _positive(rng, (4, 3))
        b1 = rng.uniform(-0.5, 0.5, size=(3,))
        w2 = _positive(rng, (3,))

        def fn(tape, x):
            hidden = tape.tanh(tape.add(tape.matmul(x, tape.constant(w1)), tape.constant(b1)))
            return _weighted_sum(tape, hidden, w2)

        point = rng.uniform(-0.3, 0.3, size=(1, 4))
        assert gradient_check(fn, point) < 1e-6


def test_gather_per_occurrence_mode_keeps_positions_separate():
    table = np.arange(6.0).reshape(3, 2)
    tape = Tape()
    rows = tape.gather(tape.constant(table), [1, 1], accumulate=False)
    weights = np.array([[1.0, 2.0], [3.0, 4.0]])
    grads = backward(tape, _weighted_sum(tape, rows, weights))
    assert rows in tape.targets
    np.testing.assert_array_equal(grads[rows], weights)


def test_gather_accumulate_mode_scatter_adds_rows():
    tape = Tape()
    table = tape.leaf(np.zeros((3, 2)), target=True)
    rows = tape.gather(table, [1, 1, 0])
    grads = backward(tape, tape.sum(rows))
    np.testing.assert_array_equal(grads[table], [[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])


class TestGradientCheck:
    def test_linear_function_is_essentially_exact(self):
        rng = np.random.default_rng(0)
        w = rng.uniform(1.0, 2.0, size=5)
        error = gradient_check(lambda t, x: t.sum(t.mul(x, t.constant(w))), rng.normal(size=5))
        assert error < 1e-8

    def test_constant_function_reports_zero(self):
        error = gradient_check(lambda t, x: t.constant(3.0), np.ones(4))
        assert error == 0.0

    def test_rejects_non_positive_epsilon(self):
        with pytest.raises(ValueError):
            gradient_check(lambda t, x: t.sum(x), np.ones(2), epsilon=0.0)

    def test_non_finite_evaluation_propagates_as_inf(self):
        error = gradient_check(lambda t, x: t.sum(t.log(x)), np.array([1.0, 0.0]))
        assert error == float('inf')

    def test_directional_check_agrees_on_smooth_function(self):
        rng = np.random.default_rng(2)
        w = _positive(rng, (3, 3))
        fn = lambda t, x: t.sum(t.sigmoid(t.matmul(x, t.constant(w))))
        point = rng.uniform(-0.5, 0.5, size=(2, 3))
        direction = _positive(rng, (2, 3))
        assert directional_check(fn, point, direction) < 1e-7
