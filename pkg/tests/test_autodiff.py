import numpy as np
import pytest

from vcformer.core import functional as F
from vcformer.core.autodiff import Tape, Variable, backward
from vcformer.core.gradcheck import compare, grad_check
from vcformer.errors import ContractError, NumericError


def _spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def test_sum_of_squares_gradient(rng):
    tape = Tape()
    x = tape.leaf(rng.standard_normal((3, 4)), name='x')
    grads = backward(tape, F.sum(F.mul(x, x)))
    np.testing.assert_allclose(grads[x], 2 * x.data, atol=1e-15)


def test_matmul_sum_gradient(rng):
    tape = Tape()
    a = tape.leaf(rng.standard_normal((2, 3)), name='a')
    b = tape.leaf(rng.standard_normal((3, 4)), name='b')
    grads = tape.backward(F.sum(F.matmul(a, b)))
    np.testing.assert_allclose(grads[a], np.ones((2, 4)) @ b.data.T, atol=1e-14)
    np.testing.assert_allclose(grads[b], a.data.T @ np.ones((2, 4)), atol=1e-14)


def test_disconnected_leaf_has_zero_gradient(rng):
    tape = Tape()
    x = tape.leaf(rng.standard_normal(3), name='x')
    unused = tape.leaf(rng.standard_normal((2, 2)), name='unused')
    grads = tape.backward(F.sum(x))
    np.testing.assert_array_equal(grads[unused], np.zeros((2, 2)))
    assert set(grads.by_name()) == {'x', 'unused'}


def test_fan_out_accumulates():
    tape = Tape()
    x = tape.leaf(np.array([1.0, -2.0, 3.0]))
    grads = tape.backward(F.add(F.sum(x), F.sum(x)))
    np.testing.assert_array_equal(grads[x], [2.0, 2.0, 2.0])


def test_non_scalar_loss_is_a_contract_error():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(ContractError):
        tape.backward(F.scale(x, 2.0))


def test_loss_from_other_tape_rejected():
    first, second = Tape(), Tape()
    x = first.leaf(np.ones(2))
    with pytest.raises(ContractError):
        second.backward(F.sum(x))


def test_untracked_inputs_record_nothing():
    tape = Tape()
    x = tape.leaf(np.ones(3), requires_grad=False)
    out = F.sum(F.mul(x, x))
    assert not out.requires_grad
    assert len(tape) == 0


def test_linear_solve_examples(rng):
    b = rng.standard_normal((3, 2))
    x = F.linear_solve(Variable.constant(np.eye(3)), Variable.constant(b))
    np.testing.assert_allclose(x.data, b, atol=1e-15)
    x = F.linear_solve(Variable.constant(np.diag([2.0, 4.0])), Variable.constant([[2.0], [4.0]]))
    np.testing.assert_allclose(x.data, [[1.0], [1.0]], atol=1e-15)


def test_linear_solve_residual(rng):
    a = _spd(rng, 5)
    b = rng.standard_normal((5, 3))
    x = F.linear_solve(Variable.constant(a), Variable.constant(b)).data
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-9


def test_linear_solve_rejects_indefinite_matrix():
    with pytest.raises(NumericError, match='pivot'):
        F.linear_solve(Variable.constant([[1.0, 2.0], [2.0, 1.0]]), Variable.constant([[1.0], [1.0]]))


def test_linear_solve_rejects_near_singular_matrix():
    a = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]])
    with pytest.raises(NumericError, match='pivot'):
        F.linear_solve(Variable.constant(a), Variable.constant([[1.0], [1.0]]))


def test_linear_solve_gradient_matches_finite_differences(rng):
    params = {'A': _spd(rng, 3), 'B': rng.standard_normal((3, 2))}
    report = grad_check(lambda tape, v: F.sum(F.linear_solve(v['A'], v['B'])), params, tol=1e-5)
    assert report.passed, report.to_dict()


def test_linear_solve_broadcasts_a_shared_right_hand_side(rng):
    a = np.stack([_spd(rng, 4) for _ in range(3)])
    b = rng.standard_normal((4, 2))
    x = F.linear_solve(Variable.constant(a), Variable.constant(b)).data
    assert x.shape == (3, 4, 2)
    np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-10)


def test_linear_solve_gradient_is_symmetric_in_a(rng):
    tape = Tape()
    A = tape.leaf(_spd(rng, 4), name='A')
    B = tape.leaf(rng.standard_normal((4, 3)), name='B')
    weights = Variable.constant(rng.standard_normal((4, 3)))
    grads = backward(tape, F.sum(F.mul(F.linear_solve(A, B), weights))).by_name()
    np.testing.assert_allclose(grads['A'], grads['A'].T, atol=1e-12)


def test_quadratic_bowl_is_exact(rng):
    report = grad_check(lambda tape, v: F.sum(F.mul(v['x'], v['x'])), {'x': rng.standard_normal(6)})
    assert report.checks['x'].max_rel_error < 1e-8


def test_zero_gradient_uses_absolute_fallback():
    check = compare('p', np.zeros(3), np.full(3, 1e-12))
    assert check.used_absolute
    assert check.max_rel_error == pytest.approx(1e-12)


def test_failures_are_reported_not_raised():
    # numeric gradient of a function with a deliberately wrong backward rule
    def wrong(tape, v):
        x = v['x']
        out = tape.record('double_wrong', F.scale(x, 2.0).value, (x,), lambda g: (g * 3.0,))
        return F.sum(out)

    report = grad_check(wrong, {'x': np.ones(3)})
    assert not report.passed
    assert set(report.failures()) == {'x'}


def test_gradient_is_linear_in_the_loss(rng):
    x0 = rng.standard_normal((3, 5))

    def grad_of(a, b):
        tape = Tape()
        x = tape.leaf(x0)
        f = F.sum(F.tanh(x))
        g = F.sum(F.mul(x, F.roll_last_axis(x, 2)))
        return tape.backward(F.add(F.scale(f, a), F.scale(g, b)))[x]

    np.testing.assert_allclose(grad_of(2.0, -3.0), 2.0 * grad_of(1.0, 0.0) - 3.0 * grad_of(0.0, 1.0), atol=1e-10)


PRIMITIVES = {
    'matmul': (lambda v: F.matmul(v['a'], v['b']), {'a': (3, 4), 'b': (4, 2)}),
    'batched_matmul': (lambda v: F.matmul(v['a'], v['b']), {'a': (2, 3, 4), 'b': (4, 2)}),
    'transpose': (lambda v: F.transpose(v['a']), {'a': (2, 3, 4)}),
    'permute': (lambda v: F.permute(v['a'], (1, 0, 2)), {'a': (2, 3, 4)}),
    'reshape': (lambda v: F.reshape(v['a'], (4, 3)), {'a': (2, 6)}),
    'add_broadcast': (lambda v: F.add(v['a'], v['b']), {'a': (3, 4), 'b': (4,)}),
    'sub': (lambda v: F.sub(v['a'], v['b']), {'a': (3, 4), 'b': (3, 4)}),
    'mul': (lambda v: F.mul(v['a'], v['b']), {'a': (3, 4), 'b': (3, 4)}),
    'relu': (lambda v: F.relu(v['a']), {'a': (3, 4)}),
    'scale': (lambda v: F.scale(v['a'], -2.5), {'a': (3, 4)}),
    'add_scalar': (lambda v: F.add_scalar(v['a'], 0.75), {'a': (3, 4)}),
    'sum_axis': (lambda v: F.sum(v['a'], axis=1), {'a': (3, 4)}),
    'gelu': (lambda v: F.gelu(v['a']), {'a': (3, 4)}),
    'tanh': (lambda v: F.tanh(v['a']), {'a': (3, 4)}),
    'mean_axis': (lambda v: F.mean(v['a'], axis=0), {'a': (3, 4)}),
    'roll': (lambda v: F.roll_last_axis(v['a'], 3), {'a': (2, 7)}),
    'slice': (lambda v: F.slice_last_axis(v['a'], 2, 5), {'a': (2, 7)}),
    'concat': (lambda v: F.concat([v['a'], v['b']]), {'a': (2, 3), 'b': (2, 4)}),
    'stack': (lambda v: F.stack([v['a'], v['b']], axis=-2), {'a': (2, 3), 'b': (2, 3)}),
    'softmax': (lambda v: F.softmax_rows(v['a']), {'a': (3, 5)}),
    'layernorm': (lambda v: F.layernorm(v['a'], v['g'], v['b']), {'a': (3, 6), 'g': (6,), 'b': (6,)}),
    'rfft_irfft_even': (lambda v: F.irfft_last_axis(F.mul(F.rfft_last_axis(v['a']),
                                                          F.conj(F.rfft_last_axis(v['b']))), 8),
                        {'a': (2, 8), 'b': (2, 8)}),
    'rfft_irfft_odd': (lambda v: F.irfft_last_axis(F.mul(F.rfft_last_axis(v['a']),
                                                         F.rfft_last_axis(v['b'])), 7),
                       {'a': (2, 7), 'b': (2, 7)}),
    'linear_solve_batched': (lambda v: F.linear_solve(
        F.add(F.matmul(v['a'], F.transpose(v['a'])), Variable.constant(4.0 * np.eye(3))), v['b']),
        {'a': (2, 3, 3), 'b': (2, 3, 2)}),
}


@pytest.mark.parametrize('name', sorted(PRIMITIVES))
def test_primitive_backward_rules(name, rng):
    build, shapes = PRIMITIVES[name]
    params = {k: rng.standard_normal(s) for k, s in shapes.items()}
    weights = None

    def loss(tape, v):
        nonlocal weights
        out = build(v)
        if weights is None:
            weights = np.random.default_rng(7).standard_normal(out.shape)
        return F.sum(F.mul(out, Variable.constant(weights)))

    report = grad_check(loss, params)
    assert report.passed, report.to_dict()


def test_parallel_numeric_gradients_agree(rng):
    params = {'a': rng.standard_normal((3, 4)), 'b': rng.standard_normal((4, 2))}

    def loss(tape, v):
        return F.sum(F.tanh(F.matmul(v['a'], v['b'])))

    serial = grad_check(loss, params, workers=1)
    threaded = grad_check(loss, params, workers=4)
    for key in params:
        assert serial.checks[key].max_abs_error == threaded.checks[key].max_abs_error
