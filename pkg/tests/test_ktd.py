import numpy as np
import pytest

from vcformer.core import functional as F
from vcformer.core.autodiff import Variable
from vcformer.core.gradcheck import grad_check
from vcformer.errors import ConfigurationError
from vcformer.layers.ktd import (KtdParams, SnapshotMatrix, check_segmentation, desegment, fit_koopman,
                                 init_ktd_params, ktd_forward, segment)
from vcformer.layers.nn import scope

A = np.array([[0.9, 0.1], [0.0, 0.8]])


def _trajectory(steps, z0=(1.0, 1.0)):
    z = np.array(z0)
    cols = []
    for _ in range(steps):
        cols.append(z)
        z = A @ z
    return np.stack(cols, axis=-1)


def _ktd_params(n_vars, seg_len, m, eps=1e-3, seed=5):
    raw = scope(init_ktd_params(np.random.default_rng(seed), n_vars, seg_len, m, 'ktd'), 'ktd')
    return raw, KtdParams.from_mapping({k: Variable.constant(v) for k, v in raw.items()}, eps=eps)


@pytest.mark.parametrize('d, s, n', [(8, 4, 2), (128, 32, 4), (12, 3, 4)])
def test_segment_count(d, s, n):
    assert check_segmentation(d, s) == n


@pytest.mark.parametrize('d, s', [(8, 8), (8, 3), (8, 0)])
def test_bad_segmentation_rejected(d, s):
    with pytest.raises(ConfigurationError):
        check_segmentation(d, s)


def test_segment_and_reassemble(rng):
    x = rng.standard_normal((3, 8))
    segs = segment(x, 4)
    assert [s.shape for s in segs] == [(3, 4), (3, 4)]
    np.testing.assert_array_equal(segs[1].data, x[:, 4:])
    np.testing.assert_array_equal(desegment(segs).data, x)


def test_single_snapshot_rejected():
    with pytest.raises(ConfigurationError):
        SnapshotMatrix(np.ones((3, 1)))


def test_rank_one_growth_is_recovered():
    c = np.array([1.0, 2.0, 3.0]) / np.sqrt(14.0)
    op = fit_koopman(np.stack([c, 2 * c, 4 * c], axis=-1), eps=1e-10)
    np.testing.assert_allclose(op.apply(Variable.constant(c[:, None])).data[:, 0], 2 * c, atol=1e-8)


def test_linear_system_identified_exactly():
    op = fit_koopman(SnapshotMatrix(_trajectory(5)), eps=0.0)
    np.testing.assert_allclose(op.dense(), A, atol=1e-10)


def test_rollout_follows_the_system():
    traj = _trajectory(5)
    op = fit_koopman(traj, eps=0.0)
    z = traj[:, -1]
    for k, predicted in enumerate(op.rollout(Variable.constant(traj[:, -1:]), 4), start=1):
        np.testing.assert_allclose(predicted.data[:, 0], np.linalg.matrix_power(A, k) @ z, atol=1e-8)


def test_identity_codec_extrapolates_segments():
    # one variate, segments of length 2 following z_{k+1} = A z_k
    traj = _trajectory(10)
    x = traj[:, :5].T.reshape(1, 10)
    out = ktd_forward(x, KtdParams.identity_codec(eps=0.0), seg_len=2)
    np.testing.assert_allclose(out.data, traj[:, 5:].T.reshape(1, 10), atol=1e-8)


def test_forward_shape(rng):
    _, p = _ktd_params(3, 4, 5)
    x = rng.standard_normal((2, 3, 8))
    assert ktd_forward(x, p, seg_len=4).shape == (2, 3, 8)


def test_gradients_match_finite_differences(rng):
    raw, _ = _ktd_params(2, 4, 6)
    x = Variable.constant(rng.standard_normal((2, 2, 8)))
    target = Variable.constant(rng.standard_normal((2, 2, 8)))

    def loss(tape, v):
        return F.mse(ktd_forward(x, KtdParams.from_mapping(v, eps=1e-3), seg_len=4), target)

    report = grad_check(loss, raw)
    assert report.passed, report.to_dict()


def test_two_segments_roll_out_two_explicit_steps(rng):
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    eps = 1e-6
    op = fit_koopman(np.stack([z1, z2], axis=-1), eps=eps)
    start = Variable.constant(z2[:, None])
    once = op.apply(start)
    twice = op.apply(once)
    steps = op.rollout(start, 2)
    np.testing.assert_array_equal(steps[0].data, once.data)
    np.testing.assert_array_equal(steps[1].data, twice.data)

    dense = np.outer(z2, z1) / (z1 @ z1 + eps)
    np.testing.assert_allclose(once.data[:, 0], dense @ z2, atol=1e-12)
    np.testing.assert_allclose(twice.data[:, 0], dense @ dense @ z2, atol=1e-12)

    # identity codec: one variate whose two segments are z1 and z2
    out = ktd_forward(np.concatenate([z1, z2])[None, :], KtdParams.identity_codec(eps=eps), seg_len=3)
    np.testing.assert_allclose(out.data[0], np.concatenate([dense @ z2, dense @ dense @ z2]), atol=1e-12)


def test_ridge_term_shrinks_the_rank_one_fit():
    c = np.array([0.5, -1.0, 2.0])
    z = Variable.constant(c[:, None])
    exact = fit_koopman(np.stack([c, 2 * c], axis=-1), eps=0.0).apply(z).data[:, 0]
    np.testing.assert_allclose(exact, 2 * c, atol=1e-12)
    previous = np.linalg.norm(exact)
    for eps in (1e-3, 0.1, 1.0, 10.0):
        shrunk = fit_koopman(np.stack([c, 2 * c], axis=-1), eps=eps).apply(z).data[:, 0]
        gram = c @ c
        np.testing.assert_allclose(shrunk, 2 * c * gram / (gram + eps), atol=1e-12)
        assert np.linalg.norm(shrunk) <= previous + 1e-12
        previous = np.linalg.norm(shrunk)


@pytest.mark.parametrize('m, n', [(6, 4), (8, 8), (2, 6), (3, 7)])
def test_factored_operator_matches_the_dense_pseudoinverse(rng, m, n):
    # (6, 4) and (8, 8) solve the snapshot-side Gram, (2, 6) and (3, 7) the embedding-side one
    Z = rng.standard_normal((m, n))
    back, fore = Z[:, :-1], Z[:, 1:]
    op = fit_koopman(Z, eps=0.0)
    dense = fore @ np.linalg.pinv(back)
    np.testing.assert_allclose(op.dense(), dense, atol=1e-10)

    z0 = rng.standard_normal((m, 1))
    for k, step in enumerate(op.rollout(Variable.constant(z0), 4), start=1):
        np.testing.assert_allclose(step.data, np.linalg.matrix_power(dense, k) @ z0, rtol=1e-9, atol=1e-10)


@pytest.mark.parametrize('m, n', [(6, 4), (2, 6)])
def test_both_gram_sides_give_the_same_ridge_operator(rng, m, n):
    Z = rng.standard_normal((m, n))
    back, fore = Z[:, :-1], Z[:, 1:]
    eps = 0.3
    snapshot_side = fore @ np.linalg.solve(back.T @ back + eps * np.eye(n - 1), back.T)
    np.testing.assert_allclose(fit_koopman(Z, eps=eps).dense(), snapshot_side, atol=1e-10)
