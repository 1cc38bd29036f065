import numpy as np
import pytest

from vcformer.core.autodiff import Variable
from vcformer.core.gradcheck import grad_check
from vcformer.core import functional as F
from vcformer.errors import DimensionError
from vcformer.layers.nn import scope
from vcformer.layers.vca import VcaParams, export_corr_map, init_vca_params, vca_forward, vca_scores


def _params(d, seed=3):
    raw = scope(init_vca_params(np.random.default_rng(seed), d, 'vca'), 'vca')
    return raw, VcaParams.from_mapping({k: Variable.constant(v) for k, v in raw.items()})


def test_single_variate_is_value_projection(rng):
    raw, p = _params(6)
    x = rng.standard_normal((1, 6))
    out = vca_forward(x, p).data
    np.testing.assert_allclose(out, x @ raw['w_v'] @ raw['w_o'], atol=1e-12)


def test_identical_tokens_give_identical_outputs(rng):
    _, p = _params(8)
    row = rng.standard_normal(8)
    out = vca_forward(np.tile(row, (4, 1)), p).data
    np.testing.assert_allclose(out, np.tile(out[0], (4, 1)), atol=1e-12)


def test_naive_and_spectral_paths_agree(rng):
    _, p = _params(16)
    x = rng.standard_normal((5, 16))
    np.testing.assert_allclose(vca_forward(x, p, naive=True).data, vca_forward(x, p).data, atol=1e-8)


def test_permutation_equivariance(rng):
    _, p = _params(8)
    x = rng.standard_normal((5, 8))
    perm = rng.permutation(5)
    out = vca_forward(x, p).data
    np.testing.assert_allclose(vca_forward(x[perm], p).data, out[perm], atol=1e-9)


def test_zero_input_has_zero_map_and_output():
    _, p = _params(8)
    x = np.zeros((3, 8))
    assert np.all(export_corr_map(x, p) == 0.0)
    assert np.all(vca_forward(x, p).data == 0.0)


def test_capture_matches_export(rng):
    _, p = _params(8)
    x = rng.standard_normal((4, 8))
    capture = {}
    vca_forward(x, p, capture=capture, key='layer')
    exported = export_corr_map(x, p)
    assert exported.shape == (4, 4)
    np.testing.assert_array_equal(capture['layer'].data, exported)
    np.testing.assert_array_equal(vca_scores(Variable.constant(x), p).data, exported)


def test_width_mismatch_rejected(rng):
    _, p = _params(8)
    with pytest.raises(DimensionError):
        vca_forward(rng.standard_normal((3, 6)), p)


def test_gradients_match_finite_differences(rng):
    raw, _ = _params(6)
    x = Variable.constant(rng.standard_normal((2, 3, 6)))
    target = Variable.constant(rng.standard_normal((2, 3, 6)))

    def loss(tape, v):
        return F.mse(vca_forward(x, VcaParams.from_mapping(v)), target)

    report = grad_check(loss, raw)
    assert report.passed, report.to_dict()
    assert set(report.checks) == {'w_q', 'w_k', 'w_v', 'w_o', 'lambda'}


def test_attention_rows_sum_to_one(rng):
    raw, p = _params(12)
    for scale in (1e-3, 1.0, 40.0):
        x = rng.standard_normal((2, 6, 12)) * scale
        captured = {}
        out = vca_forward(x, p, capture=captured)
        attn = F.softmax_rows(captured['corr']).data
        assert attn.shape == (2, 6, 6)
        assert np.all(attn >= 0)
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out.data, attn @ (x @ raw['w_v']) @ raw['w_o'], atol=1e-10)
