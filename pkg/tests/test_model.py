import numpy as np
import pytest

from vcformer.config import ModelConfig
from vcformer.core.autodiff import Tape, Variable
from vcformer.core.tensor import LAYERNORM_EPS
from vcformer.errors import ConfigurationError, ContractError, DimensionError
from vcformer.handlers.diagnostics_handler import model_grad_check, tiny_config
from vcformer.services.baselines import LinearBaseline, baseline_persistence
from vcformer.services.forecaster import VCformer, forward, loss_mse


def _small(**kwargs):
    base = dict(t=12, h=5, n=3, d=8, m=6, s=4, layers=2, dtype='float64', seed=2)
    base.update(kwargs)
    return ModelConfig(**base)


def _layernorm(x):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LAYERNORM_EPS)


def test_default_shape_contract(rng):
    model = VCformer(ModelConfig())
    params = model.init_params()
    assert all(v.dtype == np.float32 for v in params.values())
    out = model.predict(rng.standard_normal((96, 8)).astype(np.float32), params)
    assert out.shape == (96, 8)
    assert np.isfinite(out).all()


def test_batched_forward_matches_single_windows(rng):
    model = VCformer(_small())
    params = model.init_params()
    x = rng.standard_normal((3, 12, 3))
    batched = model.predict(x, params)
    assert batched.shape == (3, 5, 3)
    for b in range(3):
        np.testing.assert_allclose(batched[b], model.predict(x[b], params), atol=1e-12)


def test_wrong_window_shape_rejected(rng):
    model = VCformer(_small())
    with pytest.raises(DimensionError):
        model.predict(rng.standard_normal((11, 3)), model.init_params())


def test_init_is_deterministic_per_seed():
    model = VCformer(_small())
    a, b, c = model.init_params(4), model.init_params(4), model.init_params(5)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a['embed.w1'], c['embed.w1'])


def test_zero_blocks_is_embed_then_project(rng):
    cfg = _small(layers=0)
    model = VCformer(cfg)
    params = model.init_params()
    assert {k.split('.')[0] for k in params} == {'embed', 'proj'}
    x = rng.standard_normal((12, 3))
    bound = model.bind(Tape(), params, requires_grad=False)
    np.testing.assert_allclose(forward(x, bound, cfg).data, model.predict(x, params), atol=1e-14)


def test_residual_path_when_sublayers_output_zero(rng):
    cfg = _small(layers=1)
    model = VCformer(cfg)
    params = model.init_params()
    params['block.0.vca.w_o'] = np.zeros_like(params['block.0.vca.w_o'])
    params['block.0.ktd.dec.w2'] = np.zeros_like(params['block.0.ktd.dec.w2'])
    params['block.0.ktd.dec.b2'] = np.zeros_like(params['block.0.ktd.dec.b2'])
    bound = model.bind(Tape(), params, requires_grad=False)
    X = rng.standard_normal((3, 8))
    out = model.block(Variable.constant(X), bound, 0).data
    np.testing.assert_allclose(out, _layernorm(_layernorm(X)), atol=1e-10)


def test_tiny_model_gradients_match_finite_differences():
    report = model_grad_check(tiny_config())
    assert report.passed, report.to_dict()
    assert report.worst < 1e-4
    assert 'block.0.vca.lambda' in report.checks
    assert 'block.0.ktd.enc.w1' in report.checks


@pytest.mark.parametrize('vca_mode, ktd_mode, present, absent', [
    ('attention', 'ktd', 'block.0.attn.w_q', 'block.0.vca.w_q'),
    ('vca', 'ffn', 'block.0.ffn.w1', 'block.0.ktd.enc.w1'),
    ('none', 'ktd', 'block.0.ktd.enc.w1', 'block.0.norm1.gamma'),
    ('vca', 'none', 'block.0.vca.lambda', 'block.0.norm2.gamma'),
])
def test_ablation_modes(rng, vca_mode, ktd_mode, present, absent):
    model = VCformer(_small(vca_mode=vca_mode, ktd_mode=ktd_mode))
    params = model.init_params()
    assert present in params
    assert absent not in params
    out = model.predict(rng.standard_normal((12, 3)), params)
    assert out.shape == (5, 3)
    loss, grads = model.loss_and_grads(params, rng.standard_normal((2, 12, 3)), rng.standard_normal((2, 5, 3)))
    assert np.isfinite(loss)
    assert set(grads) == set(params)


def test_ablation_gradients_match_finite_differences():
    cfg = tiny_config()
    cfg.vca_mode, cfg.ktd_mode = 'attention', 'ffn'
    assert model_grad_check(cfg).passed


def test_corr_map_shape_and_errors(rng):
    model = VCformer(_small())
    params = model.init_params()
    x = rng.standard_normal((12, 3))
    assert model.corr_map(x, params, layer=1).shape == (3, 3)
    with pytest.raises(ConfigurationError):
        model.corr_map(x, params, layer=2)
    attn = VCformer(_small(vca_mode='attention'))
    with pytest.raises(ConfigurationError):
        attn.corr_map(x, attn.init_params())


def test_loss_mse_values():
    assert float(loss_mse(np.ones((4, 2)), np.ones((4, 2))).data) == 0.0
    assert float(loss_mse(np.zeros((4, 2)), np.full((4, 2), 2.0)).data) == pytest.approx(4.0)
    with pytest.raises(DimensionError):
        loss_mse(np.zeros((4, 2)), np.zeros((2, 4)))


def test_loss_mse_matches_an_explicit_loop(rng):
    pred = rng.standard_normal((3, 5, 4))
    target = rng.standard_normal((3, 5, 4))
    total = 0.0
    for b in range(3):
        for i in range(5):
            for j in range(4):
                total += (pred[b, i, j] - target[b, i, j]) ** 2
    assert float(loss_mse(pred, target).data) == pytest.approx(total / pred.size, rel=1e-12)


def test_persistence_on_a_ramp():
    t, h = 6, 4
    series = np.repeat(np.arange(t + h, dtype=float)[:, None], 2, axis=1)
    pred = baseline_persistence(series[:t], h)
    np.testing.assert_array_equal(pred, np.full((h, 2), t - 1.0))
    mse = np.mean((pred - series[t:]) ** 2)
    assert mse == pytest.approx(np.mean(np.arange(1, h + 1) ** 2))


def test_persistence_on_a_constant_series():
    series = np.tile([[3.5, -1.0, 0.0]], (8, 1))
    np.testing.assert_array_equal(baseline_persistence(series, 5), np.tile([[3.5, -1.0, 0.0]], (5, 1)))
    batch = np.stack([series, 2 * series])
    np.testing.assert_array_equal(baseline_persistence(batch, 2)[1], np.tile([[7.0, -2.0, 0.0]], (2, 1)))


def test_persistence_rejects_bad_horizon():
    with pytest.raises(DimensionError):
        baseline_persistence(np.ones((3, 2)), 0)


def test_linear_baseline_recovers_per_channel_maps(rng):
    t, h, n = 5, 3, 2
    weights = [rng.standard_normal((t, h)) for _ in range(n)]
    bias = [rng.standard_normal(h) for _ in range(n)]
    inputs = rng.standard_normal((300, t, n))
    targets = np.stack([inputs[:, :, j] @ weights[j] + bias[j] for j in range(n)], axis=-1)
    model = LinearBaseline(t, h, alpha=1e-8, per_channel=True).fit(inputs, targets)
    for j in range(n):
        w, b = model.coefficients(j)
        np.testing.assert_allclose(w, weights[j], atol=1e-5)
        np.testing.assert_allclose(b, bias[j], atol=1e-5)
    np.testing.assert_allclose(model.predict(inputs[0]), targets[0], atol=1e-5)


def test_linear_baseline_shared_map_shapes(rng):
    inputs = rng.standard_normal((40, 6, 3))
    targets = rng.standard_normal((40, 2, 3))
    model = LinearBaseline(6, 2).fit(inputs, targets)
    assert model.predict(inputs).shape == (40, 2, 3)
    w, b = model.coefficients()
    assert w.shape == (6, 2) and b.shape == (2,)


def test_linear_baseline_used_before_fit():
    with pytest.raises(ContractError):
        LinearBaseline(4, 2).predict(np.ones((4, 1)))


def test_linear_baseline_zero_variance_channel_predicts_its_level(rng):
    inputs = rng.standard_normal((60, 5, 2))
    targets = rng.standard_normal((60, 3, 2))
    inputs[:, :, 1] = 4.25
    targets[:, :, 1] = 4.25
    model = LinearBaseline(5, 3, per_channel=True).fit(inputs, targets)
    w, b = model.coefficients(1)
    np.testing.assert_allclose(w, 0.0, atol=1e-10)
    np.testing.assert_allclose(b, 4.25, atol=1e-10)
    np.testing.assert_allclose(model.predict(inputs)[:, :, 1], 4.25, atol=1e-10)


def test_linear_baseline_heavy_ridge_collapses_to_the_mean(rng):
    inputs = rng.standard_normal((200, 6, 3))
    targets = rng.standard_normal((200, 2, 3)) + np.array([[1.0], [-2.0]])
    model = LinearBaseline(6, 2, alpha=1e12).fit(inputs, targets)
    w, b = model.coefficients()
    assert np.max(np.abs(w)) < 1e-6
    expected = targets.transpose(0, 2, 1).reshape(-1, 2).mean(axis=0)
    np.testing.assert_allclose(b, expected, atol=1e-8)
    pred = model.predict(inputs[:4])
    np.testing.assert_allclose(pred, np.broadcast_to(expected[None, :, None], pred.shape), atol=1e-6)
