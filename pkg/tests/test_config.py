import pytest

from vcformer.config import ETT_RATIOS, DataConfig, ModelConfig, RunConfig, dataset_ratios, field_names
from vcformer.errors import ConfigurationError


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert (cfg.model.t, cfg.model.h, cfg.model.d, cfg.model.s) == (96, 96, 128, 32)
    assert cfg.train.lr == pytest.approx(1e-3)


def test_json_round_trip():
    cfg = RunConfig(seed=7).with_overrides({'model.d': '64', 'data.ratios': '0.7,0.1,0.2'})
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.model.seed == 7


def test_overrides_parse_field_types():
    cfg = RunConfig().with_overrides({
        'model.layers': '3', 'train.lr': '5e-4', 'train.prefetch': 'true',
        'data.csv_path': 'x.csv', 'model.seed': '4',
    })
    assert cfg.model.layers == 3
    assert cfg.train.lr == pytest.approx(5e-4)
    assert cfg.train.prefetch is True
    assert cfg.data.csv_path == 'x.csv'
    assert cfg.seed == 4 and cfg.model.seed == 4


@pytest.mark.parametrize('key', ['model.width', 'optimizer.lr', 'train'])
def test_unknown_keys_rejected(key):
    with pytest.raises(ConfigurationError, match='unknown config key'):
        RunConfig().with_overrides({key: '1'})


def test_unknown_json_key_rejected():
    with pytest.raises(ConfigurationError):
        RunConfig.from_json('{"model": {"t": 8}, "extra": 1}')
    with pytest.raises(ConfigurationError):
        RunConfig.from_json('not json')


def test_unparseable_value_rejected():
    with pytest.raises(ConfigurationError, match='model.d'):
        RunConfig().with_overrides({'model.d': 'wide'})


@pytest.mark.parametrize('changes', [
    {'d': 96, 's': 32 + 8},
    {'d': 32, 's': 32},
    {'vca_mode': 'lstm'},
    {'dtype': 'float16'},
    {'t': 0},
])
def test_invalid_model_config(changes):
    with pytest.raises(ConfigurationError):
        ModelConfig(**changes).validate()


def test_segment_rule_ignored_without_the_detector():
    ModelConfig(d=32, s=32, ktd_mode='ffn').validate()


def test_dataset_family_ratios():
    assert dataset_ratios('ETTm2') == ETT_RATIOS
    assert dataset_ratios('weather') == (0.6, 0.2, 0.2)
    assert DataConfig(dataset_name='ETTh1').split_ratios == ETT_RATIOS
    with pytest.raises(ConfigurationError):
        DataConfig(ratios=(0.5, 0.4, 0.2)).validate()


def test_hash_ignores_seed_only():
    base = RunConfig(seed=1)
    assert base.config_hash() == RunConfig(seed=2).config_hash()
    assert base.config_hash() != base.with_overrides({'model.d': '64'}).config_hash()


def test_field_names_cover_every_section():
    names = field_names()
    assert names['model.d'] is int
    assert names['train.lr'] is float
    assert 'data.ratios' in names and 'seed' in names
