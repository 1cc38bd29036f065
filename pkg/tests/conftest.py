"""Shared fixtures for the vcformer test suite."""

import os

# Console-only logging and no run registry unless a test opts in; must precede vcformer imports.
os.environ['LOG_FILE'] = ''
os.environ['RUNS_DATABASE_URL'] = ''

import numpy as np
import pytest

from vcformer.services.dataset_service import RawSeries


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow acceptance checks')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_csv(tmp_path):
    """Write text to a CSV under tmp_path and return its path."""
    def _write(text: str, name: str = 'data.csv') -> str:
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return str(path)
    return _write


@pytest.fixture
def ramp_series():
    """200 timesteps x 3 channels of distinct smooth signals."""
    t = np.arange(200, dtype=np.float64)
    values = np.stack([np.sin(t / 7.0), np.cos(t / 11.0) + 0.1 * t / 200, np.sin(t / 5.0 + 1.0)], axis=1)
    return RawSeries(values, ['a', 'b', 'c'])
