import logging

import numpy as np
import pandas as pd
import pytest

from vcformer.errors import DimensionError
from vcformer.services.analytics_service import AnalyticsService


@pytest.fixture
def analytics():
    return AnalyticsService()


def test_identical_series_correlate_fully(analytics, rng):
    x = rng.standard_normal(50)
    assert analytics.pearson(x, x) == pytest.approx(1.0, abs=1e-12)
    assert analytics.pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)


def test_matches_numpy(analytics, rng):
    x, y = rng.standard_normal(40), rng.standard_normal(40)
    assert analytics.pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_constant_series_is_zero_with_a_warning(analytics, caplog):
    with caplog.at_level(logging.WARNING):
        assert analytics.pearson(np.ones(10), np.arange(10.0)) == 0.0
    assert 'zero-variance' in caplog.text


def test_length_mismatch_rejected(analytics):
    with pytest.raises(DimensionError):
        analytics.pearson(np.ones(3), np.ones(4))


def test_map_is_symmetric_with_unit_diagonal(analytics, rng):
    matrix = rng.standard_normal((30, 4))
    out = analytics.pearson_map(matrix)
    np.testing.assert_array_equal(out, out.T)
    np.testing.assert_array_equal(np.diag(out), np.ones(4))
    np.testing.assert_allclose(out, np.corrcoef(matrix, rowvar=False), atol=1e-12)


def test_map_zeroes_constant_channels(analytics, rng, caplog):
    matrix = np.column_stack([rng.standard_normal(20), np.full(20, 4.0), rng.standard_normal(20)])
    with caplog.at_level(logging.WARNING):
        out = analytics.pearson_map(matrix, ['a', 'flat', 'c'])
    assert np.all(out[1] == 0.0) and np.all(out[:, 1] == 0.0)
    assert out[0, 0] == 1.0
    assert 'flat' in caplog.text


def test_frame_keeps_labels(analytics, rng):
    frame = pd.DataFrame(rng.standard_normal((25, 3)), columns=['x', 'y', 'z'])
    out = analytics.pearson_frame(frame)
    assert list(out.columns) == ['x', 'y', 'z']
    assert out.loc['y', 'y'] == 1.0
