"""Correlation analytics over multivariate series."""

from typing import Optional

import numpy as np
import pandas as pd

from ..errors import DimensionError
from ..utils.logger import setup_logger

logger = setup_logger('analytics_service')


class AnalyticsService:
    """Pearson correlation between channels; zero-variance channels correlate as 0."""

    def pearson(self, x: np.ndarray, y: np.ndarray) -> float:
        """
        Pearson coefficient of two equal-length series.

        Args:
            x: First series
            y: Second series

        Returns:
            r in [-1, 1]; 0 (with a warning) when either series is constant
        """
        x = np.asarray(x, dtype=np.float64).ravel()
        y = np.asarray(y, dtype=np.float64).ravel()
        if x.shape != y.shape or x.size == 0:
            raise DimensionError("pearson needs two non-empty series of equal length", x.shape, y.shape)
        dx = x - x.mean()
        dy = y - y.mean()
        denom = np.sqrt(np.sum(dx * dx)) * np.sqrt(np.sum(dy * dy))
        if denom == 0.0:
            logger.warning("pearson: zero-variance series, correlation defined as 0")
            return 0.0
        return float(np.sum(dx * dy) / denom)

    def pearson_map(self, matrix: np.ndarray, columns: Optional[list] = None) -> np.ndarray:
        """
        N x N Pearson map of the columns of a T x N matrix.

        Args:
            matrix: Observations in rows, channels in columns
            columns: Channel names, used only in warnings

        Returns:
            Symmetric matrix with unit diagonal; rows/columns of constant channels are 0
        """
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise DimensionError("pearson_map needs a T x N matrix", matrix.shape)
        centered = matrix - matrix.mean(axis=0)
        norms = np.sqrt(np.sum(centered * centered, axis=0))
        constant = norms == 0.0
        if constant.any():
            names = columns or [str(j) for j in range(matrix.shape[1])]
            flagged = [names[j] for j in np.flatnonzero(constant)]
            logger.warning(f"pearson_map: zero-variance channels {flagged}, correlations defined as 0")
        safe = np.where(constant, 1.0, norms)
        unit = centered / safe
        out = unit.T @ unit
        out = (out + out.T) / 2.0
        np.fill_diagonal(out, np.where(constant, 0.0, 1.0))
        out[constant, :] = 0.0
        out[:, constant] = 0.0
        return out

    def pearson_frame(self, frame: pd.DataFrame) -> pd.DataFrame:
        """``pearson_map`` of a DataFrame, labelled by its columns."""
        values = self.pearson_map(frame.to_numpy(), list(frame.columns))
        return pd.DataFrame(values, index=frame.columns, columns=frame.columns)
