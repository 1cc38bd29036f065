"""Reference forecasters used as yardsticks for the learned model."""

from typing import List, Optional, Tuple

import numpy as np
from sklearn.linear_model import Ridge

from ..errors import ContractError, DimensionError
from ..utils.logger import setup_logger

logger = setup_logger('baselines')


def baseline_persistence(x: np.ndarray, h: int) -> np.ndarray:
    """Repeat the last observed row ``h`` times: (..., T, N) -> (..., H, N)."""
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-2] == 0:
        raise DimensionError("persistence needs a (..., T, N) window", x.shape)
    if h <= 0:
        raise DimensionError(f"horizon must be positive, got {h}")
    last = x[..., -1:, :]
    return np.repeat(last, h, axis=-2)


class LinearBaseline:
    """
    Channel-independent ridge map from a T-step window to an H-step forecast.

    Every channel is treated as its own univariate series, so no cross-channel
    information is available. By default one ``W (T x H)`` and bias are shared by
    all channels; ``per_channel=True`` fits one pair per channel.
    """

    def __init__(self, t: int, h: int, alpha: float = 1e-3, per_channel: bool = False):
        self.t = t
        self.h = h
        self.alpha = alpha
        self.per_channel = per_channel
        self.models: List[Ridge] = []

    @property
    def fitted(self) -> bool:
        return bool(self.models)

    def _check(self, x: np.ndarray, length: int, what: str) -> None:
        if x.ndim != 3 or x.shape[1] != length:
            raise DimensionError(f"{what} must be (B, {length}, N)", x.shape)

    @staticmethod
    def _rows(x: np.ndarray) -> np.ndarray:
        # (B, L, N) -> (B*N, L), one row per window and channel
        return np.transpose(x, (0, 2, 1)).reshape(-1, x.shape[1])

    def fit(self, inputs: np.ndarray, targets: np.ndarray) -> 'LinearBaseline':
        """
        Closed-form ridge fit over training windows.

        Args:
            inputs: (B, T, N) look-back windows
            targets: (B, H, N) matching future windows

        Returns:
            self
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        self._check(inputs, self.t, "inputs")
        self._check(targets, self.h, "targets")
        if inputs.shape[0] == 0:
            raise DimensionError("no training windows", inputs.shape)
        if self.per_channel:
            self.models = [
                Ridge(alpha=self.alpha).fit(inputs[:, :, j], targets[:, :, j])
                for j in range(inputs.shape[2])
            ]
        else:
            self.models = [Ridge(alpha=self.alpha).fit(self._rows(inputs), self._rows(targets))]
        logger.info(f"linear baseline fitted on {inputs.shape[0]} windows "
                    f"({'per-channel' if self.per_channel else 'shared'}, alpha={self.alpha})")
        return self

    def fit_windows(self, windows) -> 'LinearBaseline':
        """Fit on every window a sampler yields, in sequential order."""
        inputs, targets = windows.arrays()
        return self.fit(inputs, targets)

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise ContractError("linear baseline used before fit")
        inputs = np.asarray(inputs, dtype=np.float64)
        single = inputs.ndim == 2
        if single:
            inputs = inputs[None]
        self._check(inputs, self.t, "inputs")
        b, _, n = inputs.shape
        if self.per_channel:
            if n != len(self.models):
                raise DimensionError("channel count differs from fit", inputs.shape, (len(self.models),))
            out = np.stack([m.predict(inputs[:, :, j]) for j, m in enumerate(self.models)], axis=-1)
        else:
            flat = self.models[0].predict(self._rows(inputs))
            out = np.transpose(flat.reshape(b, n, self.h), (0, 2, 1))
        return out[0] if single else out

    def coefficients(self, channel: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """``(W (T x H), b (H,))`` of the shared map or of one channel's map."""
        if not self.fitted:
            raise ContractError("linear baseline used before fit")
        model = self.models[channel if self.per_channel and channel is not None else 0]
        return model.coef_.T.copy(), np.atleast_1d(model.intercept_).copy()
