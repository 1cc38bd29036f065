"""Variable correlation attention over variate tokens."""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from . import lagcorr
from .nn import uniform
from ..core import functional as F
from ..core.autodiff import Variable
from ..errors import DimensionError

W_O_NOISE = 0.01


@dataclass
class VcaParams:
    """Square projections of width D plus the lag-aggregation weights (one per token-axis lag)."""

    w_q: Variable
    w_k: Variable
    w_v: Variable
    w_o: Variable
    lam: Variable

    @classmethod
    def from_mapping(cls, p: Mapping[str, Variable]) -> 'VcaParams':
        return cls(p['w_q'], p['w_k'], p['w_v'], p['w_o'], p['lambda'])

    @property
    def width(self) -> int:
        return self.w_q.shape[0]


def init_vca_params(rng: np.random.Generator, d: int, prefix: str) -> Dict[str, np.ndarray]:
    """Fan-in uniform projections; output projection starts near the identity."""
    return {
        f"{prefix}.w_q": uniform(rng, (d, d), d),
        f"{prefix}.w_k": uniform(rng, (d, d), d),
        f"{prefix}.w_v": uniform(rng, (d, d), d),
        f"{prefix}.w_o": np.eye(d) + W_O_NOISE * uniform(rng, (d, d), d),
        f"{prefix}.lambda": lagcorr.init_lag_weights(d),
    }


def _check_width(X: Variable, p: VcaParams) -> None:
    if X.value.ndim < 2 or X.shape[-1] != p.width:
        raise DimensionError("token width does not match the layer", X.shape, p.w_q.shape)


def vca_scores(X: Variable, p: VcaParams, naive: bool = False) -> Variable:
    """Pre-softmax N x N map: lag correlations of queries against keys, aggregated over lags."""
    _check_width(X, p)
    Q = F.matmul(X, p.w_q)
    K = F.matmul(X, p.w_k)
    corr = lagcorr.lagged_corr_naive(Q, K) if naive else lagcorr.lagged_corr_fft(Q, K)
    return lagcorr.aggregate_scores(corr, p.lam)


def vca_forward(X: Variable, p: VcaParams, capture: Optional[Dict[str, Variable]] = None,
                key: str = 'corr', naive: bool = False) -> Variable:
    """
    Attend across variates with lag-correlation scores.

    Args:
        X: Tokens (..., N, D)
        p: Layer parameters
        capture: When given, receives the pre-softmax score map under ``key``
        key: Capture key
        naive: Use the roll-based correlation path instead of the spectral one

    Returns:
        Mixed tokens (..., N, D)
    """
    X = X if isinstance(X, Variable) else Variable.constant(X)
    scores = vca_scores(X, p, naive=naive)
    if capture is not None:
        capture[key] = scores
    attn = F.softmax_rows(scores)
    V = F.matmul(X, p.w_v)
    return F.matmul(F.matmul(attn, V), p.w_o)


def export_corr_map(X, p: VcaParams) -> np.ndarray:
    """The layer's pre-softmax score map as a plain array."""
    X = X if isinstance(X, Variable) else Variable.constant(X)
    return vca_scores(X, p).value.numpy()
