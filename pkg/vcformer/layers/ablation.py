"""Stand-in sublayers for ablating the encoder block.

``attention`` swaps variable correlation attention for ordinary dot-product
self-attention over the same variate tokens; ``ffn`` swaps the Koopman detector
for a position-wise feed-forward network.
"""

from typing import Dict, Mapping

import numpy as np

from .nn import init_mlp, mlp, uniform
from .vca import W_O_NOISE
from ..core import functional as F
from ..core.autodiff import Variable


def init_attention_params(rng: np.random.Generator, d: int, prefix: str) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}.w_q": uniform(rng, (d, d), d),
        f"{prefix}.w_k": uniform(rng, (d, d), d),
        f"{prefix}.w_v": uniform(rng, (d, d), d),
        f"{prefix}.w_o": np.eye(d) + W_O_NOISE * uniform(rng, (d, d), d),
    }


def attention_forward(X: Variable, p: Mapping[str, Variable]) -> Variable:
    """softmax(Q K^T / sqrt(D)) V W_o over variate tokens."""
    d = X.shape[-1]
    Q = F.matmul(X, p['w_q'])
    K = F.matmul(X, p['w_k'])
    V = F.matmul(X, p['w_v'])
    scores = F.scale(F.matmul(Q, F.transpose(K)), 1.0 / np.sqrt(d))
    return F.matmul(F.matmul(F.softmax_rows(scores), V), p['w_o'])


def init_ffn_params(rng: np.random.Generator, d: int, hidden: int, prefix: str) -> Dict[str, np.ndarray]:
    return init_mlp(rng, d, hidden, d, prefix)


def ffn_forward(X: Variable, p: Mapping[str, Variable], activation: str = 'gelu') -> Variable:
    return mlp(X, p, activation)
