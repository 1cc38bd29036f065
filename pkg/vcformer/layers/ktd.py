"""Koopman temporal detector: segment, encode, fit a linear operator, roll it forward, decode.

Snapshots are stored as columns of ``Z (M x n)``. The finite operator
``K = Z_fore * pinv(Z_back)`` is never formed; it is kept as ``K = Z_fore @ C``
with ``C`` of shape ``(n-1) x M`` obtained from the smaller of the two ridge
Gram systems:

* ``n - 1 <= M``: ``C = (Z_back^T Z_back + eps I)^-1 Z_back^T``
* ``n - 1 >  M``: ``C = Z_back^T (Z_back Z_back^T + eps I)^-1``

Both agree for ``eps > 0``; with ``eps = 0`` the chosen Gram is the one that can be
full rank.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np

from .nn import init_mlp, mlp
from ..core import functional as F
from ..core.autodiff import Variable
from ..errors import ConfigurationError, DimensionError

DEFAULT_RIDGE_EPS = 1e-5


@dataclass
class KtdParams:
    """Encoder R^{N*S} -> R^M and decoder R^M -> R^{N*S}, each one hidden layer of width M.

    With ``identity=True`` both maps are the identity (so M == N*S); used to
    test the operator fit in isolation.
    """

    encoder: Optional[Mapping[str, Variable]]
    decoder: Optional[Mapping[str, Variable]]
    eps: float = DEFAULT_RIDGE_EPS
    activation: str = 'gelu'
    identity: bool = False

    @classmethod
    def from_mapping(cls, p: Mapping[str, Variable], eps: float = DEFAULT_RIDGE_EPS,
                     activation: str = 'gelu') -> 'KtdParams':
        enc = {k[4:]: v for k, v in p.items() if k.startswith('enc.')}
        dec = {k[4:]: v for k, v in p.items() if k.startswith('dec.')}
        return cls(enc, dec, eps, activation)

    @classmethod
    def identity_codec(cls, eps: float = 0.0) -> 'KtdParams':
        return cls(None, None, eps, identity=True)

    def encode(self, x: Variable) -> Variable:
        return x if self.identity else mlp(x, self.encoder, self.activation)

    def decode(self, z: Variable) -> Variable:
        return z if self.identity else mlp(z, self.decoder, self.activation)


def init_ktd_params(rng: np.random.Generator, n_vars: int, seg_len: int, m: int,
                    prefix: str) -> Dict[str, np.ndarray]:
    width = n_vars * seg_len
    params = init_mlp(rng, width, m, m, f"{prefix}.enc")
    params.update(init_mlp(rng, m, m, width, f"{prefix}.dec"))
    return params


def check_segmentation(d: int, seg_len: int) -> int:
    """Number of segments ``n = D / S``; at least two are needed to fit an operator."""
    if seg_len <= 0 or d % seg_len != 0:
        raise ConfigurationError(f"segment length {seg_len} does not divide token width {d}")
    n = d // seg_len
    if n < 2:
        raise ConfigurationError(
            f"token width {d} with segment length {seg_len} gives {n} segment; "
            "need at least two snapshots to fit K"
        )
    return n


def segment(X, seg_len: int) -> List[Variable]:
    """Split the token axis into ``D / S`` consecutive blocks of shape (..., N, S)."""
    X = X if isinstance(X, Variable) else Variable.constant(X)
    n = check_segmentation(X.shape[-1], seg_len)
    return [F.slice_last_axis(X, j * seg_len, (j + 1) * seg_len) for j in range(n)]


def desegment(segments: List[Variable]) -> Variable:
    return F.concat(segments, axis=-1)


@dataclass
class SnapshotMatrix:
    """Segment embeddings as columns: ``z`` has shape (..., M, n)."""

    z: Variable

    def __post_init__(self):
        if not isinstance(self.z, Variable):
            self.z = Variable.constant(self.z)
        if self.z.value.ndim < 2 or self.count < 2:
            raise ConfigurationError(f"need at least two snapshots to fit K, got shape {self.z.shape}")

    @property
    def width(self) -> int:
        return self.z.shape[-2]

    @property
    def count(self) -> int:
        return self.z.shape[-1]

    @property
    def back(self) -> Variable:
        return F.slice_last_axis(self.z, 0, self.count - 1)

    @property
    def fore(self) -> Variable:
        return F.slice_last_axis(self.z, 1, self.count)


@dataclass
class KoopmanOperator:
    """Factored finite Koopman operator ``K = fore @ coef``."""

    fore: Variable
    coef: Variable

    def apply(self, z: Variable) -> Variable:
        """``K z`` for columns ``z`` of shape (..., M, k) at O(M * n) per column."""
        return F.matmul(self.fore, F.matmul(self.coef, z))

    def rollout(self, z0: Variable, steps: int) -> List[Variable]:
        """``[K z0, K^2 z0, ..., K^steps z0]``."""
        out = []
        z = z0
        for _ in range(steps):
            z = self.apply(z)
            out.append(z)
        return out

    def dense(self) -> np.ndarray:
        """Materialized M x M matrix; for inspection and tests only."""
        return (self.fore.data @ self.coef.data).copy()


def _ridge_eye(k: int, eps: float, dtype) -> Variable:
    return Variable.constant(np.eye(k, dtype=dtype) * eps)


def fit_koopman(Z, eps: float = DEFAULT_RIDGE_EPS) -> KoopmanOperator:
    """
    Least-squares operator mapping each snapshot to the next.

    Args:
        Z: SnapshotMatrix (or array/Variable of shape (..., M, n))
        eps: Ridge regularization; 0 gives the exact pseudoinverse solution when the Gram is full rank

    Returns:
        KoopmanOperator in factored form
    """
    snaps = Z if isinstance(Z, SnapshotMatrix) else SnapshotMatrix(Z)
    back, fore = snaps.back, snaps.fore
    dtype = back.data.dtype
    k, m = snaps.count - 1, snaps.width
    back_t = F.transpose(back)
    if k <= m:
        gram = F.add(F.matmul(back_t, back), _ridge_eye(k, eps, dtype))
        coef = F.linear_solve(gram, back_t)
    else:
        gram = F.add(F.matmul(back, back_t), _ridge_eye(m, eps, dtype))
        coef = F.transpose(F.linear_solve(gram, back))
    return KoopmanOperator(fore, coef)


def ktd_forward(X, p: KtdParams, seg_len: int) -> Variable:
    """
    Encode the n segments of each token row, fit K on consecutive pairs, predict the
    next n segment embeddings from the last one, and decode them back to (..., N, D).
    """
    X = X if isinstance(X, Variable) else Variable.constant(X)
    if X.value.ndim < 2:
        raise DimensionError("ktd input must be (..., N, D)", X.shape)
    lead, n_vars, d = X.shape[:-2], X.shape[-2], X.shape[-1]
    segs = segment(X, seg_len)
    n = len(segs)
    width = n_vars * seg_len

    # variate-major flattening of each segment: (..., n, N*S)
    flat = F.stack([F.reshape(s, lead + (width,)) for s in segs], axis=-2)
    Z = F.transpose(p.encode(flat))

    op = fit_koopman(SnapshotMatrix(Z), p.eps)
    last = F.slice_last_axis(Z, n - 1, n)
    predicted = F.concat(op.rollout(last, n), axis=-1)

    decoded = p.decode(F.transpose(predicted))
    blocks = F.reshape(decoded, lead + (n, n_vars, seg_len))
    nl = len(lead)
    axes = tuple(range(nl)) + (nl + 1, nl, nl + 2)
    return F.reshape(F.permute(blocks, axes), lead + (n_vars, d))
