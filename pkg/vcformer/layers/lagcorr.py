"""Lagged cross-correlation between every query/key pair.

``R[..., i, j, tau - 1] = (1/L) * sum_t Q[i, t] * K[j, (t - tau) mod L]`` for
``tau = 1..L``. Two paths compute it: a reference one that literally rolls the
keys once per lag, and a spectral one that gets all lags from one product of
spectra. Both are circular over exactly ``L`` points, never zero-padded.
"""

import time
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..core import functional as F
from ..core.autodiff import Variable
from ..core.tensor import Tensor
from ..errors import DimensionError, NumericError
from ..utils.logger import setup_logger

logger = setup_logger('lagcorr')

# Variable of shape (..., N, N, L); lag tau lives at index tau - 1
LagCorrTensor = Variable

EQUIVALENCE_TOL = 1e-9


def _var(x: Union[Variable, Tensor, np.ndarray]) -> Variable:
    return x if isinstance(x, Variable) else Variable.constant(x)


def _check_pair(Q: Variable, K: Variable) -> None:
    if Q.value.ndim < 2 or Q.shape != K.shape:
        raise DimensionError("queries and keys must share shape (..., N, L)", Q.shape, K.shape)


def init_lag_weights(length: int) -> np.ndarray:
    """Uniform 1/L initialization of the aggregation weights."""
    return np.full(length, 1.0 / length)


def lagged_corr_naive(Q, K) -> LagCorrTensor:
    """Reference path: one circular roll and one matrix product per lag."""
    Q, K = _var(Q), _var(K)
    _check_pair(Q, K)
    length = Q.shape[-1]
    slices = [F.matmul(Q, F.transpose(F.roll_last_axis(K, tau))) for tau in range(1, length + 1)]
    return F.scale(F.stack(slices, axis=-1), 1.0 / length)


def lagged_corr_fft(Q, K) -> LagCorrTensor:
    """Spectral path: ``(1/L) * irfft(rfft(q_i) * conj(rfft(k_j)))`` for all pairs at once."""
    Q, K = _var(Q), _var(K)
    _check_pair(Q, K)
    lead, n, length = Q.shape[:-2], Q.shape[-2], Q.shape[-1]
    bins = length // 2 + 1
    fq = F.reshape(F.rfft_last_axis(Q), lead + (n, 1, bins))
    fk = F.reshape(F.conj(F.rfft_last_axis(K)), lead + (1, n, bins))
    circ = F.irfft_last_axis(F.mul(fq, fk), length)
    # circ[s] holds offset s; lag tau is stored at index tau - 1
    return F.scale(F.roll_last_axis(circ, -1), 1.0 / length)


def aggregate_scores(R: LagCorrTensor, weights) -> Variable:
    """``COR[i, j] = sum_tau lambda_tau * R[i, j, tau]``."""
    R, weights = _var(R), _var(weights)
    length = R.shape[-1]
    if weights.shape != (length,):
        raise DimensionError("lag weights must match the lag axis", R.shape, weights.shape)
    scores = F.matmul(R, F.reshape(weights, (length, 1)))
    return F.reshape(scores, R.shape[:-1])


@dataclass
class BenchRow:
    n: int
    length: int
    naive_ns: int
    fft_ns: int
    max_abs_diff: float

    @property
    def speedup(self) -> float:
        return self.naive_ns / max(self.fft_ns, 1)


def _time_ns(fn, repeats: int) -> Tuple[int, Variable]:
    best, out = None, None
    for _ in range(repeats):
        start = time.perf_counter_ns()
        out = fn()
        elapsed = time.perf_counter_ns() - start
        best = elapsed if best is None else min(best, elapsed)
    return best, out


def parse_sizes(spec: str) -> List[Tuple[int, int]]:
    """``"8x64,8x4096"`` -> ``[(8, 64), (8, 4096)]``."""
    sizes = []
    for item in spec.split(','):
        item = item.strip()
        if not item:
            continue
        n, _, length = item.lower().partition('x')
        sizes.append((int(n), int(length)))
    return sizes


def bench_lagcorr(sizes: Iterable[Sequence[int]], repeats: int = 3, seed: int = 0) -> List[BenchRow]:
    """
    Time both correlation paths over a size sweep.

    Args:
        sizes: (N, L) pairs
        repeats: Timing repetitions per path; the fastest is kept
        seed: Seed for the random queries/keys

    Returns:
        One BenchRow per size, with the paths cross-checked against each other
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n, length in sizes:
        q = Tensor(rng.standard_normal((n, length)))
        k = Tensor(rng.standard_normal((n, length)))
        naive_ns, naive = _time_ns(lambda: lagged_corr_naive(q, k), repeats)
        fft_ns, fast = _time_ns(lambda: lagged_corr_fft(q, k), repeats)
        diff = float(np.max(np.abs(naive.data - fast.data)))
        if diff > EQUIVALENCE_TOL:
            raise NumericError(f"lag-correlation paths disagree by {diff:.3e} at N={n}, L={length}")
        row = BenchRow(n, length, naive_ns, fft_ns, diff)
        logger.info(f"bench N={n} L={length}: naive={naive_ns}ns fft={fft_ns}ns ({row.speedup:.1f}x)")
        rows.append(row)
    return rows
