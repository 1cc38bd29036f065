"""Dense immutable arrays and the primitive operations the model composes.

A ``Tensor`` wraps a read-only, row-major numpy buffer. Every operation returns a
new tensor; inputs are never mutated, so values can be shared across threads.
Leading axes broadcast (a batch of ``N x D`` tokens against a ``D x D`` weight),
and the last axis is always the lag/time axis.
"""

from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from ..errors import DimensionError, NumericError

DTYPES = {
    'float32': np.float32,
    'float64': np.float64,
}

DEFAULT_DTYPE = 'float64'
LAYERNORM_EPS = 1e-5

ArrayLike = Union['Tensor', np.ndarray, Sequence, float, int]


class Tensor:
    """Immutable dense array with shape and dtype tag."""

    __slots__ = ('_data',)

    def __init__(self, data: ArrayLike, dtype: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.array(data, dtype=DTYPES[dtype])
        else:
            arr = np.array(data)
            if not np.iscomplexobj(arr) and arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float64)
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def wrap(cls, arr: np.ndarray) -> 'Tensor':
        """Adopt an array without copying; the caller must not write to it afterwards."""
        out = object.__new__(ComplexTensor if np.iscomplexobj(arr) else Tensor)
        if arr.flags.writeable:
            arr.setflags(write=False)
        out._data = arr
        return out

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def dtype(self) -> str:
        return str(self._data.dtype)

    def numpy(self) -> np.ndarray:
        """Writable copy of the buffer."""
        return self._data.copy()

    def item(self) -> float:
        return self._data.item()

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


class ComplexTensor(Tensor):
    """Tensor holding a complex spectrum (real and imaginary parts paired per entry)."""

    __slots__ = ()

    @property
    def real(self) -> Tensor:
        return Tensor.wrap(np.ascontiguousarray(self._data.real))

    @property
    def imag(self) -> Tensor:
        return Tensor.wrap(np.ascontiguousarray(self._data.imag))

    def __repr__(self) -> str:
        return f"ComplexTensor(shape={self.shape}, dtype={self.dtype})"


def as_tensor(value: ArrayLike, dtype: Optional[str] = None) -> Tensor:
    if isinstance(value, Tensor) and (dtype is None or value.dtype == dtype):
        return value
    return Tensor(value, dtype=dtype)


def zeros(shape: Iterable[int], dtype: str = DEFAULT_DTYPE) -> Tensor:
    return Tensor.wrap(np.zeros(tuple(shape), dtype=DTYPES[dtype]))


def ones(shape: Iterable[int], dtype: str = DEFAULT_DTYPE) -> Tensor:
    return Tensor.wrap(np.ones(tuple(shape), dtype=DTYPES[dtype]))


def eye(n: int, dtype: str = DEFAULT_DTYPE) -> Tensor:
    return Tensor.wrap(np.eye(n, dtype=DTYPES[dtype]))


def broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes are not compatible", a.shape, b.shape) from None


# --- Linear algebra ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul inner extents differ", a.shape, b.shape)
    try:
        return Tensor.wrap(np.matmul(a.data, b.data))
    except ValueError:
        raise DimensionError("matmul batch extents differ", a.shape, b.shape) from None


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise DimensionError("transpose needs at least two axes", a.shape)
    return Tensor.wrap(np.ascontiguousarray(np.swapaxes(a.data, -1, -2)))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        return Tensor.wrap(np.ascontiguousarray(a.data).reshape(tuple(shape)))
    except ValueError:
        raise DimensionError("reshape changes the element count", a.shape, tuple(shape)) from None


# --- Elementwise ---

def add(a: Tensor, b: Tensor) -> Tensor:
    broadcast_shape('add', a, b)
    return Tensor.wrap(a.data + b.data)


def sub(a: Tensor, b: Tensor) -> Tensor:
    broadcast_shape('sub', a, b)
    return Tensor.wrap(a.data - b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    broadcast_shape('mul', a, b)
    return Tensor.wrap(a.data * b.data)


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor.wrap(a.data * c)


def add_scalar(a: Tensor, c: float) -> Tensor:
    return Tensor.wrap(a.data + c)


def conj(a: Tensor) -> Tensor:
    return Tensor.wrap(np.conj(a.data))


def relu(a: Tensor) -> Tensor:
    return Tensor.wrap(np.maximum(a.data, 0))


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    return Tensor.wrap(0.5 * x * (1.0 + special.erf(x / np.sqrt(2.0))))


def tanh(a: Tensor) -> Tensor:
    return Tensor.wrap(np.tanh(a.data))


# --- Reductions ---

def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    return Tensor.wrap(np.asarray(np.sum(a.data, axis=axis)))


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    return Tensor.wrap(np.asarray(np.mean(a.data, axis=axis)))


# --- Shifts, slices, joins ---

def roll_last_axis(a: Tensor, shift: int) -> Tensor:
    """Circular shift: ``out[..., t] = a[..., (t - shift) mod L]``."""
    return Tensor.wrap(np.roll(a.data, shift, axis=-1))


def slice_last_axis(a: Tensor, start: int, stop: int) -> Tensor:
    return Tensor.wrap(np.ascontiguousarray(a.data[..., start:stop]))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        return Tensor.wrap(np.concatenate([t.data for t in tensors], axis=axis))
    except ValueError:
        raise DimensionError("concat extents differ", *[t.shape for t in tensors]) from None


def stack(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        return Tensor.wrap(np.stack([t.data for t in tensors], axis=axis))
    except ValueError:
        raise DimensionError("stack extents differ", *[t.shape for t in tensors]) from None


# --- Normalizations ---

def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis with per-row max subtraction."""
    x = a.data
    if np.isnan(x).any():
        raise NumericError("softmax_rows received NaN input")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return Tensor.wrap(e / np.sum(e, axis=-1, keepdims=True))


def layernorm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize each row of the last axis to mean 0 / variance 1, then apply the affine pair."""
    n = a.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise DimensionError("layernorm affine shape must match the last axis", a.shape, gamma.shape, beta.shape)
    x = a.data
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    return Tensor.wrap(xhat * gamma.data + beta.data)


# --- Spectral ---

def rfft_last_axis(a: Tensor) -> ComplexTensor:
    """Real-input DFT along the last axis; any length (pocketfft mixed-radix / Bluestein)."""
    if a.shape[-1] < 1:
        raise DimensionError("rfft needs at least one sample", a.shape)
    return Tensor.wrap(np.fft.rfft(a.data, axis=-1))


def irfft_last_axis(a: Tensor, n: int) -> Tensor:
    """Inverse of ``rfft_last_axis`` for an original length ``n``."""
    if a.shape[-1] != n // 2 + 1:
        raise DimensionError(f"irfft spectrum length does not match n={n}", a.shape)
    return Tensor.wrap(np.fft.irfft(a.data, n=n, axis=-1))
