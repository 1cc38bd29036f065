"""Differentiable wrappers around the tensor primitives.

Each function takes ``Variable`` operands, computes the forward value with
``vcformer.core.tensor`` and, when any operand requires gradients, records its
backward rule on the operands' tape.
"""

import re
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla
from scipy import special

from . import tensor as T
from .autodiff import Tape, Variable
from .tensor import Tensor
from ..errors import DimensionError, NumericError

SINGULAR_TOL = 1e-14


def _tape(*inputs: Variable) -> Optional[Tape]:
    for v in inputs:
        if v.requires_grad:
            return v.tape
    return None


def _emit(op: str, value: Tensor, inputs: Sequence[Variable], rule) -> Variable:
    tape = _tape(*inputs)
    if tape is None:
        return Variable(value)
    return tape.record(op, value, inputs, rule)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _fit(grad: np.ndarray, var: Variable) -> np.ndarray:
    grad = unbroadcast(grad, var.shape)
    if np.iscomplexobj(grad) and not np.iscomplexobj(var.data):
        grad = grad.real
    return grad


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


# --- Linear algebra ---

def matmul(a: Variable, b: Variable) -> Variable:
    out = T.matmul(a.value, b.value)

    def rule(g):
        return _fit(g @ _swap(b.data), a), _fit(_swap(a.data) @ g, b)

    return _emit('matmul', out, (a, b), rule)


def permute(a: Variable, axes: Sequence[int]) -> Variable:
    axes = tuple(axes)
    out = Tensor.wrap(np.ascontiguousarray(np.transpose(a.data, axes)))
    inverse = tuple(np.argsort(axes))

    def rule(g):
        return (np.transpose(g, inverse),)

    return _emit('permute', out, (a,), rule)


def transpose(a: Variable) -> Variable:
    out = T.transpose(a.value)
    return _emit('transpose', out, (a,), lambda g: (_swap(g),))


def reshape(a: Variable, shape: Sequence[int]) -> Variable:
    out = T.reshape(a.value, shape)
    return _emit('reshape', out, (a,), lambda g: (g.reshape(a.shape),))


def linear_solve(A: Variable, B: Variable) -> Variable:
    """Solve ``A X = B`` for symmetric positive definite ``A`` (leading axes batch).

    Only the symmetric part ``(A + A^T) / 2`` enters the solve, so the gradient with
    respect to ``A`` is symmetric too.
    """
    a, b = A.data, B.data
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or b.ndim < 2 or b.shape[-2] != a.shape[-1]:
        raise DimensionError("linear_solve needs square A matching the rows of B", A.shape, B.shape)
    chol = _check_spd(0.5 * (a + _swap(a)))
    x = _cho_solve(chol, b)
    out = Tensor.wrap(x)

    def rule(g):
        gb = _cho_solve(chol, g)
        ga = -(gb @ _swap(x))
        ga = 0.5 * (ga + _swap(ga))
        return _fit(ga, A), _fit(gb, B)

    return _emit('linear_solve', out, (A, B), rule)


def _cho_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    lead = np.broadcast_shapes(chol.shape[:-2], b.shape[:-2])
    factors = np.broadcast_to(chol, lead + chol.shape[-2:]).reshape((-1,) + chol.shape[-2:])
    rhs = np.broadcast_to(b, lead + b.shape[-2:]).reshape((-1,) + b.shape[-2:])
    out = np.empty(rhs.shape, dtype=np.result_type(chol, b))
    for i in range(len(rhs)):
        out[i] = sla.cho_solve((factors[i], True), rhs[i], check_finite=False)
    return out.reshape(lead + b.shape[-2:])


def _check_spd(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``a``; raises NumericError naming the failing pivot."""
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        flat = a.reshape((-1,) + a.shape[-2:])
        for i, mat in enumerate(flat):
            try:
                sla.cho_factor(mat, lower=True)
            except sla.LinAlgError as e:
                match = re.search(r'(\d+)', str(e))
                pivot = match.group(1) if match else '?'
                raise NumericError(
                    f"linear_solve: matrix is not positive definite at pivot {pivot} (batch entry {i})"
                ) from None
        raise NumericError("linear_solve: Cholesky factorization failed") from None
    diag = np.abs(np.diagonal(chol, axis1=-2, axis2=-1)) ** 2
    ref = np.max(diag, axis=-1, keepdims=True)
    bad = diag <= SINGULAR_TOL * np.maximum(ref, np.finfo(float).tiny)
    if bad.any():
        entry, pivot = np.argwhere(bad.reshape(-1, diag.shape[-1]))[0]
        raise NumericError(
            f"linear_solve: matrix is singular within tolerance at pivot {pivot + 1} (batch entry {entry})"
        )
    return chol


# --- Elementwise ---

def add(a: Variable, b: Variable) -> Variable:
    out = T.add(a.value, b.value)
    return _emit('add', out, (a, b), lambda g: (_fit(g, a), _fit(g, b)))


def sub(a: Variable, b: Variable) -> Variable:
    out = T.sub(a.value, b.value)
    return _emit('sub', out, (a, b), lambda g: (_fit(g, a), _fit(-g, b)))


def mul(a: Variable, b: Variable) -> Variable:
    """Hadamard product; complex operands use the conjugate chain rule."""
    out = T.mul(a.value, b.value)

    def rule(g):
        return _fit(g * np.conj(b.data), a), _fit(g * np.conj(a.data), b)

    return _emit('mul', out, (a, b), rule)


def scale(a: Variable, c: float) -> Variable:
    out = T.scale(a.value, c)
    return _emit('scale', out, (a,), lambda g: (g * c,))


def add_scalar(a: Variable, c: float) -> Variable:
    out = T.add_scalar(a.value, c)
    return _emit('add_scalar', out, (a,), lambda g: (g,))


def conj(a: Variable) -> Variable:
    out = T.conj(a.value)
    return _emit('conj', out, (a,), lambda g: (np.conj(g),))


def relu(a: Variable) -> Variable:
    out = T.relu(a.value)
    return _emit('relu', out, (a,), lambda g: (g * (a.data > 0),))


def gelu(a: Variable) -> Variable:
    out = T.gelu(a.value)

    def rule(g):
        x = a.data
        cdf = 0.5 * (1.0 + special.erf(x / np.sqrt(2.0)))
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return (g * (cdf + x * pdf),)

    return _emit('gelu', out, (a,), rule)


def tanh(a: Variable) -> Variable:
    out = T.tanh(a.value)
    return _emit('tanh', out, (a,), lambda g: (g * (1.0 - out.data ** 2),))


ACTIVATIONS = {
    'gelu': gelu,
    'relu': relu,
    'tanh': tanh,
}


# --- Reductions ---

def sum(a: Variable, axis: Optional[int] = None) -> Variable:  # noqa: A001
    out = T.sum(a.value, axis=axis)

    def rule(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit('sum', out, (a,), rule)


def mean(a: Variable, axis: Optional[int] = None) -> Variable:
    out = T.mean(a.value, axis=axis)
    count = a.value.size if axis is None else a.shape[axis]

    def rule(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _emit('mean', out, (a,), rule)


# --- Shifts, slices, joins ---

def roll_last_axis(a: Variable, shift: int) -> Variable:
    out = T.roll_last_axis(a.value, shift)
    # adjoint of a permutation is its inverse
    return _emit('roll', out, (a,), lambda g: (np.roll(g, -shift, axis=-1),))


def slice_last_axis(a: Variable, start: int, stop: int) -> Variable:
    out = T.slice_last_axis(a.value, start, stop)

    def rule(g):
        full = np.zeros(a.shape, dtype=np.result_type(g, a.data))
        full[..., start:stop] = g
        return (full,)

    return _emit('slice', out, (a,), rule)


def concat(parts: Sequence[Variable], axis: int = -1) -> Variable:
    out = T.concat([p.value for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit('concat', out, tuple(parts), rule)


def stack(parts: Sequence[Variable], axis: int = -1) -> Variable:
    out = T.stack([p.value for p in parts], axis=axis)

    def rule(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _emit('stack', out, tuple(parts), rule)


# --- Normalizations ---

def softmax_rows(a: Variable) -> Variable:
    out = T.softmax_rows(a.value)

    def rule(g):
        y = out.data
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _emit('softmax', out, (a,), rule)


def layernorm(a: Variable, gamma: Variable, beta: Variable, eps: float = T.LAYERNORM_EPS) -> Variable:
    out = T.layernorm(a.value, gamma.value, beta.value, eps)

    def rule(g):
        x = a.data
        n = x.shape[-1]
        mu = np.mean(x, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(np.mean((x - mu) ** 2, axis=-1, keepdims=True) + eps)
        xhat = (x - mu) * inv
        dxhat = g * gamma.data
        dx = inv / n * (n * dxhat - np.sum(dxhat, axis=-1, keepdims=True)
                        - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True))
        dgamma = (g * xhat).reshape(-1, n).sum(axis=0)
        dbeta = g.reshape(-1, n).sum(axis=0)
        return dx, dgamma, dbeta

    return _emit('layernorm', out, (a, gamma, beta), rule)


# --- Spectral ---

def rfft_last_axis(a: Variable) -> Variable:
    out = T.rfft_last_axis(a.value)
    n = a.shape[-1]

    def rule(g):
        full = np.zeros(g.shape[:-1] + (n,), dtype=np.complex128)
        full[..., :g.shape[-1]] = g
        return (np.real(np.fft.ifft(full, axis=-1)) * n,)

    return _emit('rfft', out, (a,), rule)


def irfft_last_axis(a: Variable, n: int) -> Variable:
    out = T.irfft_last_axis(a.value, n)
    bins = n // 2 + 1
    weight = np.full(bins, 2.0 / n)
    weight[0] = 1.0 / n
    if n % 2 == 0:
        weight[-1] = 1.0 / n

    def rule(g):
        ga = np.fft.rfft(g, axis=-1) * weight
        # imaginary parts of the DC (and even-length Nyquist) bins are ignored by the inverse
        ga[..., 0] = ga[..., 0].real
        if n % 2 == 0:
            ga[..., -1] = ga[..., -1].real
        return (ga,)

    return _emit('irfft', out, (a,), rule)


# --- Losses ---

def mse(pred: Variable, target: Variable) -> Variable:
    """Mean of squared errors over every entry."""
    if pred.shape != target.shape:
        raise DimensionError("mse operands differ", pred.shape, target.shape)
    diff = sub(pred, target)
    return mean(mul(diff, diff))

