"""Finite-difference verification of analytic gradients."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Tuple

import numpy as np

from .autodiff import Tape, Variable
from ..utils.logger import setup_logger

logger = setup_logger('gradcheck')

# f(tape, variables) -> scalar loss Variable
LossFn = Callable[[Tape, Dict[str, Variable]], Variable]

ABS_FALLBACK = 1e-8


@dataclass
class ParamCheck:
    """Agreement between analytic and numeric gradients for one parameter tensor."""

    name: str
    max_rel_error: float
    max_abs_error: float
    worst_index: Tuple[int, ...]
    used_absolute: bool = False


@dataclass
class GradCheckReport:
    tol: float
    h: float
    checks: Dict[str, ParamCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.max_rel_error <= self.tol for c in self.checks.values())

    @property
    def worst(self) -> float:
        return max((c.max_rel_error for c in self.checks.values()), default=0.0)

    def failures(self) -> Dict[str, ParamCheck]:
        return {k: c for k, c in self.checks.items() if c.max_rel_error > self.tol}

    def to_dict(self) -> Dict:
        return {
            'passed': self.passed,
            'tol': self.tol,
            'h': self.h,
            'params': {
                k: {
                    'max_rel_error': c.max_rel_error,
                    'max_abs_error': c.max_abs_error,
                    'worst_index': list(c.worst_index),
                    'used_absolute': c.used_absolute,
                }
                for k, c in self.checks.items()
            },
        }


def evaluate(f: LossFn, params: Mapping[str, np.ndarray]) -> float:
    """Value of ``f`` with every parameter as an untracked constant."""
    tape = Tape()
    variables = {k: tape.leaf(v, requires_grad=False, name=k) for k, v in params.items()}
    return float(f(tape, variables).data)


def analytic_gradients(f: LossFn, params: Mapping[str, np.ndarray]) -> Tuple[float, Dict[str, np.ndarray]]:
    tape = Tape()
    variables = {k: tape.leaf(v, name=k) for k, v in params.items()}
    loss = f(tape, variables)
    grads = tape.backward(loss)
    return float(loss.data), {k: grads[v] for k, v in variables.items()}


def numeric_gradient(f: LossFn, params: Mapping[str, np.ndarray], name: str,
                     h: float = 1e-6, workers: int = 1) -> np.ndarray:
    """Central differences with step ``h * max(1, |theta|)`` per coordinate."""
    base = params[name]
    grad = np.zeros(base.shape, dtype=np.float64)

    def coordinate(i: int) -> float:
        step = h * max(1.0, abs(float(base.flat[i])))
        values = []
        for sign in (1.0, -1.0):
            shifted = np.array(base, dtype=np.float64, copy=True)
            shifted.flat[i] += sign * step
            trial = dict(params)
            trial[name] = shifted
            values.append(evaluate(f, trial))
        return (values[0] - values[1]) / (2.0 * step)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, g in enumerate(pool.map(coordinate, range(base.size))):
                grad.flat[i] = g
    else:
        for i in range(base.size):
            grad.flat[i] = coordinate(i)
    return grad


def compare(name: str, analytic: np.ndarray, numeric: np.ndarray) -> ParamCheck:
    """Max-norm relative error of one tensor; absolute error when both gradients are ~0."""
    diff = np.abs(analytic - numeric)
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape) if diff.size else ()
    max_abs = float(diff.max()) if diff.size else 0.0
    scale = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(numeric).max(initial=0.0)))
    if scale < ABS_FALLBACK:
        return ParamCheck(name, max_abs, max_abs, tuple(int(i) for i in worst), used_absolute=True)
    return ParamCheck(name, max_abs / scale, max_abs, tuple(int(i) for i in worst))


def grad_check(f: LossFn, params: Mapping[str, np.ndarray], h: float = 1e-6,
               tol: float = 1e-4, workers: int = 1) -> GradCheckReport:
    """
    Compare tape gradients against central differences for every parameter.

    Args:
        f: Scalar loss built from the given variables
        params: Named float64 parameter arrays
        h: Relative finite-difference step
        tol: Maximum accepted relative error per parameter
        workers: Threads evaluating perturbed losses concurrently

    Returns:
        GradCheckReport; failures are reported, never raised
    """
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = analytic_gradients(f, params)
    report = GradCheckReport(tol=tol, h=h)
    for name in params:
        numeric = numeric_gradient(f, params, name, h=h, workers=workers)
        check = compare(name, analytic[name], numeric)
        report.checks[name] = check
        logger.debug(f"gradcheck {name}: rel={check.max_rel_error:.3e} abs={check.max_abs_error:.3e}")
    if not report.passed:
        logger.warning(f"gradcheck failed for {sorted(report.failures())}")
    return report
