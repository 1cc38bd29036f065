"""Parameter initialization and the small dense building blocks shared by every layer."""

from typing import Dict, Mapping, Optional

import numpy as np

from ..core import functional as F
from ..core.autodiff import Variable


def uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Fan-in scaled uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_linear(rng: np.random.Generator, d_in: int, d_out: int, prefix: str) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}.w": uniform(rng, (d_in, d_out), d_in),
        f"{prefix}.b": uniform(rng, (d_out,), d_in),
    }


def init_mlp(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int,
             prefix: str) -> Dict[str, np.ndarray]:
    """One hidden layer: ``w1 (d_in x d_hidden)``, ``w2 (d_hidden x d_out)`` plus biases."""
    return {
        f"{prefix}.w1": uniform(rng, (d_in, d_hidden), d_in),
        f"{prefix}.b1": uniform(rng, (d_hidden,), d_in),
        f"{prefix}.w2": uniform(rng, (d_hidden, d_out), d_hidden),
        f"{prefix}.b2": uniform(rng, (d_out,), d_hidden),
    }


def init_layernorm(d: int, prefix: str) -> Dict[str, np.ndarray]:
    return {f"{prefix}.gamma": np.ones(d), f"{prefix}.beta": np.zeros(d)}


def scope(params: Mapping[str, Variable], prefix: str) -> Dict[str, Variable]:
    """Entries under ``prefix.`` with the prefix stripped."""
    head = prefix + '.'
    return {k[len(head):]: v for k, v in params.items() if k.startswith(head)}


def linear(x: Variable, w: Variable, b: Optional[Variable] = None) -> Variable:
    out = F.matmul(x, w)
    return F.add(out, b) if b is not None else out


def mlp(x: Variable, p: Mapping[str, Variable], activation: str = 'gelu') -> Variable:
    hidden = F.ACTIVATIONS[activation](linear(x, p['w1'], p['b1']))
    return linear(hidden, p['w2'], p['b2'])


def layernorm(x: Variable, p: Mapping[str, Variable], eps: float) -> Variable:
    return F.layernorm(x, p['gamma'], p['beta'], eps)
