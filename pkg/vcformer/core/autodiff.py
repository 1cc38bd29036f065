"""Tape-based reverse-mode differentiation.

One ``Tape`` lives for one forward pass. Differentiable operations (see
``functional``) append a ``TapeRecord`` holding the identifiers of their inputs
and output plus a backward rule; ``Tape.backward`` walks the records in exact
reverse order and accumulates gradients additively across fan-out.

Complex intermediates carry gradients as ``dL/dRe + i*dL/dIm``.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .tensor import Tensor, as_tensor
from ..errors import ContractError

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Variable:
    """A tensor value tracked (or not) by a tape."""

    __slots__ = ('value', 'requires_grad', 'tape', 'index', 'name')

    def __init__(self, value: Tensor, requires_grad: bool = False,
                 tape: Optional['Tape'] = None, index: int = -1, name: Optional[str] = None):
        self.value = value
        self.requires_grad = requires_grad
        self.tape = tape
        self.index = index
        self.name = name

    @classmethod
    def constant(cls, value, dtype: Optional[str] = None) -> 'Variable':
        if isinstance(value, Variable):
            return value
        return cls(as_tensor(value, dtype=dtype))

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self) -> str:
        return self.value.dtype

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Variable(shape={self.shape}, requires_grad={self.requires_grad}{label})"


@dataclass
class TapeRecord:
    """One recorded operation."""

    op: str
    output: int
    inputs: Tuple[int, ...]
    backward: BackwardRule


class Gradients:
    """Gradient map for the leaves of a tape; disconnected leaves read as zeros."""

    def __init__(self, leaves: Dict[int, Variable], grads: Dict[int, np.ndarray]):
        self._leaves = leaves
        self._grads = grads

    def __getitem__(self, var: Variable) -> np.ndarray:
        grad = self._grads.get(var.index)
        if grad is None:
            return np.zeros(var.shape, dtype=var.data.dtype)
        if not np.iscomplexobj(var.data) and np.iscomplexobj(grad):
            grad = grad.real
        return grad

    def __iter__(self) -> Iterator[Variable]:
        return iter(self._leaves.values())

    def by_name(self) -> Dict[str, np.ndarray]:
        """Gradients keyed by leaf name (unnamed leaves are skipped)."""
        return {v.name: self[v] for v in self._leaves.values() if v.name is not None}


class Tape:
    """Ordered record of differentiable operations for a single forward pass."""

    def __init__(self):
        self.records: List[TapeRecord] = []
        self._leaves: Dict[int, Variable] = {}
        self._count = 0

    def __len__(self) -> int:
        return len(self.records)

    def _next_index(self) -> int:
        index = self._count
        self._count += 1
        return index

    def leaf(self, value, requires_grad: bool = True, name: Optional[str] = None,
             dtype: Optional[str] = None) -> Variable:
        """Register an input value; gradients are reported for leaves only."""
        var = Variable(as_tensor(value, dtype=dtype), requires_grad, self, self._next_index(), name)
        if requires_grad:
            self._leaves[var.index] = var
        return var

    def record(self, op: str, value: Tensor, inputs: Sequence[Variable],
               backward: BackwardRule) -> Variable:
        """Append an operation; returns an untracked constant when no input needs gradients."""
        if not any(v.requires_grad for v in inputs):
            return Variable(value)
        out = Variable(value, True, self, self._next_index())
        ids = tuple(v.index if v.requires_grad else -1 for v in inputs)
        self.records.append(TapeRecord(op, out.index, ids, backward))
        return out

    def backward(self, loss: Variable) -> Gradients:
        """Propagate d(loss)/d(leaf) for every requires-grad leaf, seeding with 1."""
        if loss.value.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.requires_grad and loss.tape is not self:
            raise ContractError("loss was not produced on this tape")
        grads: Dict[int, np.ndarray] = {}
        if loss.requires_grad:
            grads[loss.index] = np.ones(loss.shape, dtype=loss.data.dtype)
        for rec in reversed(self.records):
            g = grads.get(rec.output)
            if g is None:
                continue
            if rec.output not in self._leaves:
                del grads[rec.output]
            for idx, ig in zip(rec.inputs, rec.backward(g)):
                if idx < 0 or ig is None:
                    continue
                prev = grads.get(idx)
                grads[idx] = ig if prev is None else prev + ig
        leaf_grads = {i: g for i, g in grads.items() if i in self._leaves}
        return Gradients(self._leaves, leaf_grads)


def backward(tape: Tape, loss: Variable) -> Gradients:
    return tape.backward(loss)
