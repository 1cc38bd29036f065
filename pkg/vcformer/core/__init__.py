"""Numeric core: tensors, reverse-mode autodiff and gradient checking."""

from .tensor import Tensor, ComplexTensor, as_tensor
from .autodiff import Tape, Variable, Gradients, backward
from . import functional
from .gradcheck import grad_check, GradCheckReport

__all__ = ['Tensor', 'ComplexTensor', 'as_tensor', 'Tape', 'Variable', 'Gradients', 'backward',
           'functional', 'grad_check', 'GradCheckReport']
