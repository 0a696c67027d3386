"""Minimal dense-tensor reverse-mode automatic differentiation."""

from graphtee.ndgrad import functional
from graphtee.ndgrad.gradcheck import GradCheckReport, grad_check
from graphtee.ndgrad.params import ModelParams
from graphtee.ndgrad.tensor import Function, Tape, TapeEntry, Tensor, backward, no_grad

__all__ = [
    "functional",
    "Function",
    "GradCheckReport",
    "ModelParams",
    "Tape",
    "TapeEntry",
    "Tensor",
    "backward",
    "grad_check",
    "no_grad",
]
