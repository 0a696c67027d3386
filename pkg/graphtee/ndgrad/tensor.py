"""Dense tensors and the reverse-mode tape.

A ``Tensor`` wraps a read-only float64 array. Operations are ``Function``
subclasses (see ``functional.py``); while a ``Tape`` is active, every
operation that touches a tensor requiring gradients is appended to it, and
``Tape.backward`` replays the entries in reverse order.
"""

from __future__ import annotations

import contextvars
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from graphtee.core.exceptions import ContractError

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "graphtee_active_tape", default=None
)


def _functional():
    # functional imports this module; resolve lazily for the operator methods
    from graphtee.ndgrad import functional

    return functional


class Tensor:
    """Dense n-dimensional float64 value taking part in reverse-mode differentiation.

    Leaves are created directly; only leaves with ``requires_grad`` carry a
    ``grad`` accumulator. Tensors produced by operations are intermediate
    values whose gradients live on the tape during ``backward`` only.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "is_leaf")
    # Make numpy defer to Tensor's reflected operators
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = np.zeros_like(array) if requires_grad else None
        self.name = name
        self.is_leaf = True

    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        array = np.asarray(data, dtype=np.float64)
        array.setflags(write=False)
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out.is_leaf = False
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return _functional().transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return _functional().sum(self, axis=axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return _functional().mean(self, axis=axis)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _functional().reshape(self, shape)

    def __add__(self, other: Any) -> "Tensor":
        return _functional().add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return _functional().add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return _functional().sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return _functional().sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return _functional().scale(self, float(other))
        return _functional().mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: Any) -> "Tensor":
        if not isinstance(other, (int, float, np.floating, np.integer)):
            raise ContractError("only division by a scalar constant is supported")
        return _functional().scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return _functional().scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return _functional().matmul(self, other)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


class Function:
    """Base class for differentiable operations.

    ``forward`` receives the input arrays and may store intermediates in
    ``self.cache``; ``backward`` receives dL/d(output) and returns one
    gradient (or ``None``) per input, each shaped like that input.
    """

    name = "function"

    def __init__(self, **params: Any):
        self.params = params
        self.cache: dict = {}

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *inputs: Tensor, **params: Any) -> Tensor:
        function = cls(**params)
        out_data = function.forward(*(tensor.data for tensor in inputs))
        tape = _ACTIVE_TAPE.get()
        record = tape is not None and any(tensor.requires_grad for tensor in inputs)
        out = Tensor._from_op(out_data, requires_grad=record)
        if record:
            tape.record(function, inputs, out)
        return out


@dataclass
class TapeEntry:
    op: str
    function: Function
    inputs: Tuple[Tensor, ...]
    output: Tensor


class Tape:
    """Ordered record of the operations of one forward pass.

    Entries are appended in execution order, which is a topological order of
    the computation; ``backward`` walks them in reverse and then clears the
    tape.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._tokens: List[contextvars.Token] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc_info: Any) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, function: Function, inputs: Sequence[Tensor], output: Tensor) -> None:
        self.entries.append(TapeEntry(function.name, function, tuple(inputs), output))

    def reset(self) -> None:
        self.entries.clear()

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(leaf) into every participating leaf's ``grad``.

        Args:
            root: Single-valued tensor produced on this tape

        Raises:
            ContractError: If ``root`` is not a scalar or was not recorded here
        """
        if root.size != 1:
            raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
        if root.is_leaf:
            if root.requires_grad:
                root.grad += 1.0
            self.reset()
            return
        if not root.requires_grad or not any(entry.output is root for entry in self.entries):
            raise ContractError("backward root was not produced on this tape")

        pending = {id(root): np.ones_like(root.data)}
        for entry in reversed(self.entries):
            upstream = pending.pop(id(entry.output), None)
            if upstream is None:
                continue
            grads = entry.function.backward(upstream)
            for tensor, grad in zip(entry.inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    tensor.grad += grad
                else:
                    key = id(tensor)
                    pending[key] = pending[key] + grad if key in pending else grad
        self.reset()


def backward(root: Tensor, tape: Optional[Tape] = None) -> None:
    """Run the backward pass of ``root`` on ``tape`` (default: the active tape)."""
    tape = tape or _ACTIVE_TAPE.get()
    if tape is None:
        raise ContractError("backward called outside of a tape")
    tape.backward(root)


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording, e.g. for evaluation inside a training step."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)
