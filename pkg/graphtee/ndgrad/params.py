"""Named collections of learnable tensors."""

from __future__ import annotations

from collections import OrderedDict
from typing import Any, Dict, Iterator, Mapping, Optional

import numpy as np

from graphtee.core.exceptions import ContractError
from graphtee.ndgrad.tensor import Tensor


class ModelParams(Mapping[str, Tensor]):
    """All learnable weights of one estimator, addressable by stable names.

    Each entry is a leaf tensor with ``requires_grad``. A set is never
    modified in place: optimizer steps and perturbations build a new set
    with ``replace``.
    """

    def __init__(self, values: Mapping[str, Any], architecture: Optional[Mapping[str, Any]] = None):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in values.items():
            data = value.data if isinstance(value, Tensor) else value
            self._tensors[name] = Tensor(data, requires_grad=True, name=name)
        self.architecture: Dict[str, Any] = dict(architecture or {})

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def get(self, name: str, default: Optional[Tensor] = None) -> Optional[Tensor]:
        return self._tensors.get(name, default)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        return f"ModelParams({len(self)} tensors, {self.n_values} values)"

    @property
    def n_values(self) -> int:
        return int(sum(tensor.size for tensor in self._tensors.values()))

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {name: tensor.grad.copy() for name, tensor in self._tensors.items()}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: np.array(tensor.data) for name, tensor in self._tensors.items()}

    def replace(self, updates: Mapping[str, np.ndarray]) -> "ModelParams":
        """New parameter set with the given entries swapped in."""
        unknown = set(updates) - set(self._tensors)
        if unknown:
            raise ContractError(f"unknown parameters {sorted(unknown)}")
        values = OrderedDict()
        for name, tensor in self._tensors.items():
            if name in updates:
                array = np.asarray(updates[name], dtype=np.float64)
                if array.shape != tensor.shape:
                    raise ContractError(
                        f"parameter {name!r} has shape {tensor.shape}, update has {array.shape}"
                    )
                values[name] = array
            else:
                values[name] = tensor.data
        return ModelParams(values, self.architecture)

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact equality of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(np.array_equal(self[name].data, other[name].data) for name in self)
