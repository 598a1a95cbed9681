from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from protosed.core.errors import UsageError
from protosed.tensor.ops import RunningStats
from protosed.tensor.tensor import Tensor


class ParamStore:
    """
    Named trainable tensors plus non-trainable buffers (BN running stats).

    Names are unique; every iteration is lexicographic so checkpoints and
    optimizer state are order-stable.
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params or name in self._buffers:
            raise UsageError(f"duplicate parameter name: {name}")
        tensor = Tensor(np.array(value), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params or name in self._buffers:
            raise UsageError(f"duplicate buffer name: {name}")
        self._buffers[name] = np.array(value)
        return self._buffers[name]

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise UsageError(f"unknown parameter: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params or name in self._buffers

    def __len__(self) -> int:
        return len(self._params)

    def buffer(self, name: str) -> np.ndarray:
        try:
            return self._buffers[name]
        except KeyError:
            raise UsageError(f"unknown buffer: {name}") from None

    def running_stats(self, prefix: str) -> RunningStats:
        return RunningStats(self.buffer(f"{prefix}.running_mean"), self.buffer(f"{prefix}.running_var"))

    def names(self) -> list:
        return sorted(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def buffer_items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in sorted(self._buffers):
            yield name, self._buffers[name]

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        """Every parameter and buffer by name, sorted"""
        merged = {name: tensor.data for name, tensor in self._params.items()}
        merged.update(self._buffers)
        return {name: merged[name] for name in sorted(merged)}

    def load_state(self, state: Dict[str, np.ndarray]):
        """Replace values in place; names and shapes must match exactly"""
        expected = set(self._params) | set(self._buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise UsageError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, value in state.items():
            target = self._params[name].data if name in self._params else self._buffers[name]
            if target.shape != value.shape:
                raise UsageError(f"shape mismatch for {name}: {value.shape} vs {target.shape}")
            if name in self._params:
                self._params[name].data = np.array(value, dtype=target.dtype)
            else:
                self._buffers[name][...] = value

    def astype(self, dtype) -> "ParamStore":
        """Independent copy with every array cast to `dtype`"""
        store = ParamStore()
        for name, tensor in self.items():
            store.add(name, tensor.data.astype(dtype))
        for name, value in self.buffer_items():
            store.add_buffer(name, value.astype(dtype))
        return store
