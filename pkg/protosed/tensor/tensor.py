"""
Dense tensor with eager reverse-mode differentiation on a numpy backend.

Every differentiable op builds its result through `Tensor._result` and, when
any parent tracks gradients, attaches a closure mapping the output gradient to
one gradient per parent. `backward()` walks the graph in reverse topological
order; only leaf tensors keep their `.grad`.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from protosed.core.errors import DimensionError, UsageError

_grad_enabled = True


class no_grad:
    """Context manager disabling graph construction (inference, validation)"""

    def __enter__(self):
        global _grad_enabled
        self._previous, _grad_enabled = _grad_enabled, False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._previous
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Shape-tagged float array with an optional gradient buffer"""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str = "",
        _children: tuple = (),
        _op: str = "",
    ):
        array = np.asarray(data)
        if array.dtype.kind != "f":
            array = array.astype(np.float32)
        if array.ndim == 0:
            array = array.reshape(())
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._prev: tuple = _children
        self._op = _op
        self._backward: Optional[BackwardFn] = None

    # ------------------------------------------------------------------
    # basics
    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"can only convert a tensor of size 1 to a Python scalar, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    @staticmethod
    def _result(data: np.ndarray, parents: tuple, op: str) -> "Tensor":
        track = _grad_enabled and any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=track, _children=parents if track else (), _op=op)

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # ------------------------------------------------------------------
    # differentiation
    # ------------------------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's `.grad`"""
        if self.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if not node._prev:
                if node.requires_grad:
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._prev, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = _unbroadcast(parent_grad, parent.shape).astype(parent.dtype, copy=False)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad

    # ------------------------------------------------------------------
    # elementwise arithmetic (numpy broadcasting rules)
    # ------------------------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = self._lift(other)
        out = Tensor._result(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            out._backward = lambda g: (g, g)
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor._result(-self.data, (self,), "neg")
        if out.requires_grad:
            out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return self._lift(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._lift(other)
        out = Tensor._result(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            out._backward = lambda g: (g * other.data, g * self.data)
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._lift(other)
        out = Tensor._result(self.data / other.data, (self, other), "div")
        if out.requires_grad:
            out._backward = lambda g: (g / other.data, -g * self.data / (other.data * other.data))
        return out

    def __pow__(self, power: float) -> "Tensor":
        out = Tensor._result(self.data ** power, (self,), f"pow{power}")
        if out.requires_grad:
            out._backward = lambda g: (g * power * self.data ** (power - 1),)
        return out

    def __matmul__(self, other) -> "Tensor":
        other = self._lift(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise DimensionError(f"matmul needs [N,K]@[K,M], got {self.shape}@{other.shape}")
        out = Tensor._result(self.data @ other.data, (self, other), "matmul")
        if out.requires_grad:
            out._backward = lambda g: (g @ other.data.T, self.data.T @ g)
        return out

    def sqrt(self) -> "Tensor":
        value = np.sqrt(self.data)
        out = Tensor._result(value, (self,), "sqrt")
        if out.requires_grad:
            # subgradient 0 where the value is exactly 0
            def _backward(g):
                safe = np.where(value > 0, value, 1)
                return (np.where(value > 0, g * 0.5 / safe, 0),)

            out._backward = _backward
        return out

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        out = Tensor._result(value, (self,), "exp")
        if out.requires_grad:
            out._backward = lambda g: (g * value,)
        return out

    def log(self) -> "Tensor":
        out = Tensor._result(np.log(self.data), (self,), "log")
        if out.requires_grad:
            out._backward = lambda g: (g / self.data,)
        return out

    # ------------------------------------------------------------------
    # reductions and shape
    # ------------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        value = self.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(self.dtype)
        out = Tensor._result(value, (self,), "sum")
        if out.requires_grad:
            def _backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                return (np.broadcast_to(g, self.shape),)

            out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        try:
            value = self.data.reshape(shape)
        except ValueError as e:
            raise DimensionError(f"cannot reshape {self.shape} to {shape}") from e
        out = Tensor._result(value, (self,), "reshape")
        if out.requires_grad:
            out._backward = lambda g: (g.reshape(self.shape),)
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        out = Tensor._result(np.ascontiguousarray(self.data.transpose(axes)), (self,), "transpose")
        if out.requires_grad:
            out._backward = lambda g: (g.transpose(inverse),)
        return out

    def take(self, indices, axis: int = 0) -> "Tensor":
        indices = np.asarray(indices, dtype=np.int64)
        out = Tensor._result(np.take(self.data, indices, axis=axis), (self,), "take")
        if out.requires_grad:
            def _backward(g):
                grad = np.zeros_like(self.data)
                np.add.at(grad, (slice(None),) * axis + (indices,), g)
                return (grad,)

            out._backward = _backward
        return out


def _topological_order(root: Tensor) -> list:
    """Parents before children; iterative to survive deep graphs"""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype or np.float32))
