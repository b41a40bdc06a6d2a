"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray and records the operations applied to
it; calling :meth:`Tensor.backward` on a scalar result accumulates
gradients into every parameter that contributed to it.  All arithmetic
is 64-bit and the tape is rebuilt per training step, so results are
bit-reproducible for a fixed input order.

Only the primitives the tagger and its losses need are implemented.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import NumericalError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def parameter(cls, value) -> "Tensor":
        return cls(value, requires_grad=True)

    @classmethod
    def _from_op(cls, value, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = cls(value)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_value = self.value + other.value

        def backward(grad, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad, b.shape))

        return Tensor._from_op(out_value, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(grad, a=self):
            if a.requires_grad:
                a._accumulate(-grad)

        return Tensor._from_op(-self.value, (self,), backward)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_value = self.value * other.value

        def backward(grad, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad * b.value, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad * a.value, b.shape))

        return Tensor._from_op(out_value, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_value = self.value / other.value

        def backward(grad, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad / b.value, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-grad * a.value / (b.value * b.value), b.shape))

        return Tensor._from_op(out_value, (self, other), backward)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a_val, b_val = self.value, other.value
        if a_val.ndim != b_val.ndim or a_val.ndim not in (2, 3):
            raise NumericalError(
                f"matmul supports 2-D@2-D or 3-D@3-D with equal batch, got "
                f"{a_val.shape} @ {b_val.shape}"
            )
        out_value = a_val @ b_val

        def backward(grad, a=self, b=other):
            if a.requires_grad:
                a._accumulate(grad @ b.value.swapaxes(-1, -2))
            if b.requires_grad:
                b._accumulate(a.value.swapaxes(-1, -2) @ grad)

        return Tensor._from_op(out_value, (self, other), backward)

    # -- gradient accumulation and backprop --------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros(self.value.shape, dtype=np.float64)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.value.size != 1:
            raise NumericalError(f"backward requires a scalar, got shape {self.shape}")
        if not np.isfinite(self.value):
            raise NumericalError(f"non-finite loss: {float(self.value)}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones(self.value.shape, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise functions ----------------------------------------------------


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_value = np.exp(x.value)

    def backward(grad, a=x, v=out_value):
        if a.requires_grad:
            a._accumulate(grad * v)

    return Tensor._from_op(out_value, (x,), backward)


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def backward(grad, a=x):
        if a.requires_grad:
            a._accumulate(grad / a.value)

    return Tensor._from_op(np.log(x.value), (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_value = np.sqrt(x.value)

    def backward(grad, a=x, v=out_value):
        if a.requires_grad:
            a._accumulate(grad * 0.5 / v)

    return Tensor._from_op(out_value, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_value = np.tanh(x.value)

    def backward(grad, a=x, v=out_value):
        if a.requires_grad:
            a._accumulate(grad * (1.0 - v * v))

    return Tensor._from_op(out_value, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_value = 1.0 / (1.0 + np.exp(-x.value))

    def backward(grad, a=x, v=out_value):
        if a.requires_grad:
            a._accumulate(grad * v * (1.0 - v))

    return Tensor._from_op(out_value, (x,), backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_value = np.maximum(x.value, 0.0)

    def backward(grad, a=x):
        if a.requires_grad:
            a._accumulate(grad * (a.value > 0.0))

    return Tensor._from_op(out_value, (x,), backward)


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """Elementwise max(x, floor); gradient is zero where clamped."""
    x = as_tensor(x)
    out_value = np.maximum(x.value, floor)

    def backward(grad, a=x):
        if a.requires_grad:
            a._accumulate(grad * (a.value > floor))

    return Tensor._from_op(out_value, (x,), backward)


# -- reductions ----------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out_value = x.value.sum(axis=axis, keepdims=keepdims)

    def backward(grad, a=x):
        if not a.requires_grad:
            return
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor._from_op(out_value, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.value.size if axis is None else x.value.shape[axis]
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    x = as_tensor(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_value = e / e.sum(axis=axis, keepdims=True)

    def backward(grad, a=x, v=out_value):
        if a.requires_grad:
            inner = (grad * v).sum(axis=axis, keepdims=True)
            a._accumulate(v * (grad - inner))

    return Tensor._from_op(out_value, (x,), backward)


# -- shape manipulation ----------------------------------------------------------


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_value = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad, parts=tensors):
        for i, part in enumerate(parts):
            if part.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(offsets[i], offsets[i + 1])
                part._accumulate(grad[tuple(index)])

    return Tensor._from_op(out_value, tensors, backward)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    x = as_tensor(x)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(grad, a=x):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros(a.shape, dtype=np.float64)
            a.grad[index] += grad

    return Tensor._from_op(x.value[index], (x,), backward)


def take_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows along axis 0; duplicate indices sum their gradients."""
    x = as_tensor(x)
    indices = np.asarray(indices)

    def backward(grad, a=x):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros(a.shape, dtype=np.float64)
            np.add.at(a.grad, indices, grad)

    return Tensor._from_op(x.value[indices], (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)

    def backward(grad, a=x):
        if a.requires_grad:
            a._accumulate(grad.reshape(a.shape))

    return Tensor._from_op(x.value.reshape(shape), (x,), backward)


def swapaxes(x: Tensor, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)

    def backward(grad, a=x):
        if a.requires_grad:
            a._accumulate(grad.swapaxes(axis1, axis2))

    return Tensor._from_op(x.value.swapaxes(axis1, axis2), (x,), backward)
