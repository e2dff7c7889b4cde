"""Minimal reverse-mode automatic differentiation.

Just enough tape to differentiate the two architectures used here (feedforward
rectifier network, tanh recurrence) and the losses built on them: elementwise
arithmetic, matmul, tanh, relu, reductions.  Broadcasting follows numpy; the
backward pass sums gradients over broadcast axes.

The fast training loops in kernels.py carry hand-derived backward passes of
the same graphs; tests pin them against this tape and against finite
differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteLoss


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over the axes numpy broadcast to reach grad.shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """Node in the computation graph; wraps a float64 ndarray."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    # make numpy defer binary ops to Var's reflected methods
    __array_ufunc__ = None

    def __init__(self, value, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.value.shape

    @staticmethod
    def _lift(other) -> "Var":
        return other if isinstance(other, Var) else Var(other)

    def __add__(self, other):
        other = Var._lift(other)
        out = Var(self.value + other.value, (self, other))

        def back(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.value, (self,))
        out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other):
        return self + (-Var._lift(other))

    def __rsub__(self, other):
        return Var._lift(other) + (-self)

    def __mul__(self, other):
        other = Var._lift(other)
        out = Var(self.value * other.value, (self, other))

        def back(g):
            return (
                _unbroadcast(g * other.value, self.shape),
                _unbroadcast(g * self.value, other.shape),
            )

        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Var._lift(other)
        out = Var(self.value / other.value, (self, other))

        def back(g):
            return (
                _unbroadcast(g / other.value, self.shape),
                _unbroadcast(-g * self.value / other.value**2, other.shape),
            )

        out._backward = back
        return out

    def __matmul__(self, other):
        other = Var._lift(other)
        out = Var(self.value @ other.value, (self, other))

        def back(g):
            a, b = self.value, other.value
            if a.ndim == 1 and b.ndim == 1:
                return g * b, g * a
            if a.ndim == 1:
                return g @ b.T, np.outer(a, g)
            if b.ndim == 1:
                return np.outer(g, b), a.T @ g
            return g @ b.T, a.T @ g

        out._backward = back
        return out

    def __rmatmul__(self, other):
        return Var._lift(other) @ self

    def __pow__(self, p: float):
        out = Var(self.value**p, (self,))
        out._backward = lambda g: (g * p * self.value ** (p - 1),)
        return out

    def tanh(self):
        y = np.tanh(self.value)
        out = Var(y, (self,))
        out._backward = lambda g: (g * (1.0 - y**2),)
        return out

    def relu(self):
        out = Var(np.maximum(self.value, 0.0), (self,))
        out._backward = lambda g: (g * (self.value > 0),)
        return out

    def sum(self, axis=None):
        out = Var(self.value.sum(axis=axis), (self,))

        def back(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), self.shape).copy(),)

        out._backward = back
        return out

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def backward(self):
        """Reverse-mode sweep seeding d(self)/d(self) = 1."""
        if self.value.ndim != 0:
            raise ValueError("backward() expects a scalar loss")
        order: list[Var] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
            else:
                stack.append((node, True))
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is None:
                continue
            gs = node._backward(node.grad)
            for parent, g in zip(node._parents, gs):
                parent.grad = parent.grad + g


def tanh(x):
    return x.tanh() if isinstance(x, Var) else np.tanh(x)


def relu(x):
    return x.relu() if isinstance(x, Var) else np.maximum(x, 0.0)


def gradient(loss_fn, params):
    """Exact reverse-mode gradient of loss_fn with respect to params.

    params is a dict of name -> ndarray or a list/tuple of ndarrays; loss_fn
    receives the same container with Var leaves and must return a scalar Var.
    The returned container has the same shape and holds the gradients.
    """
    if isinstance(params, dict):
        leaves = {k: Var(v) for k, v in params.items()}
        out = loss_fn(leaves)
    else:
        leaves = [Var(v) for v in params]
        out = loss_fn(leaves)
    if not isinstance(out, Var):
        raise TypeError("loss_fn must return a Var")
    if not np.isfinite(out.value):
        raise NonFiniteLoss(f"loss is {out.value}")
    out.backward()
    if isinstance(params, dict):
        return {k: leaves[k].grad for k in leaves}
    return [leaf.grad for leaf in leaves]
