"""Reverse-mode tape over numpy arrays.

Every operation records its parents and a closure that pushes the upstream
gradient back to them. Input derivatives of the network are built out of these
same operations (see :mod:`heatpinn.autodiff.jet`), so a single reverse sweep
yields parameter gradients that flow through first- and second-order
derivative paths.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Number = float | int


class Tensor:
    __slots__ = ("data", "parents", "backward_fn", "requires_grad", "grad")
    # make numpy defer to our reflected operators (ndarray - Tensor)
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], tuple] | None = None,
        requires_grad: bool = False,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def leaf(data, requires_grad: bool = True) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data)


def node(data: np.ndarray, parents: tuple[Tensor, ...], fn) -> Tensor:
    """Record a custom operation; ``fn(g)`` returns one gradient per parent."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, parents, fn, True)
    return Tensor(data)


_node = node


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        sa = a.data.shape
        return _node(a.data + b, (a,), lambda g: (_unbroadcast(g, sa),))
    sa, sb = a.data.shape, b.data.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        sa = a.data.shape
        return _node(a.data - b, (a,), lambda g: (_unbroadcast(g, sa),))
    if not isinstance(a, Tensor):
        sb = b.data.shape
        return _node(a - b.data, (b,), lambda g: (-_unbroadcast(g, sb),))
    sa, sb = a.data.shape, b.data.shape
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def scale(a: Tensor, c: Number) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return scale(a, b) if np.isscalar(b) else _node(a.data * b, (a,), lambda g: (_unbroadcast(g * b, a.data.shape),))
    if not isinstance(a, Tensor):
        return mul(b, a)
    ad, bd = a.data, b.data

    def fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), fn)


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where ``a`` may carry leading batch axes and ``b`` is a matrix."""
    ad, bd = a.data, b.data
    if ad.ndim == 2:
        return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    flat = ad.reshape(-1, ad.shape[-1])

    def fn(g):
        return g @ bd.T, flat.T @ g.reshape(-1, g.shape[-1])

    return _node(ad @ bd, (a, b), fn)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def sin(a: Tensor) -> Tensor:
    ad = a.data
    return _node(np.sin(ad), (a,), lambda g: (g * np.cos(ad),))


def cos(a: Tensor) -> Tensor:
    ad = a.data
    return _node(np.cos(ad), (a,), lambda g: (-g * np.sin(ad),))


def minimum(a: Tensor, ceiling: float) -> Tensor:
    """Clamp from above; the gradient is cut where the ceiling is active."""
    ad = a.data
    mask = ad <= ceiling
    return _node(np.where(mask, ad, ceiling), (a,), lambda g: (g * mask,))


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.data.shape

    def fn(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _node(a.data[start:stop], (a,), fn)


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def fn(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(parts))
        )

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), fn)


def stack(parts: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    parts = [_as_tensor(p) for p in parts]
    return _node(np.stack([p.data for p in parts]), tuple(parts), lambda g: tuple(g))


def index0(a: Tensor, i: int) -> Tensor:
    shape = a.data.shape

    def fn(g):
        full = np.zeros(shape)
        full[i] = g
        return (full,)

    return _node(a.data[i], (a,), fn)


def add_first(a: Tensor, bias: Tensor) -> Tensor:
    """Add ``bias`` to the leading-axis slice 0 only (value slot of a stacked jet)."""
    out = a.data.copy()
    out[0] += bias.data
    bshape = bias.data.shape
    return _node(out, (a, bias), lambda g: (g, _unbroadcast(g[0], bshape)))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.data.shape
    return _node(np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, g / n),))


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` of every leaf that requires it."""
    if root.data.size != 1:
        raise ValueError("backward() needs a scalar root")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
