"""Truncated Taylor jets for input derivatives.

A :class:`Jet` carries a value together with its first derivatives along a set
of input directions and its pure second derivatives along a subset of them.
Missing entries are identically zero, which keeps constant inputs (heat
transfer coefficients, time in the second-order slot) free of wasted work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from heatpinn.autodiff import tape
from heatpinn.autodiff.tape import Tensor


@dataclass
class Jet:
    val: Tensor
    d1: dict[str, Tensor] = field(default_factory=dict)
    d2: dict[str, Tensor] = field(default_factory=dict)

    def map_linear(self, fn: Callable[[Tensor], Tensor]) -> "Jet":
        """Apply a linear map to every component (no bias on derivatives)."""
        return Jet(
            fn(self.val),
            {k: fn(v) for k, v in self.d1.items()},
            {k: fn(v) for k, v in self.d2.items()},
        )


def variable(values: np.ndarray, direction: str) -> Jet:
    """An input coordinate as an (N, 1) jet with unit derivative along itself."""
    col = tape.constant(np.asarray(values, dtype=np.float64).reshape(-1, 1))
    d1 = {direction: tape.constant(np.ones_like(col.data))}
    return Jet(col, d1, {})


def affine(jet: Jet, weight: Tensor, bias: Tensor) -> Jet:
    """Dense layer ``z = a @ W + b``."""
    out = jet.map_linear(lambda v: tape.matmul(v, weight))
    out.val = out.val + bias
    return out


def scale_shift(jet: Jet, weight: Tensor, bias: Tensor) -> Jet:
    """Elementwise ``z = a * w + b`` for an (N, 1) input broadcast to a row of weights."""
    out = jet.map_linear(lambda v: tape.mul(v, weight))
    out.val = out.val + bias
    return out


def compose(jet: Jet, f0: Tensor, f1: Tensor | None, f2: Tensor | None, second: set[str]) -> Jet:
    """Chain rule for ``g(u)`` given g(u), g'(u), g''(u) as tensors.

    ``second`` lists directions whose second derivative must be produced.
    """
    d1 = {k: f1 * du for k, du in jet.d1.items()}
    d2 = {}
    for k in sorted(second):
        du = jet.d1.get(k)
        if du is None:
            continue
        term = f2 * tape.square(du)
        d2u = jet.d2.get(k)
        d2[k] = term if d2u is None else term + f1 * d2u
    return Jet(f0, d1, d2)


def product(a: Jet, b: Jet, second: set[str]) -> Jet:
    """Leibniz rule up to second order."""
    val = a.val * b.val
    d1 = {}
    for k in sorted(set(a.d1) | set(b.d1)):
        da, db = a.d1.get(k), b.d1.get(k)
        if da is not None and db is not None:
            d1[k] = da * b.val + a.val * db
        elif da is not None:
            d1[k] = da * b.val
        else:
            d1[k] = a.val * db
    d2 = {}
    for k in sorted(second):
        terms = []
        if k in a.d2:
            terms.append(a.d2[k] * b.val)
        if k in b.d2:
            terms.append(a.val * b.d2[k])
        if k in a.d1 and k in b.d1:
            terms.append(tape.scale(a.d1[k] * b.d1[k], 2.0))
        if terms:
            acc = terms[0]
            for t in terms[1:]:
                acc = acc + t
            d2[k] = acc
    return Jet(val, d1, d2)


def sin(jet: Jet, second: set[str]) -> Jet:
    s = tape.sin(jet.val)
    c = tape.cos(jet.val)
    return compose(jet, s, c, -s, second)


def exp(jet: Jet, second: set[str], ceiling: float | None = None) -> Jet:
    arg = jet.val if ceiling is None else tape.minimum(jet.val, ceiling)
    e = tape.exp(arg)
    if ceiling is not None:
        # derivatives vanish where the clamp is active
        active = (jet.val.data <= ceiling).astype(np.float64)
        if not active.all():
            e_d = e * active
            return compose(jet, e, e_d, e_d, second)
    return compose(jet, e, e, e, second)


def concat(parts: list[Jet], widths: list[int], n: int) -> Jet:
    """Concatenate jets column-wise, filling absent derivatives with zeros."""
    val = tape.concat([p.val for p in parts])
    d1 = {}
    for k in sorted({k for p in parts for k in p.d1}):
        d1[k] = tape.concat([p.d1.get(k, tape.constant(np.zeros((n, w)))) for p, w in zip(parts, widths)])
    d2 = {}
    for k in sorted({k for p in parts for k in p.d2}):
        d2[k] = tape.concat([p.d2.get(k, tape.constant(np.zeros((n, w)))) for p, w in zip(parts, widths)])
    return Jet(val, d1, d2)


@dataclass
class Stacked:
    """Jet packed into one (C, N, W) tensor: value, first derivatives, pure second derivatives.

    Used for the dense stack so a layer costs one matmul and one fused
    activation node regardless of how many derivatives are carried.
    """

    tensor: Tensor
    first: tuple[str, ...]
    second: tuple[str, ...]

    def to_jet(self) -> Jet:
        k = len(self.first)
        d1 = {d: tape.index0(self.tensor, 1 + i) for i, d in enumerate(self.first)}
        d2 = {d: tape.index0(self.tensor, 1 + k + j) for j, d in enumerate(self.second)}
        return Jet(tape.index0(self.tensor, 0), d1, d2)


def stacked(j: Jet, first: tuple[str, ...], second: tuple[str, ...]) -> Stacked:
    shape = j.val.data.shape
    zeros = None

    def pick(t):
        nonlocal zeros
        if t is not None:
            return t
        if zeros is None:
            zeros = tape.constant(np.zeros(shape))
        return zeros

    parts = [j.val] + [pick(j.d1.get(d)) for d in first] + [pick(j.d2.get(d)) for d in second]
    return Stacked(tape.stack(parts), first, second)


def stacked_affine(s: Stacked, weight: Tensor, bias: Tensor) -> Stacked:
    """Dense layer on every slot; the bias only enters the value slot."""
    A, W, b = s.tensor.data, weight.data, bias.data
    out = A @ W
    out[0] += b
    flat = A.reshape(-1, A.shape[-1])

    def fn(G):
        return G @ W.T, flat.T @ G.reshape(-1, G.shape[-1]), G[0].sum(axis=0)

    return Stacked(tape.node(out, (s.tensor, weight, bias), fn), s.first, s.second)


def stacked_activation(s: Stacked, derivs: Callable[[np.ndarray], tuple]) -> Stacked:
    """Elementwise g applied to a stacked jet.

    ``derivs(z)`` returns g, g', g'', g''' at ``z``; the third derivative is
    only needed by the backward pass through the second-order slots.
    """
    Z = s.tensor.data
    k = len(s.first)
    pairs = [(1 + s.first.index(d), 1 + k + j) for j, d in enumerate(s.second)]
    s0, s1, s2, s3 = derivs(Z[0])
    out = np.empty_like(Z)
    out[0] = s0
    out[1:] = s1 * Z[1:]
    for i, j in pairs:
        out[j] += s2 * Z[i] * Z[i]

    def fn(G):
        dZ = np.empty_like(Z)
        dZ[1:] = G[1:] * s1
        dz0 = G[0] * s1
        if k:
            dz0 = dz0 + s2 * np.einsum("cnw,cnw->nw", G[1:1 + k], Z[1:1 + k])
        for i, j in pairs:
            dZ[i] += 2.0 * G[j] * s2 * Z[i]
            dz0 = dz0 + G[j] * (s3 * Z[i] * Z[i] + s2 * Z[j])
        dZ[0] = dz0
        return (dZ,)

    return Stacked(tape.node(out, (s.tensor,), fn), s.first, s.second)
