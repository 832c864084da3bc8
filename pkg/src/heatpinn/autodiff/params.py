"""Flat parameter storage with named slots."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Slot:
    name: str
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def stop(self) -> int:
        return self.start + self.size


class ParamStore:
    """All trainable values in one float64 vector, addressed through named slots.

    Slots are contiguous, disjoint and cover the vector in declaration order.
    """

    def __init__(self, layout: list[tuple[str, tuple[int, ...]]], values: np.ndarray | None = None):
        slots = []
        offset = 0
        for name, shape in layout:
            slot = Slot(name, offset, tuple(int(s) for s in shape))
            slots.append(slot)
            offset = slot.stop
        self.slots: dict[str, Slot] = {s.name: s for s in slots}
        self._layout = [(s.name, s.shape) for s in slots]
        self._bounds = {s.name: (s.start, s.stop, s.shape) for s in slots}
        if len(self.slots) != len(slots):
            raise ValueError("duplicate slot names in layout")
        if values is None:
            values = np.zeros(offset)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (offset,):
            raise ValueError(f"expected {offset} parameter values, got {values.shape}")
        self.values = values

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, name: str) -> np.ndarray:
        start, stop, shape = self._bounds[name]
        return self.values[start:stop].reshape(shape)

    def __setitem__(self, name: str, value) -> None:
        s = self.slots[name]
        self.values[s.start:s.stop] = np.broadcast_to(np.asarray(value, dtype=np.float64), s.shape).ravel()

    @property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        return list(self._layout)

    def slot_of(self, index: int) -> str:
        for s in self.slots.values():
            if s.start <= index < s.stop:
                return s.name
        raise IndexError(index)

    def copy(self) -> "ParamStore":
        return ParamStore(self.layout, self.values.copy())

    def with_values(self, values: np.ndarray) -> "ParamStore":
        return ParamStore(self.layout, values)

    def flatten_grads(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        """Assemble per-slot gradients into a vector aligned with ``values``."""
        out = np.zeros_like(self.values)
        for name, g in grads.items():
            s = self.slots[name]
            out[s.start:s.stop] = np.asarray(g).ravel()
        return out
