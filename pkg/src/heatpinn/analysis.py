"""Turning a trained network into fields in physical units and measuring it against the grid solver."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from heatpinn.autodiff import ParamStore
from heatpinn.errors import ContractError, DomainError
from heatpinn.fe import FieldHistory
from heatpinn.network import NetworkSpec, forward
from heatpinn.physics import Scaling, nondimensionalize, redimensionalize


@dataclass(frozen=True)
class Model:
    """A trained network with the scaling it was trained under."""

    spec: NetworkSpec
    params: ParamStore
    scaling: Scaling
    h_values: dict[str, float] | None = None  # fixed coefficients when h is not an input

    @classmethod
    def from_checkpoint(cls, ckpt, h_values=None) -> "Model":
        return cls(ckpt.spec, ckpt.params, ckpt.scaling, h_values)

    @property
    def window_s(self) -> float:
        return self.scaling.time_ref

    def _h(self, label: str, given):
        if given is not None:
            return given
        if label in self.spec.input_labels:
            raise ContractError(f"{label} is a network input and must be supplied")
        return (self.h_values or {}).get(label, self.scaling.h_ref)

    def predict(self, positions, times_s, h1=None, h2=None, extrapolate: bool = False) -> np.ndarray:
        """Temperatures (degC) at physical points; ``positions`` is x or (x, y) arrays broadcast with time."""
        times_s = np.asarray(times_s, dtype=np.float64)
        if not extrapolate and (np.any(times_s < 0) or np.any(times_s > self.window_s * (1 + 1e-12))):
            raise DomainError(
                f"times beyond the trained window [0, {self.window_s / 60:g}] min need extrapolate=True"
            )
        pos = positions if isinstance(positions, tuple) else (positions,)
        if len(pos) != self.spec.dimensionality:
            raise ContractError(f"model is {self.spec.dimensionality}D, got {len(pos)} coordinates")
        arrays = np.broadcast_arrays(*(np.asarray(p, dtype=np.float64) for p in pos), times_s,
                                     np.asarray(self._h("h1", h1), dtype=np.float64),
                                     np.asarray(self._h("h2", h2), dtype=np.float64))
        shape = arrays[0].shape
        flat = [a.ravel() for a in arrays]
        x, y = flat[0], (flat[1] if len(pos) == 2 else None)
        t, a1, a2 = flat[len(pos):]
        pts = nondimensionalize(self.scaling, x, t, a1, a2, y)
        return redimensionalize(self.scaling, forward(self.spec, self.params, pts)).reshape(shape)

    def field(self, node_positions, times_s, h1=None, h2=None, extrapolate: bool = False) -> FieldHistory:
        """Network field on a tensor grid, in the same layout as the grid solver's history."""
        times_s = np.asarray(times_s, dtype=np.float64)
        grids = np.meshgrid(times_s, *node_positions, indexing="ij")
        temps = self.predict(tuple(grids[1:]), grids[0], h1, h2, extrapolate)
        return FieldHistory(tuple(np.asarray(p) for p in node_positions), times_s, temps)


@dataclass(frozen=True)
class Deviation:
    max_abs: float
    mean_abs: float

    @classmethod
    def between(cls, a, b) -> "Deviation":
        d = np.abs(np.asarray(a) - np.asarray(b))
        return cls(float(d.max()), float(d.mean()))


def probe_positions(length: float) -> dict[str, float]:
    """Named 1D probes: the midplane and the top surface (x = L)."""
    return {"midpoint": length / 2, "top": length}


def min_time(fn, repeats: int = 5) -> float:
    """Best-of-``repeats`` wall time of ``fn()`` in seconds."""
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best
