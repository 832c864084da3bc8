"""Definition of one heat-conduction experiment shared by loss, sampler and trainer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from heatpinn.errors import ContractError
from heatpinn.physics import AirProfile, Geometry, MaterialProps, Scaling, air_temperature_unchecked

H_LABELS = ("h1", "h2")


@dataclass(frozen=True)
class EdgeBC:
    """One face of the part. ``h_label`` picks the coefficient; None means insulated."""

    axis: int  # 0 -> x, 1 -> y
    side: int  # 0 -> low face (coordinate 0), 1 -> high face
    h_label: str | None

    @property
    def name(self) -> str:
        return f"{'xy'[self.axis]}{self.side}"

    @property
    def convective(self) -> bool:
        return self.h_label is not None


def default_edges(dimensionality: int) -> tuple[EdgeBC, ...]:
    if dimensionality == 1:
        return (EdgeBC(0, 0, "h1"), EdgeBC(0, 1, "h2"))
    # x = 0 and y = 0 faces convective, far faces insulated
    return (EdgeBC(0, 0, "h1"), EdgeBC(0, 1, None), EdgeBC(1, 0, "h2"), EdgeBC(1, 1, None))


@dataclass
class HeatProblem:
    material: MaterialProps
    geometry: Geometry
    profile: AirProfile
    time_window_min: float
    h_values: dict[str, float] | None = None  # fixed coefficients; None -> h are network inputs
    init_temp: float | None = None  # defaults to the air temperature at t = 0
    edges: tuple[EdgeBC, ...] | None = None
    scaling: Scaling = field(init=False)

    def __post_init__(self):
        dim = self.geometry.dimensionality
        if self.edges is None:
            self.edges = default_edges(dim)
        self.edges = tuple(self.edges)
        expected = {(a, s) for a in range(dim) for s in (0, 1)}
        if {(e.axis, e.side) for e in self.edges} != expected or len(self.edges) != 2 * dim:
            raise ContractError(f"a {dim}D problem needs exactly one boundary entry per face")
        for e in self.edges:
            if e.h_label is not None and e.h_label not in H_LABELS:
                raise ContractError(f"edge {e.name} references unknown coefficient {e.h_label!r}")
        if self.h_values is not None:
            for label in self.used_h_labels:
                h = self.h_values.get(label)
                if h is None or not h > 0:
                    raise ContractError(f"fixed coefficient {label} must be given and positive")
        if not self.time_window_min > 0:
            raise ContractError("time window must be positive")
        if self.init_temp is None:
            self.init_temp = float(self.profile.temps[0])
        self.scaling = Scaling.for_problem(self.geometry, self.time_window_min * 60.0, self.profile)

    @property
    def dimensionality(self) -> int:
        return self.geometry.dimensionality

    @property
    def h_as_inputs(self) -> bool:
        return self.h_values is None

    @property
    def used_h_labels(self) -> tuple[str, ...]:
        return tuple(l for l in H_LABELS if any(e.h_label == l for e in self.edges))

    def input_labels(self) -> tuple[str, ...]:
        labels = ("x", "y", "t") if self.dimensionality == 2 else ("x", "t")
        if self.h_as_inputs:
            labels += H_LABELS
        return labels

    def fixed_h_hat(self) -> dict[str, float]:
        vals = self.h_values or {}
        return {l: vals.get(l, self.scaling.h_ref) / self.scaling.h_ref for l in H_LABELS}

    def air_hat(self, t_hat) -> np.ndarray:
        """Scaled air temperature at scaled times (held constant past the profile end)."""
        t_min = np.asarray(t_hat) * self.time_window_min
        return air_temperature_unchecked(self.profile, t_min) / self.scaling.temp_ref

    def kink_times_hat(self) -> list[float]:
        from heatpinn.physics import kink_times

        return [k / self.time_window_min for k in kink_times(self.profile) if k <= self.time_window_min]

    def length(self, axis: int) -> float:
        return self.geometry.lengths[axis]

    def edge_h_physical(self, edge: EdgeBC, h1: float | None = None, h2: float | None = None) -> float:
        """Coefficient in W/m^2.K for the FE oracle (0 for insulated faces)."""
        if edge.h_label is None:
            return 0.0
        given = {"h1": h1, "h2": h2}[edge.h_label]
        if given is not None:
            return float(given)
        if self.h_values is None:
            raise ContractError(f"{edge.h_label} must be supplied when coefficients are network inputs")
        return float(self.h_values[edge.h_label])
