"""Material data, oven air profiles, scaling, and the cosine-series oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from heatpinn.errors import ContractError, DomainError


@dataclass(frozen=True)
class MaterialProps:
    k: float  # W/m.K
    rho: float  # kg/m^3
    cp: float  # J/kg.K

    def __post_init__(self):
        for name in ("k", "rho", "cp"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ContractError(f"material {name} must be positive, got {v}")


# carbon-fibre epoxy composite used throughout the validation cases
COMPOSITE = MaterialProps(k=0.47, rho=1573.0, cp=967.0)


def thermal_diffusivity(props: MaterialProps) -> float:
    return props.k / (props.rho * props.cp)


@dataclass(frozen=True)
class Ramp:
    rate: float  # degC/min, positive magnitude
    target: float  # degC


@dataclass(frozen=True)
class Hold:
    duration: float  # min


@dataclass(frozen=True)
class AirProfile:
    """Piecewise-linear oven air temperature, times in minutes.

    After the last segment the air holds its final temperature until
    ``total_duration``.
    """

    start_temp: float
    segments: tuple[Ramp | Hold, ...] = ()
    total_duration: float | None = None
    times: np.ndarray = field(init=False, repr=False, compare=False)
    temps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = [0.0]
        temps = [float(self.start_temp)]
        for seg in self.segments:
            if isinstance(seg, Ramp):
                if not seg.rate > 0:
                    raise ContractError("ramp rate must be positive")
                dur = abs(seg.target - temps[-1]) / seg.rate
                temp = float(seg.target)
            elif isinstance(seg, Hold):
                dur = float(seg.duration)
                temp = temps[-1]
            else:
                raise ContractError(f"unknown segment {seg!r}")
            if not dur > 0:
                raise ContractError("segment times must be strictly increasing")
            times.append(times[-1] + dur)
            temps.append(temp)
        end = times[-1]
        total = end if self.total_duration is None else float(self.total_duration)
        if total < end:
            raise ContractError(f"total_duration {total} ends before the last segment ({end})")
        if not total > 0:
            raise ContractError("profile needs a positive total_duration")
        if total > end:
            times.append(total)
            temps.append(temps[-1])
        object.__setattr__(self, "total_duration", total)
        object.__setattr__(self, "times", np.array(times))
        object.__setattr__(self, "temps", np.array(temps))

    @classmethod
    def ramp_hold(cls, start: float, rate: float, hold_temp: float, hold_minutes: float,
                  total_duration: float | None = None) -> "AirProfile":
        return cls(start, (Ramp(rate, hold_temp), Hold(hold_minutes)), total_duration)

    def with_duration(self, total_duration: float) -> "AirProfile":
        return AirProfile(self.start_temp, self.segments, total_duration)

    @property
    def max_abs_temp(self) -> float:
        return float(np.max(np.abs(self.temps)))


def air_temperature(profile: AirProfile, t):
    """Air temperature (degC) at ``t`` minutes; accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > profile.total_duration) or not np.all(np.isfinite(t_arr)):
        raise DomainError(f"time outside [0, {profile.total_duration}] min")
    out = np.interp(t_arr, profile.times, profile.temps)
    return float(out) if out.ndim == 0 else out


def air_temperature_unchecked(profile: AirProfile, t):
    """As :func:`air_temperature` but holds the end values outside the profile."""
    return np.interp(np.asarray(t, dtype=np.float64), profile.times, profile.temps)


def kink_times(profile: AirProfile) -> list[float]:
    """Minutes where the air ramp rate changes, always starting with 0."""
    times, temps = profile.times, profile.temps
    slopes = np.diff(temps) / np.diff(times)
    kinks = [0.0]
    for i in range(1, len(slopes)):
        if not math.isclose(slopes[i], slopes[i - 1], rel_tol=1e-12, abs_tol=1e-12):
            kinks.append(float(times[i]))
    return kinks


@dataclass(frozen=True)
class Geometry:
    lengths: tuple[float, ...]  # m

    def __post_init__(self):
        if len(self.lengths) not in (1, 2):
            raise ContractError("geometry must be 1D or 2D")
        if any(not v > 0 for v in self.lengths):
            raise ContractError("lengths must be positive")

    @property
    def dimensionality(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class Scaling:
    """Reference quantities: x/length_ref, t/time_ref, T/temp_ref, h/h_ref."""

    length_ref: float  # m
    time_ref: float  # s
    temp_ref: float  # degC
    h_ref: float = 100.0  # W/m^2.K
    length_ref_y: float | None = None  # m, 2D only

    def __post_init__(self):
        for name in ("length_ref", "time_ref", "temp_ref", "h_ref"):
            if not getattr(self, name) > 0:
                raise ContractError(f"scaling {name} must be positive")
        if self.length_ref_y is not None and not self.length_ref_y > 0:
            raise ContractError("scaling length_ref_y must be positive")

    @classmethod
    def for_problem(cls, geometry: Geometry, time_window_s: float, profile: AirProfile,
                    h_ref: float = 100.0) -> "Scaling":
        temp_ref = profile.max_abs_temp or 1.0
        ly = geometry.lengths[1] if geometry.dimensionality == 2 else None
        return cls(geometry.lengths[0], time_window_s, temp_ref, h_ref, ly)

    def diffusion_coefficients(self, props: MaterialProps) -> tuple[float, ...]:
        """Multipliers of the second derivatives in the scaled heat equation."""
        a = thermal_diffusivity(props) * self.time_ref
        coeffs = (a / self.length_ref**2,)
        if self.length_ref_y is not None:
            coeffs += (a / self.length_ref_y**2,)
        return coeffs

    def biot_inverse(self, props: MaterialProps, h_hat, axis: int = 0):
        """Gradient weight k/(h L) of the scaled convective condition."""
        length = self.length_ref if axis == 0 else self.length_ref_y
        return props.k / (np.asarray(h_hat) * self.h_ref * length)


@dataclass
class Points:
    """A batch of network input points in scaled units; all arrays share length N."""

    x: np.ndarray
    t: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        n = np.asarray(self.x).size
        for name in ("x", "t", "h1", "h2", "y"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.broadcast_to(np.asarray(v, dtype=np.float64), (n,)).copy() if np.ndim(v) == 0 else np.asarray(v, dtype=np.float64).ravel()
            if v.size != n:
                raise ContractError(f"point component {name} has {v.size} entries, expected {n}")
            setattr(self, name, v)

    def __len__(self) -> int:
        return self.x.size

    @classmethod
    def single(cls, x: float, t: float, h1: float = 1.0, h2: float = 1.0, y: float | None = None) -> "Points":
        return cls(np.array([x]), np.array([t]), np.array([h1]), np.array([h2]),
                   None if y is None else np.array([y]))

    def column(self, label: str) -> np.ndarray:
        v = getattr(self, label)
        if v is None:
            raise ContractError(f"points carry no {label!r} component")
        return v

    def take(self, idx) -> "Points":
        return Points(self.x[idx], self.t[idx], self.h1[idx], self.h2[idx],
                      None if self.y is None else self.y[idx])

    @staticmethod
    def join(parts: list["Points"]) -> "Points":
        has_y = parts[0].y is not None
        return Points(
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.h1 for p in parts]),
            np.concatenate([p.h2 for p in parts]),
            np.concatenate([p.y for p in parts]) if has_y else None,
        )


def nondimensionalize(scaling: Scaling, x, t, h1=None, h2=None, y=None) -> Points:
    """Physical (m, s, W/m^2.K) to scaled network inputs."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)) / scaling.length_ref
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)) / scaling.time_ref
    n = max(x.size, t.size)
    x, t = np.broadcast_to(x, (n,)), np.broadcast_to(t, (n,))
    h1 = np.ones(n) if h1 is None else np.broadcast_to(np.asarray(h1, dtype=np.float64) / scaling.h_ref, (n,))
    h2 = np.ones(n) if h2 is None else np.broadcast_to(np.asarray(h2, dtype=np.float64) / scaling.h_ref, (n,))
    if y is not None:
        if scaling.length_ref_y is None:
            raise ContractError("1D scaling cannot take a y coordinate")
        y = np.broadcast_to(np.asarray(y, dtype=np.float64) / scaling.length_ref_y, (n,))
    return Points(x, t, h1, h2, y)


def redimensionalize_point(scaling: Scaling, points: Points) -> dict[str, np.ndarray]:
    out = {
        "x": points.x * scaling.length_ref,
        "t": points.t * scaling.time_ref,
        "h1": points.h1 * scaling.h_ref,
        "h2": points.h2 * scaling.h_ref,
    }
    if points.y is not None:
        out["y"] = points.y * scaling.length_ref_y
    return out


def redimensionalize(scaling: Scaling, value):
    """Scaled temperature to degC."""
    return np.asarray(value) * scaling.temp_ref


def to_scaled_temp(scaling: Scaling, temp):
    return np.asarray(temp, dtype=np.float64) / scaling.temp_ref


@dataclass(frozen=True)
class SeriesSolution:
    """Truncated cosine series T0 + (TMax - T0) * sum A_n exp(-alpha (n pi/L)^2 t) cos(n pi x/L)."""

    base_temp: float
    peak_temp: float
    mode_weights: tuple[tuple[int, float], ...]

    def __post_init__(self):
        ns = [n for n, _ in self.mode_weights]
        if len(set(ns)) != len(ns) or any(n < 0 or int(n) != n for n in ns):
            raise ContractError("mode indices must be distinct non-negative integers")


def analytic_solution(sol: SeriesSolution, props: MaterialProps, L: float, x, t):
    """Evaluate the series at position ``x`` (m) and time ``t`` (s)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    alpha = thermal_diffusivity(props)
    total = np.zeros(np.broadcast(x, t).shape)
    for n, a_n in sol.mode_weights:
        w = n * math.pi / L
        total = total + a_n * np.exp(-alpha * w * w * t) * np.cos(w * x)
    out = sol.base_temp + (sol.peak_temp - sol.base_temp) * total
    return float(out) if out.ndim == 0 else out


def fit_series(initial, L: float, base_temp: float, peak_temp: float, n_modes: int = 50,
               quad_points: int = 2001) -> SeriesSolution:
    """Cosine-series weights reproducing an initial temperature profile ``initial(x)``.

    Projection by composite trapezoid quadrature on ``quad_points`` nodes.
    """
    xs = np.linspace(0.0, L, quad_points)
    g = (np.asarray(initial(xs), dtype=np.float64) - base_temp) / (peak_temp - base_temp)
    modes = []
    for n in range(n_modes):
        c = np.cos(n * math.pi * xs / L)
        coef = np.trapezoid(g * c, xs) / L
        modes.append((n, coef if n == 0 else 2.0 * coef))
    return SeriesSolution(base_temp, peak_temp, tuple(modes))
