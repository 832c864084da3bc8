"""Grid solver for transient conduction with convective faces; the reference the networks are checked against.

Space is discretized with second-order central differences on a node-centered
grid; each convective face uses a ghost node so that h (T_air - T) = k dT/dn
holds to second order. The resulting linear system dT/dt = A T + b T_air(t) is
integrated exactly over each step for piecewise-linear air temperature
(augmented-matrix exponential), which is unconditionally stable and keeps
every slice inside the range of the initial and air temperatures.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import expm

from heatpinn.errors import ContractError, DomainError, NumericError
from heatpinn.physics import AirProfile, MaterialProps, air_temperature_unchecked, thermal_diffusivity


@dataclass(frozen=True)
class MeshConfig:
    elements_per_direction: int = 10
    dt: float = 5.0  # s
    t_end: float = 900.0  # s

    def __post_init__(self):
        if self.elements_per_direction < 2:
            raise ContractError("need at least 2 elements per direction")
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ContractError("t_end must be at least dt")

    def refined(self) -> "MeshConfig":
        """Half the element size and half the step."""
        return MeshConfig(2 * self.elements_per_direction, self.dt / 2, self.t_end)


@dataclass
class FieldHistory:
    """Temperatures of shape (times, nodes along x[, nodes along y]) in degC."""

    node_positions: tuple[np.ndarray, ...]  # per axis, m
    times: np.ndarray  # s
    temperatures: np.ndarray

    def __post_init__(self):
        expected = (len(self.times),) + tuple(len(p) for p in self.node_positions)
        if self.temperatures.shape != expected:
            raise ContractError(f"temperatures shape {self.temperatures.shape} != {expected}")

    @property
    def dimensionality(self) -> int:
        return len(self.node_positions)

    def slice_at(self, time_s: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.times, time_s, rtol=0, atol=1e-9))
        if idx.size == 0:
            raise DomainError(f"no stored slice at t = {time_s} s")
        return self.temperatures[idx[0]]


# -- operators ----------------------------------------------------------------

def _axis_operator(n_el: int, length: float, alpha: float, k: float, h_low: float, h_high: float):
    """1D generator A and air-coupling vector b on n_el + 1 nodes."""
    dx = length / n_el
    n = n_el + 1
    c = alpha / dx**2
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = -2 * c
        if i > 0:
            A[i, i - 1] = c
        if i < n - 1:
            A[i, i + 1] = c
    # ghost nodes mirror the neighbour and add the convective flux
    A[0, 1] = 2 * c
    A[-1, -2] = 2 * c
    b = np.zeros(n)
    for idx, h in ((0, h_low), (n - 1, h_high)):
        if h < 0:
            raise ContractError("heat transfer coefficients must be >= 0")
        g = 2 * c * dx * h / k
        A[idx, idx] -= g
        b[idx] += g
    return A, b


class _Propagator:
    """Exact step for dT/dt = A T + b (g0 + s tau) over durations of any length."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A, self.b = A, b
        self._cache: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _mats(self, tau: float):
        key = round(tau, 12)
        if key not in self._cache:
            n = len(self.b)
            M = np.zeros((n + 2, n + 2))
            M[:n, :n] = self.A
            M[:n, n] = self.b
            M[n, n + 1] = 1.0
            E = expm(M * tau)
            self._cache[key] = (E[:n, :n], E[:n, n], E[:n, n + 1])
        return self._cache[key]

    def step(self, T: np.ndarray, g0: float, slope: float, tau: float) -> np.ndarray:
        E, f1, f2 = self._mats(tau)
        return E @ T + f1 * g0 + f2 * slope


def _march(A, b, profile: AirProfile, init_temp: float, mesh: MeshConfig):
    """Step from ``init_temp`` (scalar or per-node array); steps are split at air-profile breakpoints."""
    n_steps = int(np.ceil(mesh.t_end / mesh.dt - 1e-9))
    times = np.minimum(np.arange(n_steps + 1) * mesh.dt, mesh.t_end)
    breaks = np.asarray(profile.times) * 60.0
    prop = _Propagator(A, b)
    T = np.broadcast_to(np.asarray(init_temp, dtype=np.float64).ravel(), b.shape).astype(np.float64)
    out = np.empty((len(times), len(b)))
    out[0] = T
    air = air_temperature_unchecked(profile, times / 60.0)
    for k in range(n_steps):
        t0, t1 = times[k], times[k + 1]
        inner = breaks[(breaks > t0 + 1e-9) & (breaks < t1 - 1e-9)]
        if inner.size == 0:
            T = prop.step(T, air[k], (air[k + 1] - air[k]) / (t1 - t0), t1 - t0)
        else:
            edges = np.concatenate(([t0], inner, [t1]))
            temps = air_temperature_unchecked(profile, edges / 60.0)
            for a, c, ga, gc in zip(edges[:-1], edges[1:], temps[:-1], temps[1:]):
                T = prop.step(T, ga, (gc - ga) / (c - a), c - a)
        out[k + 1] = T
    if not np.all(np.isfinite(out)):
        raise NumericError("solver produced non-finite temperatures")
    return times, out


def solve_1d(props: MaterialProps, L: float, h1: float, h2: float, profile: AirProfile,
             init_temp: float, mesh: MeshConfig = MeshConfig()) -> FieldHistory:
    """Through-thickness history of a slab; ``h1`` acts at x = 0 and ``h2`` at x = L.

    ``init_temp`` is a uniform temperature or one value per node.
    """
    if not L > 0:
        raise ContractError("length must be positive")
    n = mesh.elements_per_direction
    A, b = _axis_operator(n, L, thermal_diffusivity(props), props.k, h1, h2)
    times, temps = _march(A, b, profile, init_temp, mesh)
    return FieldHistory((np.linspace(0.0, L, n + 1),), times, temps)


def solve_2d(props: MaterialProps, Lx: float, Ly: float, bc_per_edge, profile: AirProfile,
             init_temp: float, mesh: MeshConfig = MeshConfig()) -> FieldHistory:
    """Rectangular plate; ``bc_per_edge`` is (x=0, x=Lx, y=0, y=Ly) with h in W/m^2.K, 0 or None = insulated."""
    if not (Lx > 0 and Ly > 0):
        raise ContractError("lengths must be positive")
    hs = [0.0 if h is None else float(h) for h in bc_per_edge]
    if len(hs) != 4:
        raise ContractError("need one boundary entry for each of the four edges")
    n = mesh.elements_per_direction
    alpha = thermal_diffusivity(props)
    Ax, bx = _axis_operator(n, Lx, alpha, props.k, hs[0], hs[1])
    Ay, by = _axis_operator(n, Ly, alpha, props.k, hs[2], hs[3])
    I = np.eye(n + 1)
    # node (i, j) -> i * (n + 1) + j, x-major
    A = np.kron(Ax, I) + np.kron(I, Ay)
    b = np.add.outer(bx, by).ravel()
    times, temps = _march(A, b, profile, init_temp, mesh)
    grid = (np.linspace(0.0, Lx, n + 1), np.linspace(0.0, Ly, n + 1))
    return FieldHistory(grid, times, temps.reshape(len(times), n + 1, n + 1))


# -- queries and export -------------------------------------------------------

def probe(history: FieldHistory, position, time: float) -> float:
    """Multilinear interpolation in space, linear in time."""
    pos = np.atleast_1d(np.asarray(position, dtype=np.float64))
    if pos.size != history.dimensionality:
        raise ContractError(f"position needs {history.dimensionality} coordinates")
    interp = RegularGridInterpolator((history.times,) + tuple(history.node_positions), history.temperatures)
    query = np.concatenate(([time], pos))
    lo = [history.times[0]] + [p[0] for p in history.node_positions]
    hi = [history.times[-1]] + [p[-1] for p in history.node_positions]
    if np.any(query < lo) or np.any(query > hi) or not np.all(np.isfinite(query)):
        raise DomainError(f"probe {query.tolist()} outside the stored time/space range")
    return float(interp(query[None, :])[0])


def _position_labels(node_positions) -> list[str]:
    if len(node_positions) == 1:
        return [f"x={x:.9g}" for x in node_positions[0]]
    return [f"x={x:.9g};y={y:.9g}" for x in node_positions[0] for y in node_positions[1]]


def field_csv_text(history: FieldHistory) -> str:
    """Header ``time_s`` + one column per node (positions in m); one row per time slice."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s"] + _position_labels(history.node_positions))
    flat = history.temperatures.reshape(len(history.times), -1)
    for t, row in zip(history.times, flat):
        w.writerow([f"{t:.9g}"] + [f"{v:.9f}" for v in row])
    return buf.getvalue()


def write_field_csv(history: FieldHistory, path) -> None:
    Path(path).write_text(field_csv_text(history))


def read_field_csv(path) -> FieldHistory:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "time_s":
        raise ContractError(f"{path} is not a field CSV")
    coords = [dict(part.split("=") for part in label.split(";")) for label in rows[0][1:]]
    xs = sorted({float(c["x"]) for c in coords})
    has_y = "y" in coords[0]
    ys = sorted({float(c["y"]) for c in coords}) if has_y else None
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    times = data[:, 0]
    shape = (len(times), len(xs)) + ((len(ys),) if has_y else ())
    grid = (np.array(xs),) + ((np.array(ys),) if has_y else ())
    return FieldHistory(grid, times, data[:, 1:].reshape(shape))
