"""Random collocation batches, denser near air-temperature kinks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from heatpinn.errors import ContractError
from heatpinn.loss import CollocationBatch
from heatpinn.physics import Points
from heatpinn.problem import H_LABELS, HeatProblem


@dataclass(frozen=True)
class SamplerConfig:
    batch_per_term: int = 150
    densify_fraction: float = 0.3
    kink_window: float = 0.05  # scaled time half-width
    h_range: tuple[float, float] = (20.0, 200.0)  # W/m^2.K, used when h are inputs
    seed: int = 0

    def __post_init__(self):
        if self.batch_per_term < 1:
            raise ContractError("batch_per_term must be at least 1")
        if not 0.0 <= self.densify_fraction < 1.0:
            raise ContractError("densify_fraction must lie in [0, 1)")
        if not self.kink_window > 0:
            raise ContractError("kink_window must be positive")
        lo, hi = self.h_range
        if not 0 < lo <= hi:
            raise ContractError("h_range must satisfy 0 < min <= max")


def sample_times(rng: np.random.Generator, n: int, kinks: list[float], fraction: float,
                 window: float) -> np.ndarray:
    """Uniform scaled times on [0, 1] with ``fraction`` of them near a kink.

    Each densified time picks a kink uniformly and is drawn uniformly from the
    part of [kink - window, kink + window] that lies inside [0, 1].
    """
    t = rng.random(n)
    n_dense = int(round(fraction * n)) if kinks else 0
    if n_dense:
        centers = np.asarray(kinks)[rng.integers(len(kinks), size=n_dense)]
        lo = np.clip(centers - window, 0.0, 1.0)
        hi = np.clip(centers + window, 0.0, 1.0)
        t[:n_dense] = lo + (hi - lo) * rng.random(n_dense)
    return t


def _h_columns(rng: np.random.Generator, n: int, problem: HeatProblem, config: SamplerConfig):
    if problem.h_as_inputs:
        lo, hi = np.log(config.h_range[0]), np.log(config.h_range[1])
        h_ref = problem.scaling.h_ref
        return [np.exp(lo + (hi - lo) * rng.random(n)) / h_ref for _ in H_LABELS]
    fixed = problem.fixed_h_hat()
    return [np.full(n, fixed[l]) for l in H_LABELS]


def sample_batch(config: SamplerConfig, problem: HeatProblem, epoch: int) -> CollocationBatch:
    """Fresh scaled collocation points for one epoch; reproducible per (seed, epoch)."""
    rng = np.random.default_rng([config.seed, epoch])
    n = config.batch_per_term
    kinks = problem.kink_times_hat()
    dim = problem.dimensionality

    def group(t: np.ndarray, pin: dict[str, float]) -> Points:
        coords = {}
        for label in ("x", "y")[:dim]:
            coords[label] = np.full(n, pin[label]) if label in pin else rng.random(n)
        h1, h2 = _h_columns(rng, n, problem, config)
        return Points(coords["x"], t, h1, h2, coords.get("y"))

    def times() -> np.ndarray:
        return sample_times(rng, n, kinks, config.densify_fraction, config.kink_window)

    interior = group(times(), {})
    initial = group(np.zeros(n), {})
    boundaries = tuple(
        group(times(), {"xy"[e.axis]: float(e.side)}) for e in problem.edges
    )
    return CollocationBatch(interior, initial, boundaries)
