from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from heatpinn.autodiff.params import ParamStore
from heatpinn.errors import ContractError


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(
    params: ParamStore, grads: np.ndarray, state: AdamState, learning_rate: float
) -> tuple[ParamStore, AdamState]:
    """One bias-corrected Adam update. Returns new objects; inputs are left untouched."""
    grads = np.asarray(grads, dtype=np.float64)
    n = len(params)
    if grads.shape != (n,) or state.first_moment.shape != (n,) or state.second_moment.shape != (n,):
        raise ContractError(
            f"length mismatch: params {n}, grads {grads.shape}, moments {state.first_moment.shape}"
        )
    if not learning_rate > 0:
        raise ContractError("learning_rate must be positive")
    b1, b2 = state.beta1, state.beta2
    step = state.step_count + 1
    m = b1 * state.first_moment + (1.0 - b1) * grads
    v = b2 * state.second_moment + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    values = params.values - learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, step, b1, b2, state.epsilon)
    return params.with_values(values), new_state
