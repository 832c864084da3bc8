"""Residuals of the heat equation, convective faces and initial state; composite loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from heatpinn.autodiff import tape
from heatpinn.autodiff.params import ParamStore
from heatpinn.errors import ContractError, NumericError
from heatpinn.network import NetworkSpec, build_graph, check_params, weight_tensors
from heatpinn.physics import Points
from heatpinn.problem import EdgeBC, HeatProblem

PDE, IC = "pde", "bc0"


# -- pointwise residuals (numpy arrays or tape tensors) -----------------------

def pde_residual(ev, coeffs):
    """coeff_x * f_xx [+ coeff_y * f_yy] - f_t in scaled variables."""
    if ev.d_dt is None or ev.d2_dx2 is None:
        raise ContractError("PDE residual needs d_dt and d2_dx2")
    res = ev.d2_dx2 * coeffs[0] - ev.d_dt
    if len(coeffs) > 1:
        if ev.d2_dy2 is None:
            raise ContractError("2D PDE residual needs d2_dy2")
        res = res + ev.d2_dy2 * coeffs[1]
    return res


def bc_residual(side: int, ev, t_inf_hat, h_hat, biot_ref: float, axis: int = 0):
    """Convective face residual; ``side`` 1 is the low face, 2 the high face.

    The gradient term is weighted by k/(h L) = biot_ref / h_hat and taken along
    the outward normal, so both faces vanish exactly when
    h (T_air - T) = k dT/dn.
    """
    h_hat = np.asarray(h_hat, dtype=np.float64)
    if np.any(h_hat <= 0):
        raise ContractError("h = 0 is an insulated face; use the zero-gradient residual or the FE oracle")
    grad = ev.d_dx if axis == 0 else ev.d_dy
    if grad is None:
        raise ContractError("convective residual needs the normal derivative")
    weight = biot_ref / h_hat
    if side == 1:
        return (ev.value - t_inf_hat) - grad * weight
    if side == 2:
        return (t_inf_hat - ev.value) - grad * weight
    raise ContractError("side must be 1 or 2")


def insulated_residual(side: int, ev, axis: int = 0):
    grad = ev.d_dx if axis == 0 else ev.d_dy
    if grad is None:
        raise ContractError("insulated residual needs the normal derivative")
    return grad


def ic_residual(ev, t_inf_at_zero_hat):
    return t_inf_at_zero_hat - ev.value


# -- composite ----------------------------------------------------------------

def term_names(n_edges: int) -> list[str]:
    return [PDE, IC] + [f"bc{i + 1}" for i in range(n_edges)]


@dataclass
class LossBreakdown:
    terms: dict[str, float]
    lambdas: dict[str, float]
    composite: float

    def __getattr__(self, name):
        if name.startswith("loss_"):
            try:
                return self.__dict__["terms"][name[5:]]
            except KeyError:
                pass
        raise AttributeError(name)


def composite_loss(residuals: dict[str, np.ndarray], lambdas: dict[str, float] | None = None) -> LossBreakdown:
    """Mean-square residual per term and their lambda-weighted sum."""
    terms = {}
    for name, r in residuals.items():
        r = np.asarray(r, dtype=np.float64)
        if r.size == 0:
            raise ContractError(f"loss term {name} has no points")
        terms[name] = float(np.mean(r * r))
    lambdas = {k: 1.0 for k in terms} if lambdas is None else dict(lambdas)
    composite = float(sum(lambdas[k] * v for k, v in terms.items()))
    return LossBreakdown(terms, lambdas, composite)


def update_normalization(losses, threshold: float = 0.01):
    """Normalization factors from loss ratios to the largest term.

    Terms within ``threshold`` of the largest keep factor 1; smaller ones get
    ratio / threshold. Accepts a mapping or a sequence and returns the same kind.
    """
    keys = list(losses) if isinstance(losses, dict) else None
    vals = np.array([losses[k] for k in keys] if keys else list(losses), dtype=np.float64)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ContractError("losses must be finite and non-negative")
    top = vals.max() if vals.size else 0.0
    if top == 0.0:
        lam = np.ones_like(vals)
    else:
        ratio = vals / top
        lam = np.where(ratio >= threshold, 1.0, ratio / threshold)
        lam[np.argmax(vals)] = 1.0
        # a zero loss has nothing to rescale; keep it in (0, 1]
        lam = np.where(vals == 0.0, 1.0, lam)
    if keys is not None:
        return {k: float(v) for k, v in zip(keys, lam)}
    return [float(v) for v in lam]


# -- batches ------------------------------------------------------------------

@dataclass
class CollocationBatch:
    interior: Points
    initial: Points
    boundaries: tuple[Points, ...] = field(default_factory=tuple)

    @property
    def boundary1_points(self) -> Points:
        return self.boundaries[0]

    @property
    def boundary2_points(self) -> Points:
        return self.boundaries[1]

    @property
    def initial_points(self) -> Points:
        return self.initial

    @property
    def interior_points(self) -> Points:
        return self.interior

    def groups(self) -> list[tuple[str, Points]]:
        return [(PDE, self.interior), (IC, self.initial)] + [
            (f"bc{i + 1}", p) for i, p in enumerate(self.boundaries)
        ]


@dataclass(frozen=True)
class LossDefinition:
    """Everything the residuals need beyond the network itself, in scaled units."""

    diffusion: tuple[float, ...]
    edges: tuple[EdgeBC, ...]
    biot_ref: tuple[float, ...]  # k / (h_ref L_axis) per edge
    init_hat: float
    problem: HeatProblem

    @classmethod
    def from_problem(cls, problem: HeatProblem) -> "LossDefinition":
        s = problem.scaling
        biot = tuple(problem.material.k / (s.h_ref * problem.length(e.axis)) for e in problem.edges)
        return cls(
            s.diffusion_coefficients(problem.material),
            problem.edges,
            biot,
            problem.init_temp / s.temp_ref,
            problem,
        )

    @property
    def names(self) -> list[str]:
        return term_names(len(self.edges))

    def request(self, group: str | None = None) -> tuple[str, ...]:
        """Input derivatives needed by one loss group (all groups when None)."""
        two_d = len(self.diffusion) == 2
        if group is None or group == PDE:
            full = ("d_dx", "d_dt", "d2_dx2") + (("d_dy", "d2_dy2") if two_d else ())
            return full if group is None else tuple(l for l in full if l != "d_dx" and l != "d_dy")
        if group == IC:
            return ()
        edge = self.edges[int(group[2:]) - 1]
        return ("d_dx",) if edge.axis == 0 else ("d_dy",)

    def residuals(self, batch: CollocationBatch, evals: dict[str, object]) -> dict[str, object]:
        """Residual per term given per-group evaluations (arrays or tensors)."""
        out = {PDE: pde_residual(evals[PDE], self.diffusion), IC: ic_residual(evals[IC], self.init_hat)}
        for i, edge in enumerate(self.edges):
            name = f"bc{i + 1}"
            pts, ev = batch.boundaries[i], evals[name]
            side = edge.side + 1
            if edge.convective:
                t_inf = self.problem.air_hat(pts.t).reshape(_shape_of(ev.value))
                h_hat = pts.column(edge.h_label).reshape(_shape_of(ev.value))
                out[name] = bc_residual(side, ev, t_inf, h_hat, self.biot_ref[i], edge.axis)
            else:
                out[name] = insulated_residual(side, ev, edge.axis)
        return out


def _shape_of(v) -> tuple[int, ...]:
    return v.shape if not isinstance(v, tape.Tensor) else v.data.shape


@dataclass
class _GraphEval:
    value: tape.Tensor
    d_dx: tape.Tensor | None = None
    d_dt: tape.Tensor | None = None
    d2_dx2: tape.Tensor | None = None
    d_dy: tape.Tensor | None = None
    d2_dy2: tape.Tensor | None = None


def _graph_eval(out) -> _GraphEval:
    return _GraphEval(
        out.val, out.d1.get("x"), out.d1.get("t"), out.d2.get("x"), out.d1.get("y"), out.d2.get("y")
    )


def loss_gradient(
    spec: NetworkSpec,
    params: ParamStore,
    batch: CollocationBatch,
    loss_def: LossDefinition,
    lambdas: dict[str, float] | None = None,
) -> tuple[np.ndarray, LossBreakdown]:
    """Gradient of the composite loss with respect to every parameter.

    Lambdas are treated as constants. The PDE term differentiates through
    second input derivatives, so the returned gradient includes those paths.
    """
    check_params(spec, params)
    groups = batch.groups()
    for name, pts in groups:
        if len(pts) == 0:
            raise ContractError(f"loss term {name} has no points")
    weights = weight_tensors(params, requires_grad=True)
    evals = {
        name: _graph_eval(build_graph(spec, weights, pts, loss_def.request(name))) for name, pts in groups
    }
    residuals = loss_def.residuals(batch, evals)
    lambdas = {k: 1.0 for k in residuals} if lambdas is None else lambdas

    terms = {}
    total = None
    for name, r in residuals.items():
        term = tape.mean(tape.square(r))
        terms[name] = float(term.data)
        weighted = tape.scale(term, lambdas[name])
        total = weighted if total is None else total + weighted
    breakdown = LossBreakdown(terms, dict(lambdas), float(total.data))
    if not np.isfinite(breakdown.composite):
        raise NumericError("non-finite loss", losses=terms)
    tape.backward(total)
    grads = {name: (w.grad if w.grad is not None else np.zeros_like(w.data)) for name, w in weights.items()}
    grad = params.flatten_grads(grads)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient", slot=params.slot_of(int(np.argmin(np.isfinite(grad)))), losses=terms)
    return grad, breakdown


def evaluate_losses(spec: NetworkSpec, params: ParamStore, batch: CollocationBatch,
                    loss_def: LossDefinition, lambdas: dict[str, float] | None = None) -> LossBreakdown:
    """Composite loss without the backward pass (numpy residuals)."""
    from heatpinn.network import evaluate

    evals = {name: evaluate(spec, params, pts, loss_def.request(name)) for name, pts in batch.groups()}
    return composite_loss(loss_def.residuals(batch, evals), lambdas)
