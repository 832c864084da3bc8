"""Dense and feature-engineered networks with exact input derivatives."""

from __future__ import annotations

import functools

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from heatpinn.autodiff import jet, tape
from heatpinn.autodiff.jet import Jet
from heatpinn.autodiff.params import ParamStore
from heatpinn.autodiff.tape import Tensor
from heatpinn.errors import ContractError, NumericError, RequestError
from heatpinn.physics import Points

log = logging.getLogger(__name__)

LABELS = ("x", "y", "t", "h1", "h2")
SPATIAL = ("x", "y")
DERIVATIVE_LABELS = ("d_dx", "d_dt", "d2_dx2", "d_dy", "d2_dy2")
EXP_CEILING = 30.0

_clamp_reported = False


# -- activations -----------------------------------------------------------

def _elu(z: np.ndarray) -> tuple[np.ndarray, ...]:
    # exp(min(z, 0)) is exactly 1 on the positive side, so no branch selection is needed
    ez = np.exp(np.minimum(z, 0.0))
    curv = ez - (z >= 0)
    return (ez - 1.0) + np.maximum(z, 0.0), ez, curv, curv


def _elu_value(z: np.ndarray) -> np.ndarray:
    return (np.exp(np.minimum(z, 0.0)) - 1.0) + np.maximum(z, 0.0)


def _relu(z: np.ndarray) -> tuple[np.ndarray, ...]:
    zero = np.zeros_like(z)
    return np.maximum(z, 0.0), (z > 0).astype(np.float64), zero, zero


def _tanh(z: np.ndarray) -> tuple[np.ndarray, ...]:
    s = np.tanh(z)
    d = 1.0 - s * s
    return s, d, -2.0 * s * d, -2.0 * d * (1.0 - 3.0 * s * s)


# each returns the activation and its first three derivatives
ACTIVATIONS = {"elu": _elu, "relu": _relu, "tanh": _tanh}

_VALUE = {
    "elu": _elu_value,
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
}


def activation(kind: str, z, order: int = 0):
    """Value (order 0) or derivative of the named activation at ``z``."""
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ContractError(f"unknown activation {kind!r}") from None
    if not 0 <= order <= 3:
        raise ContractError("activation derivatives are available up to order 3")
    out = fn(np.asarray(z, dtype=np.float64))[order]
    return float(out) if out.ndim == 0 else out


# -- specification ---------------------------------------------------------

@dataclass(frozen=True)
class NetworkSpec:
    architecture: str = "engineered"  # "plain" | "engineered"
    input_labels: tuple[str, ...] = ("x", "t")
    hidden_layers: int = 6
    nodes_per_layer: int = 32
    engineered_feature_count: int = 32
    activation: str = "elu"

    def __post_init__(self):
        object.__setattr__(self, "input_labels", tuple(self.input_labels))
        if self.architecture not in ("plain", "engineered"):
            raise ContractError(f"unknown architecture {self.architecture!r}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        labels = self.input_labels
        if len(set(labels)) != len(labels) or any(l not in LABELS for l in labels):
            raise ContractError(f"input labels must be distinct members of {LABELS}")
        if "x" not in labels or "t" not in labels:
            raise ContractError("inputs must include x and t")
        if self.hidden_layers < 1 or self.nodes_per_layer < 1:
            raise ContractError("need at least one hidden layer with one node")
        if self.architecture == "engineered" and self.engineered_feature_count < 1:
            raise ContractError("engineered architecture needs at least one feature")

    @property
    def dimensionality(self) -> int:
        return 2 if "y" in self.input_labels else 1

    @property
    def spatial_labels(self) -> tuple[str, ...]:
        return tuple(l for l in SPATIAL if l in self.input_labels)

    @property
    def extra_labels(self) -> tuple[str, ...]:
        """Inputs that bypass the engineered pre-layers."""
        return tuple(l for l in self.input_labels if l in ("h1", "h2"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_labels"] = list(self.input_labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**{**d, "input_labels": tuple(d["input_labels"])})

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        F, W, H = self.engineered_feature_count, self.nodes_per_layer, self.hidden_layers
        slots: list[tuple[str, tuple[int, ...]]] = []
        if self.architecture == "engineered":
            for label in ("t",) + self.spatial_labels:
                slots += [(f"pre_{label}.w", (1, F)), (f"pre_{label}.b", (F,))]
            width_in = F + len(self.extra_labels)
        else:
            width_in = len(self.input_labels)
        for i in range(H):
            slots += [(f"dense{i}.w", (width_in if i == 0 else W, W)), (f"dense{i}.b", (W,))]
        slots += [("out.w", (W, 1)), ("out.b", (1,))]
        return slots

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layout())


def init_glorot(spec: NetworkSpec, seed: int) -> ParamStore:
    """Glorot-uniform weights, zero biases; pre-layers count as 1 -> F dense maps."""
    params = ParamStore(spec.layout())
    rng = np.random.default_rng(seed)
    for name, shape in spec.layout():
        if name.endswith(".w"):
            fan_in, fan_out = shape
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


@functools.lru_cache(maxsize=64)
def _layout_of(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    return spec.layout()


def check_params(spec: NetworkSpec, params: ParamStore) -> None:
    if params._layout != _layout_of(spec):
        raise ContractError("parameter layout does not match the network spec")


# -- graph construction ----------------------------------------------------

def _direction(label: str) -> str:
    return label.split("_d")[-1][0]


def _requested_directions(spec: NetworkSpec, request) -> tuple[set[str], set[str]]:
    first: set[str] = set()
    second: set[str] = set()
    for label in request:
        if label not in DERIVATIVE_LABELS:
            raise RequestError(f"unknown derivative label {label!r}")
        direction = _direction(label)
        if direction not in spec.input_labels:
            raise RequestError(f"{label} requested but {direction!r} is not a network input")
        first.add(direction)
        if label.startswith("d2_"):
            second.add(direction)
    return first, second


def _input_jet(points: Points, label: str, first: set[str]) -> Jet:
    values = points.column(label)
    if label in first:
        return jet.variable(values, label)
    return Jet(tape.constant(values.reshape(-1, 1)))


def _check_finite(t: Tensor, slot: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite activations after {slot}", slot=slot)


def _note_clamp(arg: np.ndarray) -> None:
    global _clamp_reported
    if not _clamp_reported and np.any(arg > EXP_CEILING):
        log.warning("engineered exponent exceeded %.0f and was clamped", EXP_CEILING)
        _clamp_reported = True


def engineered_features(spec: NetworkSpec, weights: dict[str, Tensor], points: Points,
                        first: set[str], second: set[str]) -> Jet:
    """exp(a t + a0) * sin(b x + b0) [* sin(c y + c0)] per feature, as a jet."""
    t_in = _input_jet(points, "t", first)
    arg = jet.scale_shift(t_in, weights["pre_t.w"], weights["pre_t.b"])
    _note_clamp(arg.val.data)
    feat = jet.exp(arg, second, ceiling=EXP_CEILING)
    for label in spec.spatial_labels:
        s_in = _input_jet(points, label, first)
        phase = jet.scale_shift(s_in, weights[f"pre_{label}.w"], weights[f"pre_{label}.b"])
        feat = jet.product(feat, jet.sin(phase, second), second)
    _check_finite(feat.val, "pre_t")
    return feat


def _input_stack(spec: NetworkSpec, points: Points, first: tuple[str, ...],
                 second: tuple[str, ...]) -> jet.Stacked:
    """Raw inputs of the plain network as a constant stacked jet."""
    n = len(points)
    cols = spec.input_labels
    data = np.zeros((1 + len(first) + len(second), n, len(cols)))
    data[0] = np.column_stack([points.column(l) for l in cols])
    for i, d in enumerate(first):
        data[1 + i, :, cols.index(d)] = 1.0
    return jet.Stacked(tape.constant(data), first, second)


def build_graph(spec: NetworkSpec, weights: dict[str, Tensor], points: Points, request) -> Jet:
    """Network output on ``points`` as an (N, 1) jet carrying the requested derivatives."""
    first_set, second_set = _requested_directions(spec, request)
    first, second = tuple(sorted(first_set)), tuple(sorted(second_set))
    n = len(points)
    if spec.dimensionality == 2 and points.y is None:
        raise ContractError("2D network needs points with a y component")
    if spec.dimensionality == 1 and points.y is not None:
        raise ContractError("1D network cannot take points with a y component")
    derivs = ACTIVATIONS[spec.activation]

    if spec.architecture == "engineered":
        feat = engineered_features(spec, weights, points, first_set, second_set)
        h = jet.stacked(feat, first, second)
        if spec.extra_labels:
            extra = np.zeros((h.tensor.data.shape[0], n, len(spec.extra_labels)))
            extra[0] = np.column_stack([points.column(l) for l in spec.extra_labels])
            h = jet.Stacked(tape.concat([h.tensor, tape.constant(extra)], axis=2), first, second)
    else:
        h = _input_stack(spec, points, first, second)

    for i in range(spec.hidden_layers):
        z = jet.stacked_affine(h, weights[f"dense{i}.w"], weights[f"dense{i}.b"])
        _check_finite(z.tensor, f"dense{i}")
        h = jet.stacked_activation(z, derivs)
    out = jet.stacked_affine(h, weights["out.w"], weights["out.b"])
    _check_finite(out.tensor, "out")
    return out.to_jet()


def weight_tensors(params: ParamStore, requires_grad: bool = False) -> dict[str, Tensor]:
    return {name: Tensor(params[name].copy(), requires_grad=requires_grad) for name in params.slots}


@dataclass
class EvalResult:
    value: np.ndarray
    d_dx: np.ndarray | None = None
    d_dt: np.ndarray | None = None
    d2_dx2: np.ndarray | None = None
    d_dy: np.ndarray | None = None
    d2_dy2: np.ndarray | None = None


def _component(out: Jet, label: str, n: int) -> np.ndarray:
    table = out.d2 if label.startswith("d2_") else out.d1
    t = table.get(_direction(label))
    return np.zeros(n) if t is None else t.data[:, 0].copy()


def evaluate(spec: NetworkSpec, params: ParamStore, points: Points, derivative_request=()) -> EvalResult:
    """Network value and exact input derivatives on a batch of scaled points."""
    check_params(spec, params)
    out = build_graph(spec, weight_tensors(params), points, derivative_request)
    n = len(points)
    res = EvalResult(out.val.data[:, 0].copy())
    for label in derivative_request:
        setattr(res, label, _component(out, label, n))
    return res


def forward(spec: NetworkSpec, params: ParamStore, points: Points) -> np.ndarray:
    """Scaled temperature prediction, plain numpy (no graph)."""
    check_params(spec, params)
    if (spec.dimensionality == 2) != (points.y is not None):
        raise ContractError("point dimensionality does not match the network")
    act = _VALUE[spec.activation]
    if spec.architecture == "engineered":
        arg = points.t[:, None] * params["pre_t.w"] + params["pre_t.b"]
        _note_clamp(arg)
        h = np.exp(np.minimum(arg, EXP_CEILING))
        for label in spec.spatial_labels:
            h = h * np.sin(points.column(label)[:, None] * params[f"pre_{label}.w"] + params[f"pre_{label}.b"])
        if spec.extra_labels:
            h = np.column_stack([h] + [points.column(l) for l in spec.extra_labels])
    else:
        h = np.column_stack([points.column(l) for l in spec.input_labels])
    for i in range(spec.hidden_layers):
        h = act(h @ params[f"dense{i}.w"] + params[f"dense{i}.b"])
    out = (h @ params["out.w"] + params["out.b"])[:, 0]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network output", slot="out")
    return out


def engineered_layer(x_hat, t_hat, params: ParamStore, y_hat=None) -> np.ndarray:
    """Feature vector(s) of the engineered first layer at scalar or array inputs."""
    x = np.atleast_1d(np.asarray(x_hat, dtype=np.float64))[:, None]
    t = np.atleast_1d(np.asarray(t_hat, dtype=np.float64))[:, None]
    feat = np.exp(np.minimum(t * params["pre_t.w"] + params["pre_t.b"], EXP_CEILING))
    feat = feat * np.sin(x * params["pre_x.w"] + params["pre_x.b"])
    if y_hat is not None:
        y = np.atleast_1d(np.asarray(y_hat, dtype=np.float64))[:, None]
        feat = feat * np.sin(y * params["pre_y.w"] + params["pre_y.b"])
    return feat[0] if np.ndim(x_hat) == 0 and np.ndim(t_hat) == 0 else feat
