"""Training loop, loss history, and the binary checkpoint format."""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from heatpinn.autodiff import AdamState, ParamStore, adam_step
from heatpinn.errors import ContractError, FormatError, NumericError
from heatpinn.loss import LossDefinition, evaluate_losses, loss_gradient, update_normalization
from heatpinn.network import NetworkSpec, init_glorot
from heatpinn.physics import Scaling
from heatpinn.problem import HeatProblem
from heatpinn.sampler import SamplerConfig, sample_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100_000
    learning_rate: float = 1e-4
    normalization_update_interval: int = 100
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    checkpoint_interval: int = 10_000
    seed: int = 0  # parameter initialization; sampling uses sampler.seed
    normalization_threshold: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if self.normalization_update_interval < 1 or self.checkpoint_interval < 1:
            raise ContractError("intervals must be at least 1")


class LossHistory:
    """One row per epoch: per-term losses, the lambdas in force, and the composite."""

    def __init__(self, names: list[str]):
        self.names = list(names)
        self._rows: list[list[float]] = []

    @property
    def columns(self) -> list[str]:
        return ["epoch"] + [f"loss_{n}" for n in self.names] + [f"lambda_{n}" for n in self.names] + ["composite"]

    def append(self, epoch: int, terms: dict[str, float], lambdas: dict[str, float], composite: float) -> None:
        self._rows.append(
            [float(epoch)] + [terms[n] for n in self.names] + [lambdas[n] for n in self.names] + [composite]
        )

    def __len__(self) -> int:
        return len(self._rows)

    def as_array(self) -> np.ndarray:
        return np.array(self._rows, dtype=np.float64).reshape(len(self._rows), len(self.columns))

    @classmethod
    def from_array(cls, names: list[str], data: np.ndarray) -> "LossHistory":
        h = cls(names)
        h._rows = [list(map(float, r)) for r in np.asarray(data).reshape(-1, len(h.columns))]
        return h

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, self.columns.index(name)]

    @property
    def epochs(self) -> np.ndarray:
        return self.column("epoch").astype(int)

    @property
    def composite(self) -> np.ndarray:
        return self.column("composite")

    def running_minimum(self) -> np.ndarray:
        """Best composite loss seen up to each epoch."""
        return np.minimum.accumulate(self.composite)

    def lambdas(self) -> np.ndarray:
        """Lambda columns, shape (epochs, terms)."""
        a = self.as_array()
        k = len(self.names)
        return a[:, 1 + k:1 + 2 * k]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self._rows:
            w.writerow([str(int(row[0]))] + [repr(v) for v in row[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: ParamStore
    scaling: Scaling
    history: LossHistory
    adam: AdamState
    lambdas: dict[str, float]
    epoch: int  # epochs completed
    problem: dict | None = None  # experiment description, opaque to the trainer


@dataclass
class TrainResult:
    params: ParamStore
    history: LossHistory
    checkpoint: Checkpoint


def train(problem: HeatProblem, spec: NetworkSpec, config: TrainConfig, resume: Checkpoint | None = None,
          checkpoint_path=None, problem_info: dict | None = None, progress=None) -> TrainResult:
    """Run ``config.epochs`` Adam steps (counted from the resumed epoch when resuming).

    Lambdas are refreshed from the current batch's losses whenever the epoch
    number is a multiple of the update interval and held constant otherwise.
    """
    if tuple(spec.input_labels) != problem.input_labels():
        raise ContractError(f"network inputs {spec.input_labels} do not match the problem's {problem.input_labels()}")
    loss_def = LossDefinition.from_problem(problem)
    names = loss_def.names
    if resume is None:
        params = init_glorot(spec, config.seed)
        adam = AdamState.zeros(len(params))
        lambdas = {n: 1.0 for n in names}
        history = LossHistory(names)
        start = 0
    else:
        if resume.spec != spec:
            raise ContractError("checkpoint network does not match the requested network")
        if resume.history.names != names:
            raise ContractError("checkpoint loss terms do not match this problem")
        params, adam, lambdas, start = resume.params.copy(), resume.adam, dict(resume.lambdas), resume.epoch
        history = LossHistory.from_array(names, resume.history.as_array())

    def snapshot(epoch_done: int) -> Checkpoint:
        return Checkpoint(spec, params, problem.scaling, history, adam, dict(lambdas), epoch_done, problem_info)

    for epoch in range(start, start + config.epochs):
        batch = sample_batch(config.sampler, problem, epoch)
        if epoch % config.normalization_update_interval == 0:
            current = evaluate_losses(spec, params, batch, loss_def)
            if not np.isfinite(current.composite):
                raise NumericError(f"non-finite loss at epoch {epoch}", losses=current.terms)
            lambdas = update_normalization(current.terms, config.normalization_threshold)
            log.debug("epoch %d lambdas %s", epoch, lambdas)
        try:
            grad, breakdown = loss_gradient(spec, params, batch, loss_def, lambdas)
        except NumericError as exc:
            log.error("training aborted at epoch %d: %s (losses %s)", epoch, exc, exc.losses)
            raise
        history.append(epoch, breakdown.terms, lambdas, breakdown.composite)
        params, adam = adam_step(params, grad, adam, config.learning_rate)
        done = epoch + 1
        if checkpoint_path is not None and done % config.checkpoint_interval == 0:
            save_checkpoint(snapshot(done), checkpoint_path)
        if progress is not None:
            progress(done, breakdown)
    final = snapshot(start + config.epochs)
    if checkpoint_path is not None:
        save_checkpoint(final, checkpoint_path)
    return TrainResult(params, history, final)


# -- checkpoint file ----------------------------------------------------------
# MAGIC, uint64 little-endian header length, UTF-8 JSON header, then the
# float64 little-endian blocks listed in header["blocks"] in order.

MAGIC = b"HEATPINN\x01"
_BLOCKS = ("params", "adam_m", "adam_v", "history")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    hist = ckpt.history.as_array()
    arrays = {
        "params": ckpt.params.values,
        "adam_m": ckpt.adam.first_moment,
        "adam_v": ckpt.adam.second_moment,
        "history": hist.ravel(),
    }
    header = {
        "format": 1,
        "spec": ckpt.spec.to_dict(),
        "layout": [[name, list(shape)] for name, shape in ckpt.params.layout],
        "scaling": {
            "length_ref": ckpt.scaling.length_ref,
            "time_ref": ckpt.scaling.time_ref,
            "temp_ref": ckpt.scaling.temp_ref,
            "h_ref": ckpt.scaling.h_ref,
            "length_ref_y": ckpt.scaling.length_ref_y,
        },
        "adam": {"step_count": ckpt.adam.step_count, "beta1": ckpt.adam.beta1,
                 "beta2": ckpt.adam.beta2, "epsilon": ckpt.adam.epsilon},
        "lambdas": ckpt.lambdas,
        "epoch": ckpt.epoch,
        "loss_terms": ckpt.history.names,
        "history_rows": int(hist.shape[0]),
        "problem": ckpt.problem,
        "blocks": [{"name": n, "count": int(arrays[n].size)} for n in _BLOCKS],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in _BLOCKS)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(MAGIC + struct.pack("<Q", len(head)) + head + body)
    tmp.replace(path)


def _need(header: dict, key: str, kind):
    if key not in header:
        raise FormatError("missing", key)
    value = header[key]
    if not isinstance(value, kind):
        raise FormatError(f"expected {kind}, got {type(value).__name__}", key)
    return value


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`; any defect raises FormatError."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FormatError("not a checkpoint file", "magic")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise FormatError("file truncated before the header length", "header_length")
    (head_len,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if len(raw) < pos + head_len:
        raise FormatError("file truncated inside the header", "header_length")
    try:
        header = json.loads(raw[pos:pos + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt JSON ({exc})", "header") from None
    if not isinstance(header, dict):
        raise FormatError("header is not an object", "header")
    pos += head_len

    try:
        spec = NetworkSpec.from_dict(_need(header, "spec", dict))
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), "spec") from None
    layout = [(n, tuple(s)) for n, s in _need(header, "layout", list)]
    if layout != spec.layout():
        raise FormatError("parameter layout does not match the network description", "layout")
    blocks = _need(header, "blocks", list)
    if [b.get("name") for b in blocks] != list(_BLOCKS):
        raise FormatError(f"expected blocks {list(_BLOCKS)}", "blocks")
    expected = sum(int(b["count"]) for b in blocks) * 8
    if len(raw) - pos != expected:
        raise FormatError(f"payload has {len(raw) - pos} bytes, header declares {expected}", "blocks")
    arrays = {}
    for b in blocks:
        n = int(b["count"])
        arrays[b["name"]] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).astype(np.float64)
        pos += 8 * n

    n_params = spec.parameter_count()
    for name in ("params", "adam_m", "adam_v"):
        if arrays[name].size != n_params:
            raise FormatError(f"{arrays[name].size} values, network needs {n_params}", name)
    names = _need(header, "loss_terms", list)
    rows = _need(header, "history_rows", int)
    history = LossHistory(names)
    if arrays["history"].size != rows * len(history.columns):
        raise FormatError("history size does not match its row count", "history")
    history = LossHistory.from_array(names, arrays["history"])
    try:
        scaling = Scaling(**_need(header, "scaling", dict))
        a = _need(header, "adam", dict)
        adam = AdamState(arrays["adam_m"], arrays["adam_v"], int(a["step_count"]),
                         float(a["beta1"]), float(a["beta2"]), float(a["epsilon"]))
    except (TypeError, KeyError, ValueError) as exc:
        raise FormatError(str(exc), "scaling/adam") from None
    lambdas = {k: float(v) for k, v in _need(header, "lambdas", dict).items()}
    if set(lambdas) != set(names):
        raise FormatError("lambda names differ from the loss terms", "lambdas")
    return Checkpoint(
        spec, ParamStore(layout, arrays["params"]), scaling, history, adam, lambdas,
        _need(header, "epoch", int), header.get("problem"),
    )


def require_dimensionality(ckpt: Checkpoint, dimensionality: int) -> None:
    """Guard used by prediction requests: a 1D model cannot answer 2D queries and vice versa."""
    if ckpt.spec.dimensionality != dimensionality:
        raise ContractError(
            f"checkpoint holds a {ckpt.spec.dimensionality}D network, request is {dimensionality}D"
        )
