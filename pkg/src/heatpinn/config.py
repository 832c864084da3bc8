"""Experiment description loaded from a single JSON document.

Schema (all lengths in m, temperatures in degC, times in min unless noted)::

    {
      "name": "slab_10mm",
      "material": {"k": 0.47, "rho": 1573, "cp": 967},
      "geometry": {"lengths_m": [0.01]},                 # one entry per axis
      "air_profile": {"start_temp": 0,
                      "segments": [{"ramp": {"rate": 5, "target": 50}},
                                   {"hold": {"minutes": 5}}],
                      "total_minutes": 15},              # optional, holds the last value
      "boundary": {"mode": "fixed", "h1": 100, "h2": 50}  # or {"mode": "inputs", "h_range": [20, 200]}
      "edges": [{"face": "x0", "h": "h1"}, ...],         # optional; "h": null = insulated
      "init_temp": 0,                                     # optional, default air at t = 0
      "time_window_min": 15,
      "network": {NetworkSpec fields except input_labels},
      "training": {"epochs", "learning_rate", "normalization_update_interval",
                   "checkpoint_interval", "seed", "sampler": {SamplerConfig fields}},
      "fe_mesh": {"elements_per_direction": 10, "dt_s": 5},
      "output_dir": "runs/slab_10mm"                      # optional
    }
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from heatpinn.errors import ConfigError, ContractError
from heatpinn.fe import MeshConfig
from heatpinn.network import NetworkSpec
from heatpinn.physics import AirProfile, Geometry, Hold, MaterialProps, Ramp
from heatpinn.problem import EdgeBC, HeatProblem
from heatpinn.sampler import SamplerConfig
from heatpinn.trainer import TrainConfig

PRESETS = ("slab_10mm", "slab_20mm_extrapolate", "slab_30mm_h_inputs", "plate_60x20mm")

_NUMBER = (int, float)


def _get(d: dict, key: str, path: str, kind=None, default=...):
    full = f"{path}.{key}" if path else key
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path or "<root>")
    if key not in d:
        if default is ...:
            raise ConfigError("missing required key", full)
        return default
    value = d[key]
    if kind is not None and value is not None:
        ok = isinstance(value, kind) and not (kind is _NUMBER and isinstance(value, bool))
        if not ok:
            raise ConfigError(f"expected {getattr(kind, '__name__', 'number')}, got {type(value).__name__}", full)
    return value


def _reject_unknown(d: dict, allowed, path: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError("unknown key", f"{path}.{key}" if path else key)


def _build(factory, path: str, *args, **kwargs):
    """Call a constructor and re-raise its contract errors at ``path``."""
    try:
        return factory(*args, **kwargs)
    except (ContractError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    material: MaterialProps
    geometry: Geometry
    profile: AirProfile
    time_window_min: float
    h_values: dict[str, float] | None  # None -> coefficients are network inputs
    edges: tuple[EdgeBC, ...] | None
    init_temp: float | None
    network: NetworkSpec
    training: TrainConfig
    mesh: MeshConfig
    output_dir: str | None
    source: dict  # the parsed document, kept for checkpoints and reproducibility

    @property
    def h_range(self) -> tuple[float, float]:
        return self.training.sampler.h_range

    def problem(self) -> HeatProblem:
        return HeatProblem(self.material, self.geometry, self.profile, self.time_window_min,
                           self.h_values, self.init_temp, self.edges)

    def fe_mesh(self, t_end_min: float | None = None) -> MeshConfig:
        t_end = (self.profile.total_duration if t_end_min is None else t_end_min) * 60.0
        return replace(self.mesh, t_end=t_end)

    def with_overrides(self, seed: int | None = None, epochs: int | None = None) -> "ExperimentConfig":
        doc = copy.deepcopy(self.source)
        training = doc.setdefault("training", {})
        if seed is not None:
            training["seed"] = seed
            training.setdefault("sampler", {})["seed"] = seed
        if epochs is not None:
            training["epochs"] = epochs
        return parse_config(doc)


def _parse_profile(d: dict, path: str) -> AirProfile:
    _reject_unknown(d, ("start_temp", "segments", "total_minutes"), path)
    start = _get(d, "start_temp", path, _NUMBER)
    segments = []
    for i, seg in enumerate(_get(d, "segments", path, list, [])):
        p = f"{path}.segments[{i}]"
        if not isinstance(seg, dict) or len(seg) != 1:
            raise ConfigError('each segment is {"ramp": {...}} or {"hold": {...}}', p)
        (kind, body), = seg.items()
        if kind == "ramp":
            _reject_unknown(body, ("rate", "target"), f"{p}.ramp")
            segments.append(_build(Ramp, f"{p}.ramp", _get(body, "rate", f"{p}.ramp", _NUMBER),
                                   _get(body, "target", f"{p}.ramp", _NUMBER)))
        elif kind == "hold":
            _reject_unknown(body, ("minutes",), f"{p}.hold")
            segments.append(_build(Hold, f"{p}.hold", _get(body, "minutes", f"{p}.hold", _NUMBER)))
        else:
            raise ConfigError(f"unknown segment kind {kind!r}", p)
    total = _get(d, "total_minutes", path, _NUMBER, None)
    return _build(AirProfile, path, float(start), tuple(segments), total)


def _parse_edges(items, path: str, dim: int) -> tuple[EdgeBC, ...]:
    edges = []
    for i, e in enumerate(items):
        p = f"{path}[{i}]"
        face = _get(e, "face", p, str)
        if face not in ("x0", "x1", "y0", "y1")[: 2 * dim]:
            raise ConfigError(f"unknown face {face!r} for a {dim}D part", f"{p}.face")
        edges.append(EdgeBC("xy".index(face[0]), int(face[1]), _get(e, "h", p, str, None)))
    return tuple(edges)


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("expected an object", "<root>")
    _reject_unknown(doc, ("name", "material", "geometry", "air_profile", "boundary", "edges", "init_temp",
                          "time_window_min", "network", "training", "fe_mesh", "output_dir"), "")
    name = _get(doc, "name", "", str, "experiment")

    m = _get(doc, "material", "", dict)
    _reject_unknown(m, ("k", "rho", "cp"), "material")
    material = _build(MaterialProps, "material", *(float(_get(m, k, "material", _NUMBER)) for k in ("k", "rho", "cp")))

    g = _get(doc, "geometry", "", dict)
    _reject_unknown(g, ("lengths_m",), "geometry")
    lengths = _get(g, "lengths_m", "geometry", list)
    if not all(isinstance(v, _NUMBER) for v in lengths):
        raise ConfigError("lengths must be numbers", "geometry.lengths_m")
    geometry = _build(Geometry, "geometry.lengths_m", tuple(float(v) for v in lengths))
    dim = geometry.dimensionality

    profile = _parse_profile(_get(doc, "air_profile", "", dict), "air_profile")

    b = _get(doc, "boundary", "", dict)
    mode = _get(b, "mode", "boundary", str)
    sampler_doc = dict(_get(_get(doc, "training", "", dict, {}), "sampler", "training", dict, {}))
    if mode == "fixed":
        _reject_unknown(b, ("mode", "h1", "h2"), "boundary")
        h_values = {k: float(b[k]) for k in ("h1", "h2") if _get(b, k, "boundary", _NUMBER, None) is not None}
    elif mode == "inputs":
        _reject_unknown(b, ("mode", "h_range"), "boundary")
        h_values = None
        rng = _get(b, "h_range", "boundary", list, None)
        if rng is not None:
            if len(rng) != 2 or not all(isinstance(v, _NUMBER) for v in rng):
                raise ConfigError("expected [min, max]", "boundary.h_range")
            sampler_doc["h_range"] = [float(v) for v in rng]
    else:
        raise ConfigError("mode must be 'fixed' or 'inputs'", "boundary.mode")

    edges = None
    if "edges" in doc:
        edges = _parse_edges(_get(doc, "edges", "", list), "edges", dim)
    init_temp = _get(doc, "init_temp", "", _NUMBER, None)
    window = float(_get(doc, "time_window_min", "", _NUMBER))

    n = dict(_get(doc, "network", "", dict, {}))
    _reject_unknown(n, ("architecture", "hidden_layers", "nodes_per_layer", "engineered_feature_count", "activation"),
                    "network")

    t = _get(doc, "training", "", dict, {})
    _reject_unknown(t, ("epochs", "learning_rate", "normalization_update_interval", "checkpoint_interval",
                        "seed", "sampler", "normalization_threshold"), "training")
    _reject_unknown(sampler_doc, ("batch_per_term", "densify_fraction", "kink_window", "h_range", "seed"),
                    "training.sampler")
    if "h_range" in sampler_doc:
        sampler_doc["h_range"] = tuple(sampler_doc["h_range"])
    sampler = _build(SamplerConfig, "training.sampler", **sampler_doc)
    train_kwargs = {k: v for k, v in t.items() if k != "sampler"}
    training = _build(TrainConfig, "training", sampler=sampler, **train_kwargs)

    fm = _get(doc, "fe_mesh", "", dict, {})
    _reject_unknown(fm, ("elements_per_direction", "dt_s"), "fe_mesh")
    mesh = _build(MeshConfig, "fe_mesh", int(_get(fm, "elements_per_direction", "fe_mesh", int, 10)),
                  float(_get(fm, "dt_s", "fe_mesh", _NUMBER, 5.0)), profile.total_duration * 60.0)

    cfg = ExperimentConfig(name, material, geometry, profile, window, h_values, edges,
                           None if init_temp is None else float(init_temp), None, training, mesh,
                           _get(doc, "output_dir", "", str, None), copy.deepcopy(doc))
    try:
        problem = cfg.problem()
    except ContractError as exc:
        raise ConfigError(str(exc), "boundary") from None
    network = _build(NetworkSpec, "network", input_labels=problem.input_labels(), **n)
    return replace(cfg, network=network)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "<document>") from None
    return parse_config(doc)


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset; choose from {', '.join(PRESETS)}", "preset")
    return resources.files("heatpinn.presets").joinpath(f"{name}.json")


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(json.loads(preset_path(name).read_text()))
