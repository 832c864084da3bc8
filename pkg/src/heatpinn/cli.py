"""Command-line driver: grid-solver runs, training, comparisons, h sweeps and heat maps.

Exit codes: 0 success, 2 configuration or request error, 3 numeric failure,
4 file or checkpoint I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from heatpinn import svg
from heatpinn.analysis import Deviation, Model, min_time, probe_positions
from heatpinn.config import PRESETS, ExperimentConfig, load_config, load_preset
from heatpinn.errors import ConfigError, ContractError, DomainError, FormatError, NumericError
from heatpinn.fe import FieldHistory, field_csv_text, probe, solve_1d, solve_2d
from heatpinn.trainer import load_checkpoint, require_dimensionality, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "HEATPINN_OUTPUT_ROOT"
CHECKPOINT_NAME = "checkpoint.bin"
TRAINING_LOG_NAME = "training_log.csv"

log = logging.getLogger("heatpinn")


def _load(args) -> ExperimentConfig:
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of --config or --preset", "arguments")
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    return cfg.with_overrides(seed=getattr(args, "seed", None), epochs=getattr(args, "epochs", None))


def output_dir(args, cfg: ExperimentConfig) -> Path:
    """--output-dir, else the config's output_dir, else $HEATPINN_OUTPUT_ROOT/<name> (default ./runs/<name>)."""
    if args.output_dir:
        out = Path(args.output_dir)
    elif cfg.output_dir:
        out = Path(cfg.output_dir)
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _edge_h(cfg: ExperimentConfig, h1, h2) -> list[float]:
    problem = cfg.problem()
    return [problem.edge_h_physical(e, h1, h2) for e in problem.edges]


def run_fe(cfg: ExperimentConfig, h1=None, h2=None, t_end_min=None) -> FieldHistory:
    problem = cfg.problem()
    hs = _edge_h(cfg, h1, h2)
    mesh = cfg.fe_mesh(t_end_min)
    if problem.dimensionality == 1:
        return solve_1d(cfg.material, cfg.geometry.lengths[0], hs[0], hs[1], cfg.profile, problem.init_temp, mesh)
    by_face = {(e.axis, e.side): h for e, h in zip(problem.edges, hs)}
    order = [by_face[(0, 0)], by_face[(0, 1)], by_face[(1, 0)], by_face[(1, 1)]]
    return solve_2d(cfg.material, *cfg.geometry.lengths, order, cfg.profile, problem.init_temp, mesh)


def _model(args, cfg: ExperimentConfig, out: Path) -> Model:
    path = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_NAME
    ckpt = load_checkpoint(path)
    require_dimensionality(ckpt, cfg.geometry.dimensionality)
    if tuple(ckpt.spec.input_labels) != cfg.problem().input_labels():
        raise ContractError("checkpoint inputs do not match the configured problem")
    return Model.from_checkpoint(ckpt, cfg.h_values)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- commands -----------------------------------------------------------------

def cmd_fe_run(args) -> int:
    cfg = _load(args)
    out = output_dir(args, cfg)
    history = run_fe(cfg, args.h1, args.h2)
    path = out / "fe_field.csv"
    path.write_text(field_csv_text(history))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    out = output_dir(args, cfg)
    ckpt_path = out / CHECKPOINT_NAME
    resume = load_checkpoint(ckpt_path) if args.resume else None
    every = max(1, cfg.training.epochs // 20)

    def progress(epoch, breakdown):
        if epoch % every == 0:
            log.info("epoch %d composite %.3e", epoch, breakdown.composite)

    result = train(cfg.problem(), cfg.network, cfg.training, resume=resume, checkpoint_path=ckpt_path,
                   problem_info=cfg.source, progress=progress)
    result.history.write_csv(out / TRAINING_LOG_NAME)
    last = result.history.as_array()[-1]
    print(f"trained to epoch {result.checkpoint.epoch}; final composite {last[-1]:.6e}")
    print(f"wrote {ckpt_path} and {out / TRAINING_LOG_NAME}")
    return EXIT_OK


def compare_1d(model: Model, fe: FieldHistory, length: float, until_s: float, profile_time_s: float,
               extrapolate: bool, h1=None, h2=None):
    """Rows (probe, time_s, position_m, fe, pinn, |dev|) and per-probe deviations."""
    times = fe.times[fe.times <= until_s + 1e-9]
    rows, summary = [], {}
    for name, x in probe_positions(length).items():
        fe_vals = np.array([probe(fe, x, t) for t in times])
        pinn = model.predict(np.full(times.size, x), times, h1, h2, extrapolate)
        summary[name] = Deviation.between(pinn, fe_vals)
        rows += [(name, t, x, a, b) for t, a, b in zip(times, fe_vals, pinn)]
    xs = fe.node_positions[0]
    fe_vals = np.array([probe(fe, x, profile_time_s) for x in xs])
    pinn = model.predict(xs, np.full(xs.size, profile_time_s), h1, h2, extrapolate)
    summary["profile"] = Deviation.between(pinn, fe_vals)
    rows += [("profile", profile_time_s, x, a, b) for x, a, b in zip(xs, fe_vals, pinn)]
    return rows, summary


def compare_2d(model: Model, fe: FieldHistory, until_s: float, extrapolate: bool):
    times = fe.times[fe.times <= until_s + 1e-9]
    field = model.field(fe.node_positions, times, extrapolate=extrapolate)
    ref = fe.temperatures[: times.size]
    rows = []
    X, Y = np.meshgrid(*fe.node_positions, indexing="ij")
    for k, t in enumerate(times):
        for x, y, a, b in zip(X.ravel(), Y.ravel(), ref[k].ravel(), field.temperatures[k].ravel()):
            rows.append(("field", t, f"{x:.9g};{y:.9g}", a, b))
    return rows, {"field": Deviation.between(field.temperatures, ref)}


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = output_dir(args, cfg)
    model = _model(args, cfg, out)
    until_min = cfg.time_window_min if args.until_min is None else args.until_min
    if until_min > cfg.time_window_min + 1e-12 and not args.extrapolate:
        raise DomainError(f"--until-min {until_min} exceeds the trained window of {cfg.time_window_min} min; "
                          "pass --extrapolate to allow it")
    if until_min > cfg.profile.total_duration + 1e-12:
        raise DomainError(f"--until-min {until_min} exceeds the air profile ({cfg.profile.total_duration} min)")
    fe = run_fe(cfg, args.h1, args.h2)
    if cfg.geometry.dimensionality == 1:
        h = (args.h1, args.h2) if cfg.h_values is None else (None, None)
        rows, summary = compare_1d(model, fe, cfg.geometry.lengths[0], until_min * 60, args.profile_time_min * 60,
                                   args.extrapolate, *h)
    else:
        rows, summary = compare_2d(model, fe, until_min * 60, args.extrapolate)
    _write_rows(out / "comparison.csv", ["probe", "time_s", "position_m", "fe_degC", "pinn_degC", "abs_dev_degC"],
                [(p, f"{t:.9g}", pos if isinstance(pos, str) else f"{pos:.9g}", f"{a:.6f}", f"{b:.6f}",
                  f"{abs(a - b):.6f}") for p, t, pos, a, b in rows])
    doc = {name: {"max_abs_dev_degC": d.max_abs, "mean_abs_dev_degC": d.mean_abs} for name, d in summary.items()}
    (out / "comparison_summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for name, d in summary.items():
        print(f"{name}: max |PINN - FE| = {d.max_abs:.3f} degC, mean = {d.mean_abs:.3f} degC")
    return EXIT_OK


def sweep_cell(cfg: ExperimentConfig, model: Model, h1: float, h2: float, time_s: float, repeats: int = 3):
    history = run_fe(cfg, h1, h2, t_end_min=time_s / 60)
    fe_seconds = min_time(lambda: run_fe(cfg, h1, h2, t_end_min=time_s / 60), repeats)
    xs = history.node_positions[0]
    fe_vals = history.temperatures[-1]
    times = np.full(xs.size, time_s)
    pinn = model.predict(xs, times, h1, h2)
    pinn_seconds = min_time(lambda: model.predict(xs, times, h1, h2), repeats * 10)
    return {"h1": h1, "h2": h2, "x": xs, "fe": fe_vals, "pinn": pinn,
            "max_abs_dev": float(np.abs(pinn - fe_vals).max()), "fe_seconds": fe_seconds,
            "pinn_seconds": pinn_seconds}


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.h_values is not None or cfg.geometry.dimensionality != 1:
        raise ConfigError("sweep needs a 1D experiment with coefficients as network inputs", "boundary.mode")
    out = output_dir(args, cfg)
    model = _model(args, cfg, out)
    time_s = (cfg.time_window_min if args.time_min is None else args.time_min) * 60
    cells = [(a, b) for a in args.h1_values for b in args.h2_values]
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(lambda hb: sweep_cell(cfg, model, hb[0], hb[1], time_s), cells))
    sweep_dir = out / "sweep"
    sweep_dir.mkdir(exist_ok=True)
    for r in results:
        _write_rows(sweep_dir / f"cell_h1_{r['h1']:g}_h2_{r['h2']:g}.csv", ["position_m", "fe_degC", "pinn_degC"],
                    [(f"{x:.9g}", f"{a:.6f}", f"{b:.6f}") for x, a, b in zip(r["x"], r["fe"], r["pinn"])])
    _write_rows(sweep_dir / "summary.csv",
                ["h1", "h2", "max_abs_dev_degC", "fe_seconds", "pinn_seconds", "speedup"],
                [(f"{r['h1']:g}", f"{r['h2']:g}", f"{r['max_abs_dev']:.6f}", f"{r['fe_seconds']:.6g}",
                  f"{r['pinn_seconds']:.6g}", f"{r['fe_seconds'] / r['pinn_seconds']:.1f}") for r in results])
    lo = min(min(r["fe"].min(), r["pinn"].min()) for r in results)
    hi = max(max(r["fe"].max(), r["pinn"].max()) for r in results)
    panels = [{"title": f"h1={r['h1']:g} h2={r['h2']:g} max dev {r['max_abs_dev']:.2f} degC",
               "series": [{"x": r["x"], "y": r["fe"], "color": "#d62728", "dash": True},
                          {"x": r["x"], "y": r["pinn"], "color": "#1f77b4"}]} for r in results]
    svg.write(sweep_dir / "sweep.svg", svg.line_grid_svg(
        panels, len(args.h2_values), (np.floor(lo), np.ceil(hi)),
        f"position 0 to {cfg.geometry.lengths[0] * 1000:g} mm at t = {time_s / 60:g} min (blue PINN, dashed red FE)",
        "temperature degC"))
    for r in results:
        print(f"h1={r['h1']:g} h2={r['h2']:g}: max dev {r['max_abs_dev']:.3f} degC, "
              f"FE {r['fe_seconds'] * 1e3:.3f} ms, PINN {r['pinn_seconds'] * 1e3:.4f} ms")
    print(f"wrote {sweep_dir}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cfg = _load(args)
    out = output_dir(args, cfg)
    model = _model(args, cfg, out)
    problem = cfg.problem()
    lengths = cfg.geometry.lengths
    if len(lengths) != 2:
        raise ConfigError("heat maps need a 2D experiment", "geometry.lengths_m")
    nodes = tuple(np.linspace(0.0, L, cfg.mesh.elements_per_direction + 1) for L in lengths)
    # render on cell centres at 1 mm resolution (at least 20 cells per side)
    render = tuple((np.arange(n) + 0.5) * L / n for L, n in ((L, max(20, round(L * 1000))) for L in lengths))
    temps = np.concatenate(([problem.init_temp], cfg.profile.temps))
    vmin, vmax = float(temps.min()), float(temps.max())
    for tm in args.times:
        if tm * 60 > model.window_s + 1e-9 and not args.extrapolate:
            raise DomainError(f"time {tm} min lies beyond the trained window; pass --extrapolate")

    def render_at(tm):
        field = model.field(nodes, [tm * 60], extrapolate=args.extrapolate)
        dense = model.field(render, [tm * 60], extrapolate=args.extrapolate).temperatures[0]
        return field, dense

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        maps = list(pool.map(render_at, args.times))
    for tm, (field, dense) in zip(args.times, maps):
        (out / f"heatmap_t{tm:g}min.csv").write_text(field_csv_text(field))
        svg.write(out / f"heatmap_t{tm:g}min.svg",
                  svg.heatmap_svg(dense, lengths, vmin, vmax, f"{cfg.name}: t = {tm:g} min"))
        print(f"wrote {out / f'heatmap_t{tm:g}min.svg'}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatpinn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint: bool = False):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="experiment JSON file")
        src.add_argument("--preset", choices=PRESETS, help="shipped experiment")
        p.add_argument("--output-dir", help=f"defaults to the config's output_dir or ${OUTPUT_ROOT_ENV}/<name>")
        p.add_argument("--seed", type=int, help="override parameter and sampling seeds")
        p.add_argument("--epochs", type=int, help="override the number of epochs")
        if checkpoint:
            p.add_argument("--checkpoint", help=f"defaults to <output dir>/{CHECKPOINT_NAME}")

    p = sub.add_parser("fe-run", help="solve the configured problem with the grid solver")
    common(p)
    p.add_argument("--h1", type=float)
    p.add_argument("--h2", type=float)
    p.set_defaults(fn=cmd_fe_run)

    p = sub.add_parser("train", help="train the configured network")
    common(p)
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output dir")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("compare", help="probe network and grid solver on shared points")
    common(p, checkpoint=True)
    p.add_argument("--until-min", type=float, help="end of the compared interval (default: trained window)")
    p.add_argument("--profile-time-min", type=float, default=10.0, help="time of the through-thickness profile")
    p.add_argument("--extrapolate", action="store_true", help="allow times beyond the trained window")
    p.add_argument("--h1", type=float)
    p.add_argument("--h2", type=float)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("sweep", help="evaluate a grid of h combinations against per-cell grid solves")
    common(p, checkpoint=True)
    p.add_argument("--h1-values", type=float, nargs="+", default=[50.0, 100.0, 150.0])
    p.add_argument("--h2-values", type=float, nargs="+", default=[50.0, 100.0, 150.0])
    p.add_argument("--time-min", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("heatmap", help="2D temperature maps at given times")
    common(p, checkpoint=True)
    p.add_argument("--times", type=float, nargs="+", default=[5.0, 10.0, 15.0], help="minutes")
    p.add_argument("--extrapolate", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, DomainError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        detail = f" (slot {exc.slot})" if exc.slot else ""
        print(f"numeric failure: {exc}{detail}; losses {exc.losses}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
