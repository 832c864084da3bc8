import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest

from heatpinn import cli
from heatpinn.analysis import Deviation
from heatpinn.autodiff import AdamState
from heatpinn.config import load_preset, preset_path
from heatpinn.errors import NumericError
from heatpinn.fe import probe, read_field_csv
from heatpinn.loss import LossDefinition
from heatpinn.network import NetworkSpec, init_glorot
from heatpinn.trainer import Checkpoint, LossHistory, save_checkpoint

GOLDEN = Path(__file__).parent / "golden" / "slab_10mm_fe_midpoint.csv"


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc))
    return path


def preset_doc(name: str) -> dict:
    return json.loads(preset_path(name).read_text())


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Short runs of each preset, keyed by preset name -> output directory."""
    root = tmp_path_factory.mktemp("trained")
    dirs = {}
    for name, epochs in (("slab_10mm", 200), ("slab_20mm_extrapolate", 3), ("slab_30mm_h_inputs", 3),
                         ("plate_60x20mm", 3)):
        out = root / name
        assert run("train", "--preset", name, "--epochs", epochs, "--output-dir", out) == cli.EXIT_OK
        dirs[name] = out
    return dirs


# -- fe-run -------------------------------------------------------------------

def test_fe_run_midpoint_trace_matches_golden_file(tmp_path):
    assert run("fe-run", "--preset", "slab_10mm", "--output-dir", tmp_path) == cli.EXIT_OK
    hist = read_field_csv(tmp_path / "fe_field.csv")
    golden = np.loadtxt(GOLDEN, delimiter=",", skiprows=1)
    assert np.array_equal(hist.times, golden[:, 0])
    mid = [probe(hist, 0.005, t) for t in hist.times]
    assert np.max(np.abs(np.array(mid) - golden[:, 1])) <= 1e-9
    assert probe(hist, 0.005, 600.0) == pytest.approx(37.886311699, abs=1e-9)


def test_fe_run_is_byte_identical_across_invocations(tmp_path):
    run("fe-run", "--preset", "plate_60x20mm", "--output-dir", tmp_path / "a")
    run("fe-run", "--preset", "plate_60x20mm", "--output-dir", tmp_path / "b")
    assert (tmp_path / "a" / "fe_field.csv").read_bytes() == (tmp_path / "b" / "fe_field.csv").read_bytes()


def test_fe_run_of_insulated_part_is_constant(tmp_path):
    doc = preset_doc("slab_10mm")
    doc["edges"] = [{"face": "x0", "h": None}, {"face": "x1", "h": None}]
    doc["init_temp"] = 20
    assert run("fe-run", "--config", write_json(tmp_path / "c.json", doc), "--output-dir", tmp_path) == 0
    rows = list(csv.reader(open(tmp_path / "fe_field.csv")))
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert np.all(np.abs(values - 20.0) <= 5e-9)


def test_malformed_json_exits_with_config_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert run("fe-run", "--config", bad, "--output-dir", tmp_path) == cli.EXIT_CONFIG
    assert "<document>" in capsys.readouterr().err
    doc = preset_doc("slab_10mm")
    del doc["material"]["rho"]
    assert run("fe-run", "--config", write_json(tmp_path / "c.json", doc), "--output-dir", tmp_path) == 2
    assert "material.rho" in capsys.readouterr().err


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert run("fe-run", "--preset", "slab_10mm") == 0
    assert (tmp_path / "root" / "slab_10mm" / "fe_field.csv").exists()


def test_needs_exactly_one_config_source(tmp_path):
    assert run("fe-run", "--output-dir", tmp_path) == cli.EXIT_CONFIG


# -- train --------------------------------------------------------------------

def test_training_log_is_byte_identical(trained, tmp_path):
    assert run("train", "--preset", "slab_10mm", "--epochs", 200, "--output-dir", tmp_path) == 0
    log = (tmp_path / cli.TRAINING_LOG_NAME).read_bytes()
    assert log == (trained["slab_10mm"] / cli.TRAINING_LOG_NAME).read_bytes()
    assert log.count(b"\n") == 201


def test_resume_continues_epoch_numbering(trained, tmp_path):
    assert run("train", "--preset", "slab_10mm", "--epochs", 120, "--output-dir", tmp_path) == 0
    assert run("train", "--preset", "slab_10mm", "--epochs", 80, "--resume", "--output-dir", tmp_path) == 0
    resumed = (tmp_path / cli.TRAINING_LOG_NAME).read_bytes()
    assert resumed == (trained["slab_10mm"] / cli.TRAINING_LOG_NAME).read_bytes()


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def explode(*a, **k):
        raise NumericError("non-finite loss", losses={"pde": float("nan")})

    monkeypatch.setattr(cli, "train", explode)
    assert run("train", "--preset", "slab_10mm", "--output-dir", tmp_path) == cli.EXIT_NUMERIC


def test_missing_or_corrupt_checkpoint_is_an_io_failure(tmp_path):
    assert run("compare", "--preset", "slab_10mm", "--output-dir", tmp_path) == cli.EXIT_IO
    (tmp_path / cli.CHECKPOINT_NAME).write_bytes(b"HEATPINN\x01garbage")
    assert run("compare", "--preset", "slab_10mm", "--output-dir", tmp_path) == cli.EXIT_IO


# -- compare ------------------------------------------------------------------

class GridModel:
    """Stands in for a network by reading the grid solution itself."""

    def __init__(self, history):
        self.history = history

    def predict(self, x, t, h1=None, h2=None, extrapolate=False):
        return np.array([probe(self.history, xi, ti) for xi, ti in np.broadcast(x, t)])


def test_grid_solution_compared_with_itself_deviates_by_zero():
    cfg = load_preset("slab_10mm")
    fe = cli.run_fe(cfg)
    rows, summary = cli.compare_1d(GridModel(fe), fe, 0.01, 900.0, 600.0, False)
    assert set(summary) == {"midpoint", "top", "profile"}
    assert all(d.max_abs == 0.0 and d.mean_abs == 0.0 for d in summary.values())
    assert Deviation.between(fe.temperatures, fe.temperatures).max_abs == 0.0


def test_compare_writes_csv_and_summary(trained):
    out = trained["slab_10mm"]
    assert run("compare", "--preset", "slab_10mm", "--output-dir", out) == 0
    summary = json.loads((out / "comparison_summary.json").read_text())
    assert set(summary) == {"midpoint", "top", "profile"}
    with open(out / "comparison.csv") as f:
        rows = list(csv.DictReader(f))
    mid = [r for r in rows if r["probe"] == "midpoint"]
    assert len(mid) == 181
    dev = max(float(r["abs_dev_degC"]) for r in mid)
    assert dev == pytest.approx(summary["midpoint"]["max_abs_dev_degC"], abs=1e-6)


def test_compare_guards_extrapolation(trained):
    out = trained["slab_20mm_extrapolate"]
    assert run("compare", "--preset", "slab_20mm_extrapolate", "--output-dir", out, "--until-min", 30) == 2
    assert run("compare", "--preset", "slab_20mm_extrapolate", "--output-dir", out, "--until-min", 30,
               "--extrapolate") == 0
    with open(out / "comparison.csv") as f:
        times = {float(r["time_s"]) for r in csv.DictReader(f) if r["probe"] == "top"}
    assert max(times) == 1800.0


def test_compare_rejects_checkpoint_of_other_dimensionality(trained):
    ckpt = trained["plate_60x20mm"] / cli.CHECKPOINT_NAME
    assert run("compare", "--preset", "slab_10mm", "--checkpoint", ckpt,
               "--output-dir", trained["slab_10mm"]) == cli.EXIT_CONFIG


# -- sweep --------------------------------------------------------------------

def test_sweep_writes_cells_summary_and_svg(trained):
    out = trained["slab_30mm_h_inputs"]
    assert run("sweep", "--preset", "slab_30mm_h_inputs", "--output-dir", out,
               "--h1-values", 50, 150, "--h2-values", 100, "--jobs", 2) == 0
    sweep = out / "sweep"
    assert sorted(p.name for p in sweep.glob("cell_*.csv")) == ["cell_h1_150_h2_100.csv", "cell_h1_50_h2_100.csv"]
    with open(sweep / "summary.csv") as f:
        rows = list(csv.DictReader(f))
    assert [(r["h1"], r["h2"]) for r in rows] == [("50", "100"), ("150", "100")]
    assert all(float(r["fe_seconds"]) > 0 and float(r["pinn_seconds"]) > 0 for r in rows)
    text = (sweep / "sweep.svg").read_text()
    assert text.startswith("<svg") and text.count("<polyline") == 4


def test_sweep_needs_coefficient_inputs(trained):
    assert run("sweep", "--preset", "slab_10mm", "--output-dir", trained["slab_10mm"]) == cli.EXIT_CONFIG


# -- heatmap ------------------------------------------------------------------

def test_heatmap_writes_three_maps_in_the_grid_schema(trained, tmp_path):
    out = trained["plate_60x20mm"]
    assert run("heatmap", "--preset", "plate_60x20mm", "--output-dir", out, "--jobs", 3) == 0
    for tm in (5, 10, 15):
        assert (out / f"heatmap_t{tm}min.svg").read_text().startswith("<svg")
    csvs = sorted(out.glob("heatmap_t*min.csv"))
    assert len(csvs) == 3
    run("fe-run", "--preset", "plate_60x20mm", "--output-dir", tmp_path)
    fe_header = (tmp_path / "fe_field.csv").read_text().splitlines()[0]
    for path in csvs:
        lines = path.read_text().splitlines()
        assert lines[0] == fe_header and len(lines) == 2


def test_heatmap_is_byte_identical_and_guards_window(trained, tmp_path):
    out = trained["plate_60x20mm"]
    run("heatmap", "--preset", "plate_60x20mm", "--output-dir", out, "--times", 7)
    first = (out / "heatmap_t7min.svg").read_bytes()
    run("heatmap", "--preset", "plate_60x20mm", "--output-dir", out, "--times", 7)
    assert (out / "heatmap_t7min.svg").read_bytes() == first
    assert run("heatmap", "--preset", "plate_60x20mm", "--output-dir", out, "--times", 16) == cli.EXIT_CONFIG
    assert run("heatmap", "--preset", "slab_10mm", "--output-dir", tmp_path,
               "--checkpoint", trained["slab_10mm"] / cli.CHECKPOINT_NAME) == cli.EXIT_CONFIG


def test_constant_network_on_insulated_plate_gives_uniform_map(tmp_path):
    doc = preset_doc("plate_60x20mm")
    doc["edges"] = [{"face": f, "h": None} for f in ("x0", "x1", "y0", "y1")]
    cfg_path = write_json(tmp_path / "insulated.json", doc)
    cfg = cli.load_config(cfg_path)
    spec: NetworkSpec = cfg.network
    params = init_glorot(spec, 0)
    params["out.w"] = 0.0
    names = LossDefinition.from_problem(cfg.problem()).names
    ckpt = Checkpoint(spec, params, cfg.problem().scaling, LossHistory(names), AdamState.zeros(len(params)),
                      {n: 1.0 for n in names}, 0)
    save_checkpoint(ckpt, tmp_path / cli.CHECKPOINT_NAME)
    assert run("heatmap", "--config", cfg_path, "--output-dir", tmp_path, "--times", 5) == 0
    fills = set(re.findall(r'<rect[^>]*class="cell"[^>]*fill="(#[0-9a-f]{6})"', (tmp_path / "heatmap_t5min.svg").read_text()))
    assert len(fills) == 1
