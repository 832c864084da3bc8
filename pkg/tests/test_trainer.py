import json
import struct

import numpy as np
import pytest

from heatpinn.errors import ContractError, FormatError, NumericError
from heatpinn.network import NetworkSpec, forward, init_glorot
from heatpinn.physics import COMPOSITE, AirProfile, Geometry, Points
from heatpinn.problem import HeatProblem
from heatpinn.sampler import SamplerConfig
from heatpinn.trainer import (
    MAGIC,
    Checkpoint,
    LossHistory,
    TrainConfig,
    load_checkpoint,
    require_dimensionality,
    save_checkpoint,
    train,
)

PROFILE = AirProfile.ramp_hold(0, 5, 50, 5)
SLAB = HeatProblem(COMPOSITE, Geometry((0.01,)), PROFILE, 15.0, {"h1": 100.0, "h2": 50.0})
SPEC = NetworkSpec("engineered", ("x", "t"), hidden_layers=2, nodes_per_layer=8, engineered_feature_count=6)


def config(epochs, **kw):
    base = dict(epochs=epochs, learning_rate=1e-3, normalization_update_interval=7,
                sampler=SamplerConfig(batch_per_term=16, seed=4), seed=2)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def run30():
    return train(SLAB, SPEC, config(30))


def test_config_validation():
    for bad in (dict(epochs=0), dict(learning_rate=0.0), dict(normalization_update_interval=0),
                dict(checkpoint_interval=0)):
        with pytest.raises(ContractError):
            TrainConfig(**bad)


def test_single_epoch_takes_one_adam_step():
    res = train(SLAB, SPEC, config(1))
    assert len(res.history) == 1 and res.checkpoint.epoch == 1
    assert res.checkpoint.adam.step_count == 1
    assert not np.array_equal(res.params.values, init_glorot(SPEC, 2).values)


def test_training_is_deterministic(run30):
    again = train(SLAB, SPEC, config(30))
    assert np.array_equal(again.history.as_array(), run30.history.as_array())
    assert np.array_equal(again.params.values, run30.params.values)
    other = train(SLAB, SPEC, config(30, sampler=SamplerConfig(batch_per_term=16, seed=5)))
    assert not np.array_equal(other.params.values, run30.params.values)


def test_lambdas_change_only_on_update_epochs(run30):
    lam = run30.history.lambdas()
    epochs = run30.history.epochs
    assert epochs.tolist() == list(range(30))
    for i in range(1, 30):
        if epochs[i] % 7:
            assert np.array_equal(lam[i], lam[i - 1])
    assert np.all((lam > 0) & (lam <= 1)) and np.all(lam.max(axis=1) == 1.0)


def test_history_envelope_and_composite(run30):
    h = run30.history
    env = h.running_minimum()
    assert np.all(np.diff(env) <= 0) and np.all(env <= h.composite)
    k = len(h.names)
    a = h.as_array()
    recomposed = np.sum(a[:, 1:1 + k] * a[:, 1 + k:1 + 2 * k], axis=1)
    assert np.allclose(recomposed, h.composite, rtol=1e-14, atol=0)


def test_history_csv_layout(run30, tmp_path):
    path = tmp_path / "log.csv"
    run30.history.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(["epoch", "loss_pde", "loss_bc0", "loss_bc1", "loss_bc2",
                                 "lambda_pde", "lambda_bc0", "lambda_bc1", "lambda_bc2", "composite"])
    assert len(lines) == 31 and lines[1].startswith("0,")
    row = [float(v) for v in lines[5].split(",")]
    assert row == run30.history.as_array()[4].tolist()


def test_resume_continues_the_same_trajectory(tmp_path):
    straight = train(SLAB, SPEC, config(30))
    path = tmp_path / "ckpt.bin"
    first = train(SLAB, SPEC, config(18), checkpoint_path=path)
    resumed = train(SLAB, SPEC, config(12), resume=load_checkpoint(path))
    assert resumed.checkpoint.epoch == 30
    assert np.array_equal(resumed.params.values, straight.params.values)
    assert np.array_equal(resumed.history.as_array(), straight.history.as_array())
    assert first.checkpoint.epoch == 18


def test_periodic_checkpoints_are_written(tmp_path):
    path = tmp_path / "ckpt.bin"
    seen = []
    train(SLAB, SPEC, config(10, checkpoint_interval=4), checkpoint_path=path,
          progress=lambda e, b: seen.append(load_checkpoint(path).epoch if path.exists() else 0))
    assert seen[3] == 4 and seen[7] == 8 and load_checkpoint(path).epoch == 10


def test_mismatched_inputs_and_resume_are_rejected(run30):
    with pytest.raises(ContractError):
        train(SLAB, NetworkSpec("engineered", ("x", "t", "h1", "h2")), config(1))
    other = NetworkSpec("engineered", ("x", "t"), hidden_layers=1, nodes_per_layer=8, engineered_feature_count=6)
    with pytest.raises(ContractError):
        train(SLAB, other, config(1), resume=run30.checkpoint)


def test_non_finite_loss_aborts_and_keeps_last_checkpoint(run30, tmp_path):
    path = tmp_path / "ckpt.bin"
    save_checkpoint(run30.checkpoint, path)
    before = path.read_bytes()
    broken = run30.params.copy()
    broken["out.b"] = [np.nan]
    ck = run30.checkpoint
    bad = Checkpoint(ck.spec, broken, ck.scaling, ck.history, ck.adam, ck.lambdas, ck.epoch)
    with pytest.raises(NumericError) as err:
        train(SLAB, SPEC, config(5), resume=bad, checkpoint_path=path)
    assert err.value.losses is not None or err.value.slot is not None
    assert path.read_bytes() == before


# -- checkpoint file ----------------------------------------------------------

def test_checkpoint_round_trip_is_bit_exact(run30, tmp_path):
    path = tmp_path / "ckpt.bin"
    ck = run30.checkpoint
    save_checkpoint(ck, path)
    back = load_checkpoint(path)
    assert back.spec == ck.spec and back.epoch == ck.epoch and back.lambdas == ck.lambdas
    assert back.scaling == ck.scaling
    assert np.array_equal(back.params.values, ck.params.values)
    assert np.array_equal(back.adam.first_moment, ck.adam.first_moment)
    assert np.array_equal(back.adam.second_moment, ck.adam.second_moment)
    assert back.adam.step_count == ck.adam.step_count
    assert np.array_equal(back.history.as_array(), ck.history.as_array())
    rng = np.random.default_rng(0)
    pts = Points(rng.random(100), rng.random(100), np.ones(100), np.full(100, 0.5))
    assert np.array_equal(forward(SPEC, back.params, pts), forward(SPEC, ck.params, pts))
    save_checkpoint(back, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def corrupt(path, data: bytes):
    path.write_bytes(data)
    return path


def header_of(raw: bytes) -> tuple[dict, int]:
    n = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])[0]
    start = len(MAGIC) + 8
    return json.loads(raw[start:start + n]), start + n


def rewrite_header(raw: bytes, header: dict) -> bytes:
    _, end = header_of(raw)
    text = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(text)) + text + raw[end:]


@pytest.fixture()
def saved(run30, tmp_path):
    path = tmp_path / "ckpt.bin"
    save_checkpoint(run30.checkpoint, path)
    return path.read_bytes()


@pytest.mark.parametrize("cut", [0, 5, 12, 40, -8, -1])
def test_truncated_checkpoint_raises_format_error(saved, tmp_path, cut):
    with pytest.raises(FormatError):
        load_checkpoint(corrupt(tmp_path / "bad.bin", saved[:cut]))


def test_corrupt_fields_are_named(saved, tmp_path):
    bad = tmp_path / "bad.bin"
    with pytest.raises(FormatError) as err:
        load_checkpoint(corrupt(bad, b"NOTHEATP" + saved[8:]))
    assert err.value.field == "magic"
    with pytest.raises(FormatError) as err:
        load_checkpoint(corrupt(bad, saved + b"\x00" * 8))
    assert err.value.field == "blocks"
    header, _ = header_of(saved)
    header["epoch"] = "thirty"
    with pytest.raises(FormatError) as err:
        load_checkpoint(corrupt(bad, rewrite_header(saved, header)))
    assert err.value.field == "epoch"
    header, _ = header_of(saved)
    header["spec"]["nodes_per_layer"] = 9
    with pytest.raises(FormatError) as err:
        load_checkpoint(corrupt(bad, rewrite_header(saved, header)))
    assert err.value.field in ("layout", "params", "blocks")
    n = struct.unpack("<Q", saved[len(MAGIC):len(MAGIC) + 8])[0]
    garbled = saved[:len(MAGIC) + 8] + b"{" * n + saved[len(MAGIC) + 8 + n:]
    with pytest.raises(FormatError) as err:
        load_checkpoint(corrupt(bad, garbled))
    assert err.value.field == "header"


def test_dimensionality_guard(run30):
    require_dimensionality(run30.checkpoint, 1)
    with pytest.raises(ContractError):
        require_dimensionality(run30.checkpoint, 2)


def test_loss_history_array_round_trip():
    h = LossHistory(["pde", "bc0"])
    h.append(0, {"pde": 1.0, "bc0": 0.5}, {"pde": 1.0, "bc0": 1.0}, 1.5)
    back = LossHistory.from_array(["pde", "bc0"], h.as_array())
    assert back.as_array().tolist() == h.as_array().tolist() and back.epochs.tolist() == [0]
