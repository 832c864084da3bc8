import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatpinn.errors import ContractError, DomainError
from heatpinn.fe import FieldHistory, MeshConfig, probe, read_field_csv, solve_1d, solve_2d, write_field_csv
from heatpinn.physics import COMPOSITE, AirProfile, Hold, Ramp, SeriesSolution, analytic_solution, thermal_diffusivity

RAMP_HOLD = AirProfile.ramp_hold(0, 5, 50, 5)


def test_mesh_validation_and_refinement():
    with pytest.raises(ContractError):
        MeshConfig(elements_per_direction=1)
    with pytest.raises(ContractError):
        MeshConfig(dt=0.0)
    with pytest.raises(ContractError):
        MeshConfig(dt=10.0, t_end=5.0)
    fine = MeshConfig(10, 5.0, 900.0).refined()
    assert (fine.elements_per_direction, fine.dt, fine.t_end) == (20, 2.5, 900.0)


def test_insulated_slab_stays_at_initial_temperature():
    hist = solve_1d(COMPOSITE, 0.01, 0.0, 0.0, RAMP_HOLD, 20.0, MeshConfig(t_end=900.0))
    # the matrix exponential is exact only up to roundoff
    assert np.max(np.abs(hist.temperatures - 20.0)) <= 1e-9
    assert hist.times[0] == 0.0 and hist.times[-1] == 900.0 and len(hist.times) == 181


def test_constant_air_drives_slab_to_steady_state():
    L, h1, h2 = 0.01, 100.0, 50.0
    assert 20000 > 50 * L**2 / thermal_diffusivity(COMPOSITE)
    prof = AirProfile(50.0, (), 20000 / 60)
    hist = solve_1d(COMPOSITE, L, h1, h2, prof, 20.0, MeshConfig(10, 5.0, 20000.0))
    assert np.all(np.diff(hist.temperatures, axis=0) >= -1e-12)
    final = hist.temperatures[-1]
    assert np.all(np.abs(final - 50.0) < 0.5)
    # boundary flux h (T_air - T_surface) vanishes at steady state
    for h, surface in ((h1, final[0]), (h2, final[-1])):
        assert abs(h * (50.0 - surface)) < 1e-3 * h * 50.0


def single_mode_error(mesh: MeshConfig, L=0.01) -> float:
    sol = SeriesSolution(20.0, 30.0, ((1, 1.0),))  # 20 + 10 cos(pi x / L) e^{-...}
    x = np.linspace(0.0, L, mesh.elements_per_direction + 1)
    init = analytic_solution(sol, COMPOSITE, L, x, 0.0)
    hist = solve_1d(COMPOSITE, L, 0.0, 0.0, AirProfile(0.0, (), mesh.t_end / 60), init, mesh)
    exact = analytic_solution(sol, COMPOSITE, L, x[None, :], hist.times[:, None])
    return float(np.max(np.abs(hist.temperatures - exact)) / 10.0)


def test_single_mode_matches_analytic_decay_and_converges():
    coarse = MeshConfig(10, 5.0, 600.0)
    e_coarse = single_mode_error(coarse)
    e_fine = single_mode_error(coarse.refined())
    assert e_coarse < 0.01
    assert e_coarse / e_fine >= 2.0


def test_two_dimensional_insulated_plate_is_constant():
    hist = solve_2d(COMPOSITE, 0.06, 0.02, (None, None, None, None), RAMP_HOLD, 15.0, MeshConfig(t_end=300.0))
    assert hist.dimensionality == 2 and hist.temperatures.shape == (61, 11, 11)
    assert np.max(np.abs(hist.temperatures - 15.0)) <= 1e-9


def test_symmetric_edges_give_symmetric_field():
    hist = solve_2d(COMPOSITE, 0.06, 0.02, (80.0, 80.0, None, None), RAMP_HOLD, 0.0, MeshConfig(t_end=900.0))
    T = hist.temperatures
    assert np.max(np.abs(T - T[:, ::-1, :])) <= 1e-9


def test_convective_x_edges_reduce_to_the_slab_solution():
    mesh = MeshConfig(t_end=900.0)
    plate = solve_2d(COMPOSITE, 0.06, 0.02, (100.0, 40.0, None, None), RAMP_HOLD, 5.0, mesh)
    slab = solve_1d(COMPOSITE, 0.06, 100.0, 40.0, RAMP_HOLD, 5.0, mesh)
    for j in range(plate.temperatures.shape[2]):
        assert np.max(np.abs(plate.temperatures[:, :, j] - slab.temperatures)) <= 1e-9


def test_negative_h_is_rejected():
    with pytest.raises(ContractError):
        solve_1d(COMPOSITE, 0.01, -1.0, 10.0, RAMP_HOLD, 0.0, MeshConfig(t_end=60.0))
    with pytest.raises(ContractError):
        solve_2d(COMPOSITE, 0.01, 0.01, (1.0, 1.0, 1.0), RAMP_HOLD, 0.0, MeshConfig(t_end=60.0))


def tiny_history():
    temps = np.array([[10.0, 20.0, 30.0], [30.0, 34.0, 38.0]])
    return FieldHistory((np.array([0.0, 1.0, 2.0]),), np.array([0.0, 10.0]), temps)


def test_probe_examples():
    hist = tiny_history()
    assert probe(hist, 1.0, 10.0) == 34.0
    assert probe(hist, 0.5, 0.0) == pytest.approx(15.0)
    assert probe(hist, 1.0, 5.0) == pytest.approx(27.0)
    assert probe(hist, 0.0, 5.0) == pytest.approx(20.0)
    with pytest.raises(DomainError):
        probe(hist, 2.5, 0.0)
    with pytest.raises(DomainError):
        probe(hist, 1.0, 11.0)
    with pytest.raises(ContractError):
        probe(hist, (1.0, 1.0), 0.0)


def test_probe_in_two_dimensions_is_bilinear():
    grid = (np.array([0.0, 1.0]), np.array([0.0, 2.0]))
    temps = np.array([[[0.0, 4.0], [2.0, 6.0]]] * 2)
    hist = FieldHistory(grid, np.array([0.0, 1.0]), temps)
    assert probe(hist, (0.5, 1.0), 0.5) == pytest.approx(3.0)


def test_field_history_validates_shape_and_slices():
    hist = tiny_history()
    assert hist.slice_at(10.0).tolist() == [30.0, 34.0, 38.0]
    with pytest.raises(DomainError):
        hist.slice_at(5.0)
    with pytest.raises(ContractError):
        FieldHistory((np.arange(4.0),), np.array([0.0, 1.0]), np.zeros((2, 3)))


@pytest.mark.parametrize("two_d", [False, True])
def test_field_csv_round_trip(tmp_path, two_d):
    mesh = MeshConfig(4, 30.0, 300.0)
    if two_d:
        hist = solve_2d(COMPOSITE, 0.06, 0.02, (100.0, None, 100.0, None), RAMP_HOLD, 0.0, mesh)
    else:
        hist = solve_1d(COMPOSITE, 0.01, 100.0, 50.0, RAMP_HOLD, 0.0, mesh)
    path = tmp_path / "field.csv"
    write_field_csv(hist, path)
    back = read_field_csv(path)
    assert back.temperatures.shape == hist.temperatures.shape
    assert np.max(np.abs(back.temperatures - hist.temperatures)) <= 5e-10
    assert np.array_equal(back.times, hist.times)
    for a, b in zip(back.node_positions, hist.node_positions):
        assert np.allclose(a, b, rtol=1e-9, atol=0)
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "time_s" and header[1] == ("x=0;y=0" if two_d else "x=0")


def test_read_rejects_foreign_csv(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ContractError):
        read_field_csv(path)


@st.composite
def air_profiles(draw):
    temp = draw(st.floats(-40.0, 120.0))
    start, segs = temp, []
    for _ in range(draw(st.integers(0, 3))):
        if draw(st.booleans()):
            step = draw(st.floats(1.0, 80.0)) * draw(st.sampled_from([-1.0, 1.0]))
            temp += step
            segs.append(Ramp(draw(st.floats(0.5, 20.0)), temp))
        else:
            segs.append(Hold(draw(st.floats(0.5, 10.0))))
    end = AirProfile(start, tuple(segs), None if segs else 1.0).times[-1]
    return AirProfile(start, tuple(segs), max(end, 1.0))


@settings(max_examples=1000, deadline=None)
@given(
    two_d=st.booleans(),
    n_el=st.integers(2, 8),
    dt=st.floats(1.0, 30.0),
    h=st.lists(st.one_of(st.just(0.0), st.floats(1.0, 500.0)), min_size=4, max_size=4),
    prof=air_profiles(),
    init=st.floats(-40.0, 120.0),
    length=st.floats(0.002, 0.08),
)
def test_discrete_maximum_principle(two_d, n_el, dt, h, prof, init, length):
    t_end = max(dt, min(prof.times[-1] * 60.0, 20 * dt))
    mesh = MeshConfig(n_el, dt, t_end)
    if two_d:
        hist = solve_2d(COMPOSITE, length, length / 2, h, prof, init, mesh)
    else:
        hist = solve_1d(COMPOSITE, length, h[0], h[1], prof, init, mesh)
    lo, hi = min(init, prof.temps.min()), max(init, prof.temps.max())
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    assert np.all(np.isfinite(hist.temperatures))
    assert hist.temperatures.min() >= lo - slack and hist.temperatures.max() <= hi + slack
    assert np.all(hist.temperatures[0] == init)
