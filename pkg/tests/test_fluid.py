import math

import numpy as np
import pytest

from core.fluid import auto_dimension, control_on_mesh, cost, integrate, shortest_level
from core.ratefn import decay_rate, optimal_path
from core.skorokhod import solve_sp
from utils.errors import ControlLookupError, MeshMismatchError, TruncationError
from utils.schemas import ControlPolicy, InitialOccupancy


def _ramp(T=2.0):
    return ControlPolicy(mesh=[0.0, 1.0, T], phi0=[1.0, 1.5], rho=[[1.0], [1.0]])


def test_shortest_level_examples():
    assert shortest_level([1.0, 0.5, 0.0]) == 1
    assert shortest_level([0.3, 0.1]) == 0
    assert shortest_level([1.0, 1.0, 1.0, 0.2]) == 3
    assert shortest_level([1.0 - 1e-10, 0.0]) == 1


def test_stationary_profile_is_fixed():
    path = integrate(ControlPolicy.null(3.0), InitialOccupancy.ones(), 3.0, dt=1e-2, lam=1.0)
    expected = InitialOccupancy.ones().as_array(path.M)
    assert np.all(path.zeta.values == expected[:, None])
    assert cost(ControlPolicy.null(3.0), path) == 0.0


def test_relaxation_from_empty():
    dt = 1e-3
    path = integrate(ControlPolicy.null(5.0), InitialOccupancy.empty(), 5.0, dt=dt, lam=0.5)
    exact = 0.5 * (1.0 - np.exp(-path.mesh))
    assert np.max(np.abs(path.zeta.coordinate(1) - exact)) <= 5 * dt
    assert np.all(path.zeta.coordinate(2) == 0.0)


def test_optimal_first_level_path_and_cost():
    control, _ = optimal_path(3, 1.0)
    path = integrate(control, InitialOccupancy.ones(), 1.0, dt=1e-4)
    assert np.max(np.abs(path.zeta.coordinate(1) - 1.0)) <= 1e-3
    assert np.max(np.abs(path.zeta.coordinate(2) - path.mesh)) <= 1e-3
    assert abs(path.zeta.coordinate(3)[-1]) <= 1e-3
    assert cost(control, path) == pytest.approx(decay_rate(3, 1.0), abs=1e-3)


@pytest.mark.parametrize("j,T", [(4, 2.0), (5, 3.0)])
def test_optimal_paths_end_to_end(j, T):
    dt = 1e-3
    control, zeta = optimal_path(j, T)
    path = integrate(control, InitialOccupancy.ones(), T, dt=dt)
    for k in range(1, j + 1):
        assert np.max(np.abs(path.zeta.coordinate(k) - zeta(k, path.mesh))) <= 5 * dt
    assert cost(control, path) == pytest.approx(decay_rate(j, T), abs=10 * dt)
    assert shortest_level(path.zeta.values[:, -1], tol=1e-6) == j - 1


def test_reflection_matches_skorokhod_map():
    control, _ = optimal_path(5, 3.0)
    path = integrate(control, InitialOccupancy.ones(), 3.0, dt=1e-3)
    sol = solve_sp(path.psi)
    assert np.max(np.abs(sol.phi.values - path.zeta.values)) <= 1e-12
    assert np.max(np.abs(sol.eta.values - path.eta.values)) <= 1e-12


def test_ordering_and_bounds_preserved():
    dt = 1e-3
    path = integrate(_ramp(), InitialOccupancy.parse("0.8,0.3,0.1"), 2.0, dt=dt, lam=0.9)
    z = path.zeta.values
    assert np.all(z <= 1.0 + 1e-12)
    assert np.all(z >= -10 * dt)
    assert np.all(z[:-1] >= z[1:] - 10 * dt)
    assert np.all(np.diff(path.eta.values, axis=1) >= 0.0)


def test_mass_balance():
    dt = 1e-3
    path = integrate(_ramp(), InitialOccupancy.parse("0.5"), 2.0, dt=dt, lam=0.5)
    assert abs(path.mass_balance()) <= 10 * dt


def test_first_order_convergence():
    T = 2.0
    ref = integrate(_ramp(T), InitialOccupancy.empty(), T, dt=1e-5, lam=0.5)

    def error(dt):
        path = integrate(_ramp(T), InitialOccupancy.empty(), T, dt=dt, lam=0.5)
        stride = int(round(dt / 1e-5))
        return np.max(np.abs(path.zeta.values[0] - ref.zeta.values[0, ::stride]))

    ratio = error(1e-2) / error(5e-3)
    assert 1.5 <= ratio <= 3.0


def _stationary():
    return ControlPolicy.null(3.0), InitialOccupancy.ones(), 3.0, 1.0, lambda k, t: np.full_like(t, float(k == 1))


def _relaxation():
    def zeta(k, t):
        return 0.5 * (1.0 - np.exp(-t)) if k == 1 else np.zeros_like(t)
    return ControlPolicy.null(5.0), InitialOccupancy.empty(), 5.0, 0.5, zeta


def _optimal():
    control, zeta = optimal_path(4, 2.0)
    return control, InitialOccupancy.ones(), 2.0, 1.0, zeta


@pytest.mark.parametrize("case", [_stationary, _relaxation, _optimal], ids=["stationary", "relaxation", "optimal-4-2"])
def test_halving_step_halves_error(case):
    control, x0, T, lam, zeta = case()

    def errors(dt, stride):
        path = integrate(control, x0, T, dt=dt, lam=lam)
        mesh = path.mesh[::stride]
        return max(np.max(np.abs(path.zeta.coordinate(k)[::stride] - zeta(k, mesh))) for k in (1, 2, 3))

    coarse, fine = errors(1e-2, 1), errors(5e-3, 2)
    assert coarse <= 5e-2
    assert fine <= coarse / 2 + 1e-10


def test_cost_of_switched_off_arrivals():
    T, lam = 2.0, 0.8
    control = ControlPolicy.constant(T, phi0=0.0)
    path = integrate(control, InitialOccupancy.ones(), T, dt=1e-3, lam=lam)
    assert cost(control, path) == pytest.approx(T * lam, rel=1e-12)
    assert np.all(np.diff(path.zeta.coordinate(1)) <= 0.0)


def test_cost_rejects_short_control():
    path = integrate(ControlPolicy.null(2.0), InitialOccupancy.ones(), 2.0, dt=1e-2)
    with pytest.raises(MeshMismatchError):
        cost(ControlPolicy.null(1.0), path)
    with pytest.raises(MeshMismatchError):
        integrate(ControlPolicy.null(1.0), InitialOccupancy.ones(), 2.0, dt=1e-2)


def test_explicit_dimension_truncation():
    control, _ = optimal_path(4, 2.0)
    with pytest.raises(TruncationError):
        integrate(control, InitialOccupancy.ones(), 2.0, dt=1e-3, M=2)


def test_automatic_dimension_grows():
    control = ControlPolicy.constant(2.0, phi0=5.0)
    assert auto_dimension(control, InitialOccupancy.ones()) == 3
    path = integrate(control, InitialOccupancy.ones(), 2.0, dt=1e-3, lam=1.0)
    assert path.M > 3
    assert path.zeta.values[-1, -1] < 1.0 - 10 * 1e-3


def test_input_validation():
    with pytest.raises(ValueError):
        integrate(ControlPolicy.null(1.0), InitialOccupancy.ones(), 1.0, dt=0.0)
    with pytest.raises(ValueError):
        integrate(ControlPolicy.null(1.0), InitialOccupancy.ones(), 1.0, lam=-1.0)


def test_control_lookup():
    control = _ramp()
    assert control.phi0_at(0.0) == 1.0
    assert control.phi0_at(1.0) == 1.5
    assert control.phi0_at(2.0) == 1.5
    with pytest.raises(ControlLookupError):
        control.phi0_at(2.5)
    with pytest.raises(ControlLookupError):
        control.segment_index(-0.1)
    phi0, rho = control_on_mesh(control, np.array([0.0, 0.5, 1.0, 2.0]), 3)
    assert phi0.tolist() == [1.0, 1.0, 1.5, 1.5]
    assert rho.shape == (3, 4) and np.all(rho == 1.0)


def test_control_canonical_form():
    control = ControlPolicy(mesh=[0.0, 0.5, 1.0], phi0=[1.0, 1.0], rho=[[1.0, 1.0], [1.0]])
    assert control.mesh == [0.0, 1.0]
    assert control.is_null
    doc = ControlPolicy.from_document({"mesh": [0, 1], "segments": [{"phi0": 2.0, "rho": [0.5]}]})
    assert ControlPolicy.from_document(doc.to_document()) == doc
    with pytest.raises(ValueError):
        ControlPolicy(mesh=[0.0, 1.0], phi0=[-1.0])
    with pytest.raises(ValueError):
        ControlPolicy(mesh=[0.0, 1.0, 1.0], phi0=[1.0, 1.0])


def test_frame_export_columns():
    path = integrate(ControlPolicy.null(1.0), InitialOccupancy.parse("0.5"), 1.0, dt=0.25, lam=0.5)
    frame = path.to_frame()
    assert list(frame.columns[:2]) == ["time", "zeta_1"]
    assert len(frame) == 5
    assert math.isclose(frame["time"].iloc[-1], 1.0)
    assert path.M == 3
    assert list(frame.columns) == ["time", "zeta_1", "zeta_2", "zeta_3", "psi_1", "psi_2", "psi_3",
                                   "eta_1", "eta_2", "eta_3"]
    records = path.to_records()
    assert list(records[0]) == ["time", "zeta", "psi", "eta"]
    assert records[-1]["zeta"] == path.zeta.values[:, -1].tolist()


def test_shortest_levels_along_optimal_path():
    control, _ = optimal_path(4, 2.0)
    path = integrate(control, InitialOccupancy.ones(), 2.0, dt=1e-3)
    levels = path.shortest_levels(tol=1e-6)
    assert levels[0] == 1
    assert levels[-1] == 3
    assert np.all(np.diff(levels) >= 0)
