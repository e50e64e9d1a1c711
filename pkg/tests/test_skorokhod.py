import numpy as np
import pytest

from core.skorokhod import (GridPath, complementarity_residual, complementarity_violations,
                            reflect_1d, solve_sp, sup_distance)
from utils.errors import DomainError, MeshMismatchError


def _mesh(points=101, T=1.0):
    return np.linspace(0.0, T, points)


def _random_path(rng, M, points, knots=12):
    """Piecewise-linear coordinates wandering around the boundary, starting at or below 1."""
    t = _mesh(points)
    knot_t = np.linspace(0.0, 1.0, knots)
    values = []
    for _ in range(M):
        knot_v = 1.0 + np.cumsum(rng.normal(0.0, 0.3, knots))
        knot_v[0] = rng.uniform(-0.5, 1.0)
        values.append(np.interp(t, knot_t, knot_v))
    return GridPath(t, np.array(values))


def test_reflect_1d_never_touching_boundary():
    psi = np.full(11, 0.5)
    phi, eta = reflect_1d(psi)
    assert np.array_equal(phi, psi)
    assert np.all(eta == 0.0)


def test_reflect_1d_linear_overshoot_matches_running_max():
    t = _mesh()
    phi, eta = reflect_1d(0.8 + t)
    np.testing.assert_allclose(phi, np.minimum(0.8 + t, 1.0), atol=1e-12)
    np.testing.assert_allclose(eta, np.maximum(t - 0.2, 0.0), atol=1e-12)


def test_reflect_1d_on_boundary_without_overshoot():
    phi, eta = reflect_1d(np.ones(21))
    assert np.all(phi == 1.0)
    assert np.all(eta == 0.0)


def test_reflect_1d_rejects_bad_inputs():
    with pytest.raises(DomainError):
        reflect_1d([1.2, 0.5])
    with pytest.raises(DomainError):
        reflect_1d([])


def test_solve_sp_two_coordinates():
    t = _mesh()
    psi = GridPath(t, np.vstack([0.8 + t, np.full_like(t, 0.5)]))
    sol = solve_sp(psi)
    np.testing.assert_allclose(sol.eta.coordinate(1), np.maximum(t - 0.2, 0.0), atol=1e-12)
    np.testing.assert_allclose(sol.phi.coordinate(2), np.minimum(0.5 + np.maximum(t - 0.2, 0.0), 1.0), atol=1e-12)
    np.testing.assert_allclose(sol.eta.coordinate(2), np.maximum(t - 0.7, 0.0), atol=1e-12)


def test_solve_sp_inactive_below_boundary():
    rng = np.random.default_rng(3)
    t = _mesh()
    psi = GridPath(t, rng.uniform(-1.0, 0.9, size=(4, t.size)))
    sol = solve_sp(psi)
    assert np.all(sol.eta.values == 0.0)
    assert np.array_equal(sol.phi.values, psi.values)


def test_solve_sp_reports_offending_coordinate():
    t = _mesh(5)
    psi = GridPath(t, np.vstack([np.zeros(5), np.full(5, 1.5)]))
    with pytest.raises(DomainError) as info:
        solve_sp(psi)
    assert info.value.coordinate == 2


def test_solve_sp_integer_inputs_stay_exact():
    t = _mesh(6)
    psi = GridPath(t, np.array([[3, 4, 5, 5, 4, 6], [0, 0, 0, 1, 1, 0]]))
    sol = solve_sp(psi, cap=4)
    assert sol.phi.values.dtype.kind == "i"
    assert np.array_equal(sol.eta.coordinate(1), [0, 0, 1, 1, 1, 2])
    assert np.array_equal(sol.phi.coordinate(1), [3, 4, 4, 4, 3, 4])
    assert np.array_equal(sol.phi.coordinate(2), [0, 0, 1, 2, 2, 2])


def test_sup_distance_basics():
    t = _mesh(11)
    a = GridPath(t, np.zeros((1, t.size)))
    assert sup_distance(a, a) == 0.0
    b = GridPath(t, np.full((1, t.size), 0.4))
    assert sup_distance(a, b) == pytest.approx(0.2)


def test_sup_distance_matches_double_loop():
    rng = np.random.default_rng(11)
    t = _mesh(37)
    a = GridPath(t, rng.normal(size=(5, t.size)))
    b = GridPath(t, rng.normal(size=(3, t.size)))
    expected = 0.0
    for k in range(3):
        gap = 0.0
        for i in range(t.size):
            gap = max(gap, abs(a.values[k, i] - b.values[k, i]))
        expected += gap / 2 ** (k + 1)
    assert sup_distance(a, b) == pytest.approx(expected, rel=1e-14)


def test_sup_distance_rejects_mesh_mismatch():
    a = GridPath(_mesh(11), np.zeros((1, 11)))
    b = GridPath(_mesh(12), np.zeros((1, 12)))
    with pytest.raises(MeshMismatchError):
        sup_distance(a, b)


def test_lipschitz_constants_on_random_pairs():
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(1000):
        psi = _random_path(rng, M=6, points=200)
        other = _random_path(rng, M=6, points=200)
        d = sup_distance(psi, other)
        sol, sol_other = solve_sp(psi), solve_sp(other)
        if sup_distance(sol.phi, sol_other.phi) > 4.0 * d + 1e-12:
            violations += 1
        if sup_distance(sol.eta, sol_other.eta) > 2.0 * d + 1e-12:
            violations += 1
    assert violations == 0


def test_truncation_is_consistent():
    rng = np.random.default_rng(5)
    psi = _random_path(rng, M=8, points=150)
    full = solve_sp(psi)
    for m in range(1, 8):
        part = solve_sp(psi.head(m))
        assert np.array_equal(part.phi.values, full.phi.values[:m])
        assert np.array_equal(part.eta.values, full.eta.values[:m])


def test_complementarity_and_identity_hold():
    rng = np.random.default_rng(9)
    for _ in range(50):
        psi = _random_path(rng, M=5, points=120)
        sol = solve_sp(psi)
        assert np.all(sol.phi.values <= 1.0 + 1e-15)
        assert np.all(np.diff(sol.eta.values, axis=1) >= 0.0)
        assert np.all(sol.eta.values[:, 0] == 0.0)
        assert np.all(complementarity_residual(sol) <= 1e-9 * psi.times.size)
        assert complementarity_violations(psi, sol) == []


def test_nonincreasing_input_needs_no_reflection():
    t = _mesh()
    rng = np.random.default_rng(1)
    start = rng.uniform(-1.0, 1.0, size=(4, 1))
    slopes = rng.uniform(0.0, 2.0, size=(4, 1))
    psi = GridPath(t, start - slopes * t)
    assert np.all(solve_sp(psi).eta.values == 0.0)


def test_grid_path_csv_columns(tmp_path):
    t = _mesh(4)
    path = GridPath(t, np.vstack([t, 1 - t]))
    target = tmp_path / "path.csv"
    path.to_csv(str(target))
    loaded = GridPath.read_csv(str(target))
    assert list(path.to_frame().columns) == ["time", "x1", "x2"]
    np.testing.assert_allclose(loaded.values, path.values)


def test_grid_path_validates_mesh():
    with pytest.raises(DomainError):
        GridPath(np.array([0.0, 0.5, 0.5]), np.zeros((1, 3)))
    with pytest.raises(DomainError):
        GridPath(np.array([0.1, 0.5]), np.zeros((1, 2)))
    with pytest.raises(MeshMismatchError):
        GridPath(np.array([0.0, 0.5]), np.zeros((1, 3)))
