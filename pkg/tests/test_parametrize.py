import numpy as np
import pytest

from fieldint.core.integrators import IntegratorSpec, z_eval
from fieldint.core.measures import DiracComb
from fieldint.core.parametrize import (
    LinearMapPair,
    VectorFieldSet,
    absorb_interval,
    change_of_variable_check,
    convergence_table,
    develop_path,
    develop_paths,
    driver_series,
    field_parametrize,
    lipschitz_estimate,
    pullback_integrate,
    translation_check,
    vector_field_catalog,
)
from fieldint.core.quadforms import Localization, QuadFormPair, from_action_density
from fieldint.core.spaces import DualVector, FieldVector, GridSpec, build_grid
from fieldint.utils.errors import (
    ConfigError,
    DegeneracyError,
    DevelopmentError,
    DimensionError,
    UnsupportedError,
)


def _rotation_exact(t):
    return np.array([np.cos(t), np.sin(t)])


def test_flat_development_follows_driver():
    vfs = vector_field_catalog("flat", M=2, m0=[1.0, -1.0])
    t = np.linspace(0, 1, 21)
    b = np.stack([np.sin(3 * t), t ** 2], axis=1)
    sol = develop_path(vfs, b)
    np.testing.assert_allclose(sol.points[0], vfs.m0 + b - b[0], atol=1e-13)
    assert not sol.failed[0]


def test_rotation_converges_at_second_order():
    vfs = vector_field_catalog("rotation")
    table = convergence_table(vfs, lambda t: t, _rotation_exact, [50, 100, 200, 400])
    for row in table[1:]:
        assert 3.5 <= row.ratio <= 4.5
    assert np.isnan(table[0].ratio)


def test_rotation_final_error():
    vfs = vector_field_catalog("rotation")
    sol = develop_path(vfs, np.linspace(0, 1, 10_001))
    assert np.linalg.norm(sol.final[0] - _rotation_exact(1.0)) < 1e-6
    # 旋转保持半径
    np.testing.assert_allclose(np.linalg.norm(sol.points[0], axis=1), 1.0, atol=1e-10)


def test_scaled_rotation():
    vfs = vector_field_catalog("scaled-rotation", [2.0])
    sol = develop_path(vfs, np.linspace(0, 1, 4001))
    np.testing.assert_allclose(sol.final[0], [np.cos(2.0), np.sin(2.0)], atol=1e-6)


def test_affine_exponential_growth():
    vfs = vector_field_catalog("affine", [0.5, 1.0])
    sol = develop_path(vfs, np.linspace(0, 1, 2001))
    exact = (vfs.m0 + 2.0) * np.exp(0.5) - 2.0
    np.testing.assert_allclose(sol.final[0], exact, atol=1e-6)


def test_drift_is_added():
    vfs = vector_field_catalog("flat", drift=[0.5])
    sol = develop_path(vfs, np.linspace(0, 2, 11), t_a=0.0, t_b=2.0)
    assert sol.final[0, 0] == pytest.approx(2.0 + 0.5 * 2.0)


def test_blow_up_is_flagged():
    vfs = vector_field_catalog("affine", [50.0, 1.0])
    drivers = np.linspace(0, 1, 101)
    sol = develop_paths(vfs, drivers[None, :])
    assert sol.failed[0]
    with pytest.raises(DevelopmentError):
        develop_path(vfs, drivers)


def test_refinement_and_step_limits():
    vfs = vector_field_catalog("rotation")
    coarse = np.linspace(0, 1, 11)
    fine = develop_paths(vfs, coarse, steps=40)
    assert fine.points.shape == (1, 41, 2)
    with pytest.raises(ConfigError):
        develop_paths(vfs, coarse, steps=5)
    with pytest.raises(DimensionError):
        develop_paths(vfs, np.zeros((2, 11, 3)))


def test_unknown_field_and_bad_shapes():
    with pytest.raises(ConfigError):
        vector_field_catalog("spiral")
    with pytest.raises(ConfigError):
        vector_field_catalog("affine")
    with pytest.raises(DimensionError):
        VectorFieldSet(X=lambda p: p[:, :, None], m0=[0.0, 0.0], n=2)


def test_from_fields_and_rank():
    vfs = VectorFieldSet.from_fields([lambda p: np.ones_like(p), lambda p: 2 * np.ones_like(p)], m0=[0.0, 0.0])
    assert vfs.n == 2
    assert vfs.rank_at(np.zeros(2))[0] == 1
    assert lipschitz_estimate(vfs) == pytest.approx(0.0, abs=1e-12)
    assert lipschitz_estimate(vector_field_catalog("rotation")) == pytest.approx(1.0, rel=1e-6)


def test_driver_series_padding():
    dirichlet = build_grid(GridSpec(extent=(5,), boundary="dirichlet"))
    pointed = build_grid(GridSpec(extent=(5,), boundary="pointed"))
    raw = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(driver_series(dirichlet, raw), [0, 1, 2, 3, 0])
    np.testing.assert_array_equal(driver_series(pointed, np.arange(4.0)), [0, 0, 1, 2, 3])


def test_field_parametrize_flat(plane_grid, rng):
    raw = rng.standard_normal(plane_grid.size)
    b = FieldVector.from_raw(plane_grid, raw)
    f_a = np.array([0.5, -1.0])
    values = field_parametrize(vector_field_catalog("flat"), f_a, b)
    assert values.shape == plane_grid.dims
    np.testing.assert_allclose(values, f_a[:, None] + raw.reshape(plane_grid.dims), atol=1e-13)


def test_field_parametrize_stays_on_circle(plane_grid, rng):
    b = FieldVector.from_raw(plane_grid, 0.2 * rng.standard_normal(plane_grid.size))
    a, c = 0.4, 2.1
    f_a = np.array([[np.cos(a), np.sin(a)], [np.cos(c), np.sin(c)]])
    values = field_parametrize(vector_field_catalog("rotation"), f_a, b)
    assert values.shape == plane_grid.dims + (2,)
    np.testing.assert_allclose(np.linalg.norm(values, axis=-1), 1.0, atol=1e-6)


def test_field_parametrize_needs_time_axis(line_grid):
    with pytest.raises(DimensionError):
        field_parametrize(vector_field_catalog("flat"), 0.0, FieldVector.zeros(line_grid))


def test_pullback_mean_of_flat_endpoint():
    grid = build_grid(GridSpec(extent=(21,), spacing=0.05, boundary="pointed"))
    spec = IntegratorSpec.gaussian(from_action_density(grid, 0.0, 1.0))
    vfs = vector_field_catalog("flat")
    est = pullback_integrate(vfs, spec, lambda sol: sol.final[:, 0], 20_000, seed=3)
    assert abs(est.mean) <= 4 * est.stderr
    assert est.failures == 0


def test_pullback_flat_phase_matches_gaussian_transform():
    grid = build_grid(GridSpec(extent=(21,), spacing=0.05, boundary="pointed"))
    spec = IntegratorSpec.gaussian(from_action_density(grid, 0.0, 1.0))
    k = 0.5
    row = np.zeros(grid.size)
    row[-1] = k / np.sqrt(grid.weights[-1])
    expected = z_eval(spec, DualVector(grid, row))
    est = pullback_integrate(vector_field_catalog("flat"), spec,
                             lambda sol: np.exp(-2j * np.pi * k * sol.final[:, 0]), 20_000, seed=5)
    assert abs(est.mean - expected) <= 4 * est.stderr
    assert est.failures == 0


def test_pullback_rotation_stays_in_disk():
    grid = build_grid(GridSpec(extent=(11,), spacing=0.1, boundary="pointed"))
    spec = IntegratorSpec.gaussian(from_action_density(grid, 0.0, 1.0))
    vfs = vector_field_catalog("rotation")
    est = pullback_integrate(vfs, spec, lambda sol: sol.final[:, 0] + 1j * sol.final[:, 1], 5000, seed=4)
    assert abs(est.mean) <= 1.0 + 1e-12


def test_linear_change_of_variable(line_form, line_grid, rng):
    n = line_grid.size
    pair = LinearMapPair.from_matrix(2.0 * np.eye(n) + 0.3 * rng.standard_normal((n, n)))
    assert pair.transpose_residual() < 1e-12
    spec = IntegratorSpec.gaussian(line_form, 0.8)
    result = change_of_variable_check(pair, spec, DiracComb.random(line_grid, 4, rng))
    assert result.residual < 1e-10
    # 体积元两端相差 Det M 与 det(A/s)^{-1/2}
    volume = np.exp(-0.5 * (line_form.logdetA - n * np.log(0.8)))
    assert result.rhs_volume == pytest.approx(pair.det * volume * result.rhs, rel=1e-12)
    assert abs(pair.det) > 2.0


def test_identity_change_of_variable_is_exact(line_form, line_grid, rng):
    pair = LinearMapPair.from_matrix(np.eye(line_grid.size))
    result = change_of_variable_check(pair, IntegratorSpec.gaussian(line_form), DiracComb.random(line_grid, 3, rng))
    assert result.residual_pullback == 0.0
    assert result.residual_determinant == 0.0


def test_doubling_map_closed_form():
    grid = build_grid(GridSpec(extent=(3,), spacing=1.0, boundary="dirichlet"))
    assert grid.size == 1
    qf = QuadFormPair.from_matrix(grid, [[1.0]])
    b = 0.4
    comb = DiracComb.dirac(DualVector(grid, np.array([b])))
    result = change_of_variable_check(LinearMapPair.from_matrix([[2.0]]), IntegratorSpec.gaussian(qf), comb)
    expected = np.exp(-4.0 * np.pi * b ** 2)
    assert result.lhs == pytest.approx(expected, rel=1e-13)
    assert result.lhs_volume == pytest.approx(2.0 * expected, rel=1e-13)
    assert result.rhs_volume == pytest.approx(2.0 * expected, rel=1e-13)
    assert result.residual < 1e-12


def test_orientation_reversing_map(line_form, line_grid, rng):
    M = np.eye(line_grid.size)
    M[0, 0] = -3.0
    pair = LinearMapPair.from_matrix(M)
    assert pair.det.real == pytest.approx(-3.0)
    result = change_of_variable_check(pair, IntegratorSpec.gaussian(line_form), DiracComb.random(line_grid, 3, rng))
    assert result.residual < 1e-10
    assert result.rhs_volume / result.rhs == pytest.approx(-3.0 * np.exp(-0.5 * line_form.logdetA))


def test_complex_map_has_no_orientation(line_form, line_grid, rng):
    pair = LinearMapPair.from_matrix(np.eye(line_grid.size) * (1.0 + 0.5j))
    with pytest.raises(UnsupportedError):
        change_of_variable_check(pair, IntegratorSpec.gaussian(line_form), DiracComb.random(line_grid, 2, rng))


def test_singular_map_rejected():
    with pytest.raises(DegeneracyError):
        LinearMapPair.from_matrix(np.zeros((3, 3)))


def test_translation_invariance(rng):
    loc = Localization.from_form([[0.8, 0.1], [0.1, 0.5]])
    points = 0.3 * rng.standard_normal((4, 2))
    weights = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert translation_check(loc, points, weights, [0.4, -1.3]) < 1e-10


def test_interval_absorption(line_form, line_grid, rng):
    first, second = absorb_interval(line_form, 1.0, 0.5, 2.0)
    bp = DualVector(line_grid, rng.standard_normal(line_grid.size))
    assert z_eval(first, bp) == pytest.approx(z_eval(second, bp), abs=1e-12)
    np.testing.assert_allclose(second.qf.A, line_form.A / 1.5)
