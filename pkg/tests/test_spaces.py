import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fieldint.core.spaces import (
    Boundary,
    DualVector,
    FieldVector,
    GridSpec,
    build_grid,
    pairing,
    removed_sites,
    rescale_interval,
)
from fieldint.utils.errors import ConfigError, DimensionError, DomainError

finite = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("boundary, dims", [
    (Boundary.FREE, (6,)),
    (Boundary.DIRICHLET, (4,)),
    (Boundary.POINTED, (5,)),
])
def test_boundary_removes_sites(boundary, dims):
    grid = build_grid(GridSpec(extent=(6,), spacing=0.25, boundary=boundary))
    assert grid.dims == dims
    assert grid.size == dims[0]
    np.testing.assert_allclose(grid.weights, 0.25)
    assert sum(removed_sites(boundary)) == 6 - dims[0]


def test_plane_grid_weights(plane_grid):
    assert plane_grid.dims == (2, 3)
    assert plane_grid.size == 6
    np.testing.assert_allclose(plane_grid.weights, 0.5)


def test_axis_coordinates_skip_boundary_sites(line_grid):
    np.testing.assert_allclose(line_grid.axis_coordinates(0), [0.5, 1.0, 1.5, 2.0, 2.5])


def test_no_interior_sites_rejected():
    with pytest.raises(ConfigError):
        build_grid(GridSpec(extent=(2,), boundary="dirichlet"))


def test_unknown_boundary_rejected():
    with pytest.raises(ConfigError):
        Boundary.parse("periodic")


def test_boundary_count_mismatch():
    with pytest.raises(ConfigError):
        build_grid(GridSpec(extent=(4, 4, 4), boundary=("free", "dirichlet")))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_pairing_is_weighted_sum_of_raw_values(raw_b, raw_bp):
    grid = build_grid(GridSpec(extent=(7,), spacing=0.5, boundary="dirichlet"))
    b = FieldVector.from_raw(grid, raw_b)
    bp = DualVector.from_raw(grid, raw_bp)
    expected = np.sum(grid.weights * raw_b * raw_bp)
    assert pairing(bp, b) == pytest.approx(expected, abs=1e-9)


def test_pairing_does_not_conjugate(line_grid):
    b = FieldVector(line_grid, np.full(line_grid.size, 1j))
    bp = DualVector(line_grid, np.eye(line_grid.size)[0] * 1j)
    assert pairing(bp, b) == pytest.approx(-1.0)


def test_pairing_rejects_swapped_arguments(line_grid):
    b = FieldVector.zeros(line_grid)
    with pytest.raises(DimensionError):
        pairing(b, b)


def test_grid_mismatch_rejected(line_grid, plane_grid):
    with pytest.raises(DimensionError):
        FieldVector.zeros(line_grid) + FieldVector.zeros(build_grid(GridSpec(extent=(8,))))
    with pytest.raises(DimensionError):
        FieldVector(plane_grid, np.zeros(line_grid.size))


def test_vector_arithmetic(line_grid, rng):
    a = FieldVector(line_grid, rng.standard_normal(line_grid.size))
    b = FieldVector(line_grid, rng.standard_normal(line_grid.size))
    np.testing.assert_allclose((a + b - a).values, b.values)
    np.testing.assert_allclose((2 * a).values, 2 * a.values)
    np.testing.assert_allclose((-a).values, -a.values)
    np.testing.assert_allclose(FieldVector.from_raw(line_grid, a.to_raw()).values, a.values)


def test_concat_and_split(line_grid, plane_grid, rng):
    a = DualVector(line_grid, rng.standard_normal(line_grid.size))
    b = DualVector(plane_grid, rng.standard_normal(plane_grid.size))
    joint = a.concat(b)
    assert joint.grid.size == line_grid.size + plane_grid.size
    first, second = joint.split()
    np.testing.assert_array_equal(first.values, a.values)
    np.testing.assert_array_equal(second.values, b.values)
    assert second.grid.compatible(plane_grid)


def test_rescale_interval_keeps_pairing(line_grid, rng):
    b = FieldVector(line_grid, rng.standard_normal(line_grid.size))
    bp = DualVector(line_grid, rng.standard_normal(line_grid.size))
    b1, bp1 = rescale_interval(b, bp, 0.5, 3.0)
    assert pairing(bp1, b1) == pytest.approx(pairing(bp, b))
    np.testing.assert_allclose(b1.values, b.values / np.sqrt(2.5))


def test_rescale_interval_requires_ordered_endpoints(line_grid):
    b, bp = FieldVector.zeros(line_grid), DualVector.zeros(line_grid)
    with pytest.raises(DomainError):
        rescale_interval(b, bp, 1.0, 1.0)
