import numpy as np
import pytest

from fieldint.core.quadforms import (
    Localization,
    QuadFormPair,
    discrete_laplacian,
    from_action_density,
    localize,
    q_eval,
    riesz_D,
    riesz_G,
    w_eval,
)
from fieldint.core.spaces import DualVector, FieldVector, GridSpec, build_grid, pairing
from fieldint.utils.errors import DegeneracyError, DimensionError, LocalizationError


def _unit(grid, i):
    row = np.zeros(grid.size)
    row[i] = 1.0
    return DualVector(grid, row)


def test_action_density_matrix_on_line(line_grid, line_form):
    n, h = line_grid.size, 0.5
    expected = (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h ** 2 + np.eye(n)
    np.testing.assert_allclose(line_form.A.real, expected)
    np.testing.assert_allclose(line_form.A @ line_form.G, np.eye(n), atol=1e-12)
    sign, logdet = np.linalg.slogdet(expected)
    assert sign > 0
    assert line_form.logdetA.real == pytest.approx(logdet)


def test_free_massless_form_is_degenerate():
    grid = build_grid(GridSpec(extent=(5,), boundary="free"))
    with pytest.raises(DegeneracyError):
        from_action_density(grid, mass=0.0, stiffness=1.0)


def test_dirichlet_massless_form_is_fine():
    grid = build_grid(GridSpec(extent=(6,), boundary="dirichlet"))
    qf = from_action_density(grid, mass=0.0, stiffness=1.0)
    assert np.all(np.linalg.eigvalsh(qf.A.real) > 0)


def test_laplacian_is_kronecker_sum(plane_grid):
    L = discrete_laplacian(plane_grid)
    n0, n1 = plane_grid.dims
    K0 = (2 * np.eye(n0) - np.eye(n0, k=1) - np.eye(n0, k=-1)) / 1.0 ** 2
    K1 = (2 * np.eye(n1) - np.eye(n1, k=1) - np.eye(n1, k=-1)) / 0.5 ** 2
    np.testing.assert_allclose(L, np.kron(K0, np.eye(n1)) + np.kron(np.eye(n0), K1))


def test_asymmetric_matrix_rejected(line_grid):
    A = np.eye(line_grid.size)
    A[0, 1] = 0.5
    with pytest.raises(DegeneracyError):
        QuadFormPair.from_matrix(line_grid, A)


def test_indefinite_matrix_rejected(line_grid):
    A = np.eye(line_grid.size)
    A[2, 2] = -1.0
    with pytest.raises(DegeneracyError):
        QuadFormPair.from_matrix(line_grid, A)


def test_riesz_maps_are_inverse(line_form, line_grid, rng):
    b = FieldVector(line_grid, rng.standard_normal(line_grid.size))
    np.testing.assert_allclose(riesz_G(line_form, riesz_D(line_form, b)).values, b.values, atol=1e-12)
    assert q_eval(line_form, b) == pytest.approx(w_eval(line_form, riesz_D(line_form, b)))


def test_scaled_and_direct_sum(line_form):
    scaled = line_form.scaled(2.0)
    np.testing.assert_allclose(scaled.G, line_form.G / 2.0, atol=1e-14)
    joint = line_form.direct_sum(line_form)
    n = line_form.size
    np.testing.assert_allclose(joint.G[:n, :n], line_form.G, atol=1e-14)
    np.testing.assert_allclose(joint.G[:n, n:], 0.0, atol=1e-14)
    assert joint.logdetA.real == pytest.approx(2 * line_form.logdetA.real)


def test_pushforward(line_form, rng):
    n = line_form.size
    M = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    pushed = line_form.pushforward(M)
    M_inv = np.linalg.inv(M)
    np.testing.assert_allclose(pushed.A, M_inv.T @ line_form.A @ M_inv, atol=1e-10)
    np.testing.assert_allclose(pushed.G, M @ line_form.G @ M.T, atol=1e-10)


def test_localize_unit_rows(line_form, line_grid):
    loc = localize(line_form, [_unit(line_grid, 0), _unit(line_grid, 3)])
    assert loc.m == 2
    G = line_form.G
    np.testing.assert_allclose(loc.Wm, [[G[0, 0], G[0, 3]], [G[3, 0], G[3, 3]]])
    np.testing.assert_allclose(loc.Wm @ loc.Wm_inv, np.eye(2), atol=1e-12)


def test_localize_rank_deficient_rows(line_form, line_grid):
    row = _unit(line_grid, 1)
    with pytest.raises(LocalizationError):
        localize(line_form, [row, 2.0 * row])


def test_localize_wrong_grid(line_form, plane_grid):
    with pytest.raises(DimensionError):
        localize(line_form, [_unit(plane_grid, 0)])


def test_localization_forms(line_form, line_grid, rng):
    loc = localize(line_form, [_unit(line_grid, 0)])
    u = rng.standard_normal((4, 1))
    np.testing.assert_allclose(loc.q_eval(u), u[:, 0] ** 2 / loc.Wm[0, 0])
    np.testing.assert_allclose(loc.w_eval(u), u[:, 0] ** 2 * loc.Wm[0, 0])
    b = FieldVector(line_grid, rng.standard_normal(line_grid.size))
    assert loc.coordinates(b)[0] == pytest.approx(b.values[0])
    with pytest.raises(LocalizationError):
        Localization.from_form([[1.0, 2.0], [2.0, 1.0]])


def test_covariance_image_saturates_pairing_bound(rng):
    grid = build_grid(GridSpec(extent=(10,), spacing=0.3, boundary="dirichlet"))
    qf = from_action_density(grid, mass=0.7, stiffness=1.3)
    bp = DualVector(grid, rng.standard_normal(grid.size))
    image = riesz_G(qf, bp)
    W = w_eval(qf, bp)
    assert abs(q_eval(qf, image) - W) < 1e-10 * abs(W)
    assert q_eval(qf, image) * W == pytest.approx(pairing(bp, image) ** 2, rel=1e-10)
    for _ in range(5):
        b = FieldVector(grid, rng.standard_normal(grid.size))
        assert pairing(bp, b).real ** 2 <= (q_eval(qf, b) * W).real * (1 + 1e-12)
    loc = localize(qf, [bp])
    assert loc.Wm[0, 0] == pytest.approx(W.real)
    u = np.array([[0.3], [-1.7], [2.5]])
    np.testing.assert_allclose(loc.q_eval(u) * W.real, u[:, 0] ** 2, rtol=1e-10)
