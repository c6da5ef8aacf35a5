import numpy as np
import numpy.polynomial.polynomial as P
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldint.core.effective import (
    ActionFunctional,
    LocalizedAction,
    Polynomial,
    dual_mean_field,
    gamma_at,
    gamma_convexity,
    gamma_legendre,
    legendre_roundtrip,
    mean_field,
    quantum_eom_residual,
    schwinger_dyson_residual,
    tilted_mean,
    w_s_compute,
)
from fieldint.core.quadforms import Localization, from_action_density, localize
from fieldint.core.spaces import DualVector, FieldVector, GridSpec, build_grid
from fieldint.utils.errors import (
    ConfigError,
    DomainError,
    QuadratureError,
    ResolutionError,
    UnsupportedError,
)

# 两个内部格点：A = [[3, -1], [-1, 3]]，G = [[3, 1], [1, 3]] / 8
W00 = 0.375


@pytest.fixture
def pair_grid():
    return build_grid(GridSpec(extent=(4,), boundary="dirichlet"))


@pytest.fixture
def pair_form(pair_grid):
    return from_action_density(pair_grid, 1.0, 1.0)


def _rows(grid, *indices):
    return [DualVector(grid, np.eye(grid.size)[i]) for i in indices]


@pytest.fixture
def free_state(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0))
    return w_s_compute(ActionFunctional(pair_form, 0.0), loc, np.linspace(-1, 1, 21))


@pytest.fixture
def quartic_state(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0))
    return w_s_compute(ActionFunctional(pair_form, 0.5), loc, np.linspace(-1, 1, 21))


def test_quadratic_generating_functional(free_state):
    g = free_state.uprime_grid
    assert free_state.action.loc.Wm[0, 0].real == pytest.approx(W00)
    np.testing.assert_allclose(free_state.w_s_values, W00 * g ** 2, atol=1e-12)
    np.testing.assert_allclose(free_state.v_values, -W00 * g, atol=1e-12)
    np.testing.assert_allclose(free_state.gamma_values, free_state.v_values ** 2 / W00, atol=1e-12)
    assert free_state.log_N == pytest.approx(0.0, abs=1e-12)
    assert free_state.N == pytest.approx(1.0)


def test_quadratic_legendre_pair(free_state):
    assert gamma_at(free_state, 0.0) == pytest.approx(0.0, abs=1e-10)
    assert gamma_at(free_state, 0.2) == pytest.approx(0.2 ** 2 / W00, abs=1e-8)
    assert dual_mean_field(free_state, -0.1) == pytest.approx(0.1 / W00, abs=1e-8)
    assert quantum_eom_residual(free_state) < 1e-6
    assert legendre_roundtrip(free_state) < 1e-6
    assert gamma_convexity(free_state) == pytest.approx(2.0 / W00, rel=1e-6)


def test_quadratic_two_dimensional_slice(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0, 1))
    state = w_s_compute(ActionFunctional(pair_form, 0.0), loc, np.linspace(-0.8, 0.8, 9), axis=0)
    quad = np.einsum("ki,ij,kj->k", state.mean_values, loc.Wm_inv.real, state.mean_values)
    np.testing.assert_allclose(state.gamma_values, quad, atol=1e-10)
    np.testing.assert_allclose(state.mean_values[:, 1], -loc.Wm[1, 0].real * state.uprime_grid, atol=1e-12)


def test_quartic_partition_function(quartic_state):
    assert quartic_state.N < 1.0
    zero = quartic_state.action.w_s(np.zeros(1))
    assert zero == pytest.approx(quartic_state.log_N / np.pi)
    np.testing.assert_allclose(quartic_state.w_s_values, quartic_state.w_s_values[::-1], atol=1e-12)


def test_quantum_eom_independent_of_source_grid(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0))
    action = ActionFunctional(pair_form, 0.5)
    symmetric = w_s_compute(action, loc, np.linspace(-1, 1, 21))
    shifted = w_s_compute(action, loc, np.linspace(-0.7, 1.3, 17))
    a, b = quantum_eom_residual(symmetric), quantum_eom_residual(shifted)
    assert a < 1e-6 and b < 1e-6
    assert abs(a - b) < 1e-8


def test_quartic_effective_action_checks(quartic_state):
    assert quantum_eom_residual(quartic_state) < 1e-6
    assert legendre_roundtrip(quartic_state) < 1e-6
    assert gamma_convexity(quartic_state) >= -1e-8
    table = gamma_legendre(quartic_state)
    assert np.all(np.diff(table.v) > 0)


def test_mean_field_matches_tilted_average(quartic_state):
    np.testing.assert_allclose(mean_field(quartic_state, 0.35), tilted_mean(quartic_state, 0.35), atol=1e-6)


def test_mean_field_refuses_extrapolation(quartic_state):
    with pytest.raises(DomainError):
        mean_field(quartic_state, 2.0)
    with pytest.raises(DomainError):
        gamma_at(quartic_state, 10.0)


def test_insufficient_order_detected(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0))
    with pytest.raises(ResolutionError):
        w_s_compute(ActionFunctional(pair_form, 1.0), loc, np.linspace(-3, 3, 7), order=4)


def test_source_grid_validation(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0))
    S = ActionFunctional(pair_form, 0.1)
    with pytest.raises(ConfigError):
        w_s_compute(S, loc, [0.0, 1.0])
    with pytest.raises(ConfigError):
        w_s_compute(S, loc, [1.0, 0.0, -1.0])
    with pytest.raises(ConfigError):
        w_s_compute(S, loc, np.linspace(-1, 1, 5), axis=1)


def test_action_validation_and_value(pair_form, pair_grid):
    with pytest.raises(ConfigError):
        ActionFunctional(pair_form, -0.1)
    S = ActionFunctional(pair_form, 0.25)
    b = FieldVector(pair_grid, [0.5, -1.0])
    expected = 3 * 0.25 + 3 * 1.0 + 2 * 0.5 + 0.25 * (0.5 ** 4 + 1.0)
    assert S.evaluate(b) == pytest.approx(expected)
    with pytest.raises(UnsupportedError):
        LocalizedAction(Localization.from_form(np.eye(4)), 0.1)


def test_polynomial_algebra():
    p = Polynomial.monomial((2, 1), 3.0) + Polynomial.constant(2, 1.0)
    u = np.array([[2.0, -1.0], [0.5, 4.0]])
    np.testing.assert_allclose(p(u), 3 * u[:, 0] ** 2 * u[:, 1] + 1)
    np.testing.assert_allclose(p.derivative(0)(u), 6 * u[:, 0] * u[:, 1])
    np.testing.assert_allclose(p.derivative(1)(u), 3 * u[:, 0] ** 2)
    assert p.degree == 3
    q = Polynomial.from_json("[[2, [1, 0]], [[0, 1], [0, 2]]]", 2)
    np.testing.assert_allclose(q(u), 2 * u[:, 0] + 1j * u[:, 1] ** 2)
    with pytest.raises(ConfigError):
        Polynomial.from_json("not json", 2)
    with pytest.raises(ConfigError):
        Polynomial.from_terms({(1, 2, 3): 1.0}, 2)


exponent = st.integers(min_value=0, max_value=3)


@settings(max_examples=40, deadline=None)
@given(exponent, exponent, st.integers(min_value=0, max_value=2**32 - 1))
def test_schwinger_dyson_identity(e1, e2, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((2, 2))
    loc = Localization.from_form(B @ B.T + 0.5 * np.eye(2))
    assert schwinger_dyson_residual(None, loc, Polynomial.monomial((e1, e2))) < 1e-8


def test_schwinger_dyson_on_grid_localization(pair_form, pair_grid):
    loc = localize(pair_form, _rows(pair_grid, 0, 1))
    F = Polynomial.monomial((3, 1)) + Polynomial.monomial((0, 2), -0.5)
    assert schwinger_dyson_residual(pair_form, loc, F) < 1e-8


def test_schwinger_dyson_degree_limit():
    loc = Localization.from_form([[1.0]])
    with pytest.raises(QuadratureError):
        schwinger_dyson_residual(None, loc, Polynomial.monomial((7,)))


def test_polynomial_coefficients_follow_numpy_layout(rng):
    F = Polynomial.from_json("[[1.5, [2, 0, 1]], [-2, [0, 3, 0]], [[0, 1], [1, 1, 1]]]", 3)
    assert F.coef.shape == (3, 4, 2)
    u = rng.standard_normal((6, 3))
    np.testing.assert_allclose(F(u), P.polyval3d(u[:, 0], u[:, 1], u[:, 2], F.coef), rtol=1e-12)
    dF = F.derivative(1)
    np.testing.assert_allclose(dF(u), -6 * u[:, 1] ** 2 + 1j * u[:, 0] * u[:, 2], rtol=1e-12)
    assert F.degree == 3 and dF.degree == 2
    assert Polynomial.monomial((1,)).derivative(0).derivative(0).degree == 0
