import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smoothlab.escape import EscapeFunction
from smoothlab.multiplier import (
    A_jk,
    A_squared_sum,
    AngularMultiplier,
    Hp_A_jk,
    SmoothingMultiplier,
    eval_theta_r,
    lagrange_identity_check,
    log_samples,
    relative_discrepancy,
    verify_angular_symbol_bound,
)
from smoothlab.specs import make_spec

vec3 = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3))


@given(vec3, vec3)
def test_lagrange_identity(x, xi):
    lhs, rhs = lagrange_identity_check(x, xi)
    assert lhs >= rhs - 1e-9 * max(rhs, 1.0)
    # the ordered double sum counts each pair twice
    single = sum((x[j] * xi[k] - x[k] * xi[j]) ** 2 for j in range(3) for k in range(j + 1, 3))
    assert lhs - rhs == pytest.approx(single, rel=1e-9, abs=1e-6 * max(rhs, 1.0))


@given(vec3, vec3)
def test_angular_symbol_antisymmetric(x, xi):
    for j in range(3):
        assert A_jk(x, xi, j, j) == 0.0
        for k in range(3):
            assert A_jk(x, xi, j, k) == -A_jk(x, xi, k, j)


def test_radial_momentum_has_no_angular_part(rng):
    x = rng.normal(size=(50, 2))
    assert np.all(A_squared_sum(x, 3.0 * x) < 1e-20)


def test_angular_bracket_flat_vanishes(rng):
    spec = make_spec("flat", n=2)
    x, xi = rng.normal(size=(100, 2)) * 10, rng.normal(size=(100, 2)) * 10
    assert np.all(Hp_A_jk(spec, x, xi, 0, 1) == 0.0)


@pytest.fixture(scope="module")
def escape_flat():
    return EscapeFunction(make_spec("flat", n=2), R=1.0, M=8.0)


def test_theta_r_requires_p_positive(escape_flat):
    with pytest.raises(ValueError):
        eval_theta_r(escape_flat, np.zeros((1, 2)), np.zeros((1, 2)))


def test_multiplier_validation(escape_flat):
    with pytest.raises(ValueError):
        SmoothingMultiplier(escape_flat, nu=0.0)
    with pytest.raises(ValueError):
        SmoothingMultiplier(escape_flat, M0=1.0)


def test_smoothing_multiplier_bounded(escape_flat, rng):
    mult = SmoothingMultiplier(escape_flat)
    x, xi = log_samples(2, 400, 2, rng)
    lam = mult(x, xi)
    assert np.all(np.abs(lam) <= mult.sup_bound(x, xi) + 1e-12)
    # zero off supp chi(r), i.e. for |xi| well below <x>^(m/2)
    far = log_samples(2, 50, 2, rng, rel_xi_decades=(-3.0, -0.5))
    assert np.all(mult(*far) == 0.0)


@pytest.mark.parametrize("name", ["flat", "perturbed_flat"])
def test_smoothing_decomposition_matches_direct(rng, name):
    spec = make_spec(name, n=2)
    mult = SmoothingMultiplier(EscapeFunction(spec, R=1.0, M=8.0))
    x, xi = log_samples(2, 150, 2, rng)
    dec = mult.decompose(x, xi)
    direct = -mult.Hp_direct(x, xi)
    ok = ~dec["flags"]
    assert np.max(relative_discrepancy(dec["total"], direct)[ok]) < 1e-4


def test_angular_decomposition_and_bound(rng):
    spec = make_spec("perturbed_flat(0.1, 1)", n=2)
    mult = AngularMultiplier(EscapeFunction(spec, R=1.0, M=8.0))
    x, xi = log_samples(2, 200, 2, rng)
    rep = verify_angular_symbol_bound(mult, x, xi, sigma0=1.0)
    assert rep.constants["max_relative_discrepancy"] < 1e-4
    assert rep.constants["HpA_constant"] < np.inf
    assert rep.constants["D_C3"] > 0


def test_angular_needs_two_dimensions(rng):
    spec = make_spec("flat", n=1)
    mult = AngularMultiplier(EscapeFunction(spec, R=1.0, M=8.0))
    with pytest.raises(ValueError):
        verify_angular_symbol_bound(mult, np.ones((2, 1)), np.ones((2, 1)))


def test_log_samples_shape(rng):
    x, xi = log_samples(3, 10, 4, rng)
    assert x.shape == xi.shape == (10, 3)
