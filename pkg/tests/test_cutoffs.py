import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smoothlab.cutoffs import CutoffFamily, ramp_down, ramp_down_deriv, smooth_step, smooth_step_deriv

unit = st.floats(0.01, 0.99)


def test_smooth_step_is_an_exact_switch():
    s = np.array([-3.0, -1e-9, 0.0, 1.0, 1.0 + 1e-9, 5.0])
    assert np.array_equal(smooth_step(s), [0, 0, 0, 1, 1, 1])
    assert smooth_step(0.5) == pytest.approx(0.5)


def test_smooth_step_monotone():
    s = np.linspace(-0.5, 1.5, 2001)
    assert np.all(np.diff(smooth_step(s)) >= 0)


@given(unit)
def test_first_derivative_matches_differences(s):
    h = 1e-6
    fd = (smooth_step(s + h) - smooth_step(s - h)) / (2 * h)
    assert smooth_step_deriv(s) == pytest.approx(fd, rel=1e-5, abs=1e-8)


@given(unit)
def test_second_derivative_matches_differences(s):
    h = 1e-5
    fd = (smooth_step_deriv(s + h) - smooth_step_deriv(s - h)) / (2 * h)
    assert smooth_step_deriv(s, 2) == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_derivative_order_checked():
    with pytest.raises(ValueError):
        smooth_step_deriv(np.array([0.5]), order=3)


@given(st.floats(-2, 4))
def test_ramp_down_limits_and_rate(t):
    v = ramp_down(t, 0.5, 1.5)
    assert 0.0 <= v <= 1.0
    if t <= 0.5:
        assert v == 1.0
    if t >= 1.5:
        assert v == 0.0
    h = 1e-6
    fd = (ramp_down(t + h, 0.5, 1.5) - ramp_down(t - h, 0.5, 1.5)) / (2 * h)
    assert ramp_down_deriv(t, 0.5, 1.5) == pytest.approx(fd, abs=1e-6)


@given(st.floats(-1, 1))
def test_switch_pair_parity(t):
    cf = CutoffFamily(eps=0.125)
    assert cf.psi0(t) == pytest.approx(cf.psi0(-t), abs=0)
    assert cf.psi1(t) == pytest.approx(-cf.psi1(-t), abs=0)
    if abs(t) <= cf.eps:
        assert cf.psi0(t) == 1.0 and cf.psi1(t) == 0.0
    if abs(t) >= 2 * cf.eps:
        assert cf.psi0(t) == 0.0 and cf.psi1(t) == -np.sign(t)


def test_switch_pair_derivatives():
    cf = CutoffFamily(eps=0.2)
    t = np.linspace(-0.6, 0.6, 241)
    h = 1e-6
    assert np.allclose(cf.dpsi0(t), (cf.psi0(t + h) - cf.psi0(t - h)) / (2 * h), atol=1e-5)
    assert np.allclose(cf.dpsi1(t), (cf.psi1(t + h) - cf.psi1(t - h)) / (2 * h), atol=1e-5)


def test_unit_cutoffs():
    assert CutoffFamily.chi_unit(0.5) == 1.0 and CutoffFamily.chi_unit(1.0) == 0.0
    assert CutoffFamily.theta_cut(1.0) == 1.0 and CutoffFamily.theta_cut(2.0) == 0.0


@pytest.mark.parametrize("eps", [0.0, -1.0, np.inf, np.nan])
def test_bad_eps(eps):
    with pytest.raises(ValueError):
        CutoffFamily(eps=eps)
