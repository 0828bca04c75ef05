import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smoothlab.fitting import EstimateReport, fit_lower_bound, fit_upper_bound


@given(st.floats(0.1, 10.0), st.floats(0.0, 1.0))
def test_recovers_planted_constant(C, slack):
    lead = np.linspace(1.0, 100.0, 400)
    lhs = C * lead - slack
    fit = fit_lower_bound(lhs, lead)
    assert fit.passed
    # the slack budget lets C overshoot the planted value, but never below it by more than one grid ratio
    assert fit.C * 10 ** (8 / 19) >= C
    assert fit.slacks["Cprime"] <= fit.budgets["Cprime"]
    assert np.all(lhs - fit.C * lead + fit.slacks["Cprime"] >= -1e-9)


def test_heavy_tailed_violation_fails():
    lead = np.r_[np.ones(99), 1e3]
    fit = fit_lower_bound(-lead, lead)
    assert not fit.passed and fit.C == 0.0


def test_bounded_violation_is_absorbed():
    # a bounded sample cannot refute a bound with free constants; the budget decides
    lead = np.linspace(1, 10, 50)
    assert fit_lower_bound(-lead, lead).passed


def test_degenerate_inputs():
    fit = fit_lower_bound(np.zeros(5), np.ones(5))
    assert fit.degenerate and not fit.passed


def test_two_slacks():
    lead = np.linspace(1, 10, 100)
    w1 = 1.0 / lead
    lhs = 2.0 * lead - 0.5 * w1 - 0.1
    fit = fit_lower_bound(lhs, lead, slacks={"C1": w1, "C2": np.ones(100)})
    assert fit.passed and fit.C > 0.5


def test_upper_bound():
    assert fit_upper_bound([1.0, 3.0, 2.0]) == (3.0, 1)


def test_csv_is_deterministic(tmp_path):
    rep = EstimateReport("demo", columns={"a": np.array([0.1, 1 / 3]), "ok": np.array([True, False])},
                         constants={"C": np.float64(2.0), "nan": float("nan")}, passed=True)
    text = rep.to_csv(tmp_path / "r.csv")
    assert text == "a,ok\n0.1,1\n0.3333333333333333,0\n"
    assert rep.to_csv() == text
    assert '"nan": "nan"' in rep.to_json()
    assert rep.summary()["n_rows"] == 2
