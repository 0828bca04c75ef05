import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smoothlab.flow import FlowError, StepPolicy, flow, flow_to, midpoint_step, nontrapping_probe, sample_energy_shell
from smoothlab.specs import make_spec
from smoothlab.symbols import PhasePoint, eval_p

vec2 = arrays(np.float64, 2, elements=st.floats(-5, 5))


@given(vec2, vec2, st.floats(-3, 3))
def test_flat_flow_is_a_straight_line(x, xi, t):
    spec = make_spec("flat", n=2)
    xe, xie = flow_to(spec, x[None], xi[None], t)
    assert np.allclose(xe[0], x + 2 * t * xi, atol=1e-10)
    assert np.allclose(xie[0], xi, atol=0)


def test_potential_does_not_enter_the_principal_flow():
    spec = make_spec("harmonic", n=1)
    tr = flow(spec, PhasePoint([1.0], [0.5]), 2.0, StepPolicy(dt=1e-2, normalized=False))
    assert np.allclose(tr.x[:, 0], 1.0 + tr.times, atol=1e-12)


def test_energy_conserved_on_perturbed_metric(rng):
    spec = make_spec("perturbed_flat", n=2)
    x, xi = sample_energy_shell(spec, 20, 3.0, rng)
    tr = flow(spec, x, 10.0, StepPolicy(dt=1e-2), xi0=xi)
    assert tr.energy_drift < 1e-8


def test_backward_flow_inverts(rng):
    spec = make_spec("anisotropic", n=2)
    x, xi = sample_energy_shell(spec, 8, 2.0, rng)
    xe, xie = flow_to(spec, x, xi, 1.5, substeps=150)
    xb, xib = flow_to(spec, xe, xie, -1.5, substeps=150)
    assert np.allclose(xb, x, atol=1e-9) and np.allclose(xib, xi, atol=1e-9)


def test_midpoint_order_two():
    spec = make_spec("perturbed_flat", n=2)
    x0, xi0 = np.array([[0.3, -0.4]]), np.array([[0.8, 0.5]])
    ref = flow_to(spec, x0, xi0, 1.0, order=4, substeps=2000)[0]
    errs = [np.abs(flow_to(spec, x0, xi0, 1.0, order=2, substeps=k)[0] - ref).max() for k in (50, 100, 200)]
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.5 <= e1 / e2 <= 4.5


def test_midpoint_reports_convergence():
    spec = make_spec("flat", n=1)
    _, _, conv = midpoint_step(spec, np.zeros((3, 1)), np.ones((3, 1)), 0.1)
    assert conv.all()


def test_csv_dump(tmp_path):
    spec = make_spec("flat", n=2)
    tr = flow(spec, PhasePoint([0.0, 0.0], [1.0, 0.0]), 0.05, StepPolicy(dt=1e-2, normalized=False))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,xi1,xi2,p" and len(lines) == len(tr.times) + 1


def test_probe_flat_escapes(rng):
    spec = make_spec("flat", n=2)
    x, xi = sample_energy_shell(spec, 50, 2.0, rng)
    res = nontrapping_probe(spec, x, xi, t_max=50, R_esc=20, policy=StepPolicy(dt=5e-2))
    assert res.non_trapping and res.counts["escaped"] == 50
    # on the unit shell |x(t)| >= 2t - 2, so every ray leaves |x| <= 20 by t = 11
    assert res.t_K <= 11.0 + 5e-2


def test_probe_detects_circular_orbit():
    spec = make_spec("trap(1.0)", n=2)
    x0 = np.array([[1.0, 0.0]])
    xi0 = np.array([[0.0, 1.0]]) / np.sqrt(eval_p(spec, x0, np.array([[0.0, 1.0]])))
    res = nontrapping_probe(spec, x0, xi0, t_max=20, R_esc=10, policy=StepPolicy(dt=1e-2))
    assert res.counts["trapped"] == 1 and not res.non_trapping


def test_bad_order():
    spec = make_spec("flat", n=1)
    with pytest.raises(ValueError):
        flow_to(spec, np.zeros((1, 1)), np.ones((1, 1)), 1.0, order=3)
    assert issubclass(FlowError, RuntimeError)
