import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smoothlab.harness import wavepacket
from smoothlab.propagator import (
    PropagationError,
    PropagatorConfig,
    manufactured_forcing,
    solve,
    spectral_scale,
    step,
)
from smoothlab.specs import make_spec
from smoothlab.weyl import GridFunction, GridSpec

G = GridSpec(1, 64, np.pi)  # integer wavenumbers
QUARTIC = make_spec("quartic", n=1)


def cayley(theta):
    return (1 - 0.5j * theta) / (1 + 0.5j * theta)


@given(st.integers(1, 10), st.floats(1e-3, 0.2))
def test_plane_wave_gets_the_cayley_phase(k, dt):
    spec = make_spec("flat", n=1)
    u = GridFunction(G, np.exp(1j * k * G.x1d))
    theta = dt * k * k
    v, info = step(spec, PropagatorConfig(dt=dt, tol=1e-13), u, 0.0)
    assert np.allclose(v.values, cayley(theta) * u.values, atol=1e-11)
    # distance to the exact phase: |theta - 2 atan(theta/2)| <= theta^3/12
    err = np.max(np.abs(v.values - np.exp(-1j * theta) * u.values))
    assert err <= theta**3 / 12 * (1 + 1e-6) + 1e-11


def test_config_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(scheme="euler")
    with pytest.raises(ValueError):
        PropagatorConfig(dt=0.0)
    with pytest.raises(ValueError):
        PropagatorConfig(stride=0)


def test_unitarity_over_a_thousand_steps():
    grid = GridSpec(1, 64, 4.0)
    u0 = wavepacket(grid, 0.5, 0.5, 3.0)
    sol = solve(QUARTIC, PropagatorConfig(dt=1e-3, stride=500), u0, 1.0)
    assert len(sol.norms) == 1001
    assert max(abs(n - 1.0) for n in sol.norms) < 1e-6
    assert sol.times == [0.0, 0.5, 1.0]


def test_zero_horizon_returns_the_data():
    u0 = wavepacket(G, 0.0, 0.5)
    sol = solve(QUARTIC, PropagatorConfig(), u0, 0.0)
    assert sol.final is u0 and sol.manifest["steps"] == 0


def test_time_reversal():
    # real coefficients: conj(u(T - t)) is again a solution
    grid = GridSpec(1, 64, 4.0)
    u0 = wavepacket(grid, -0.4, 0.6, 2.0)
    cfg = PropagatorConfig(dt=2e-3, tol=1e-13)
    uT = solve(QUARTIC, cfg, u0, 0.2).final
    back = solve(QUARTIC, cfg, uT.like(np.conj(uT.values)), 0.2).final
    assert np.max(np.abs(np.conj(back.values) - u0.values)) < 1e-9


def test_manufactured_solution_is_second_order():
    grid = GridSpec(1, 64, 4.0)
    x = grid.x1d
    prof = np.exp(-x**2) * (1 + 0.5j * x)

    def ustar(t):
        return GridFunction(grid, np.exp(-2j * t) * np.cos(3 * t) * prof)

    def dustar(t):
        return GridFunction(grid, np.exp(-2j * t) * (-2j * np.cos(3 * t) - 3 * np.sin(3 * t)) * prof)

    f = manufactured_forcing(QUARTIC, ustar, dustar)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        sol = solve(QUARTIC, PropagatorConfig(dt=dt, tol=1e-13), ustar(0.0), 0.4, forcing=f)
        errs.append((sol.final - ustar(0.4)).norm())
    for a, b in zip(errs, errs[1:]):
        assert 2 ** (2 - 0.3) <= a / b <= 2 ** (2 + 0.3)


def test_strang_agrees_with_crank_nicolson():
    grid = GridSpec(1, 128, 4.0)
    u0 = wavepacket(grid, 0.3, 0.5, 2.0)
    a = solve(QUARTIC, PropagatorConfig(dt=1e-3), u0, 0.2).final
    b = solve(QUARTIC, PropagatorConfig("strang_split", dt=1e-3), u0, 0.2).final
    assert (a - b).norm() < 1e-3


def test_strang_refuses_curved_metrics_and_forcing():
    u0 = wavepacket(G, 0.0, 0.5)
    with pytest.raises(ValueError):
        step(make_spec("perturbed_flat", n=1), PropagatorConfig("strang_split"), u0, 0.0)
    with pytest.raises(ValueError):
        step(QUARTIC, PropagatorConfig("strang_split"), u0, 0.0, forcing=lambda t: u0)


def test_horizon_and_sign_guards():
    u0 = wavepacket(G, 0.0, 0.5)
    with pytest.raises(ValueError):
        solve(QUARTIC, PropagatorConfig(), u0, QUARTIC.T + 1.0)
    with pytest.raises(ValueError):
        solve(QUARTIC, PropagatorConfig(), u0, -1.0)


def test_harmonic_packet_follows_the_classical_orbit():
    # P = D^2 + x^2 moves <x> along x0 cos 2t + xi0 sin 2t; CN detunes the
    # frequency by O((E dt)^2), about 1e-5 here
    grid = GridSpec(1, 128, 8.0)
    spec = make_spec("harmonic", n=1)
    x0, xi0 = 1.0, 1.5
    sol = solve(spec, PropagatorConfig(dt=1e-3, stride=100), wavepacket(grid, x0, 1.0, xi0), 1.0)
    for t, u in zip(sol.times, sol.snapshots):
        mean = np.sum(grid.x1d * np.abs(u.values) ** 2) * grid.h
        assert mean == pytest.approx(x0 * np.cos(2 * t) + xi0 * np.sin(2 * t), abs=1e-4)


def test_rayleigh_quotient_is_real():
    grid = GridSpec(1, 64, 4.0)
    sol = solve(make_spec("perturbed_flat", n=1), PropagatorConfig(dt=1e-2), wavepacket(grid, 0.0, 0.5, 2.0), 0.1,
                check_every=2)
    assert len(sol.rayleigh_imag) == 5 and max(sol.rayleigh_imag) < 1e-12


def test_solver_failure_carries_the_partial_solution():
    grid = GridSpec(1, 256, 8.0)
    with pytest.raises(PropagationError) as err:
        solve(QUARTIC, PropagatorConfig(dt=0.1, tol=1e-14, max_iter=1), wavepacket(grid, 0.0, 0.5, 8.0), 0.5)
    assert err.value.partial is not None and err.value.residual > 1e-13


def test_manifest_and_written_run(tmp_path):
    grid = GridSpec(1, 64, 4.0)
    sol = solve(QUARTIC, PropagatorConfig(dt=0.03, stride=2), wavepacket(grid, 0.0, 0.5), 0.1)
    man = sol.manifest
    assert man["steps"] == 4 and man["config"]["dt"] == pytest.approx(0.025)
    assert man["stability_product"] == pytest.approx(0.025 * spectral_scale(QUARTIC, grid))
    assert len(man["spec_hash"]) == 16 and man["max_solver_residual"] < 1e-9
    sol.write(tmp_path)
    assert json.loads((tmp_path / "manifest.json").read_text())["steps"] == 4
    assert sorted(p.name for p in (tmp_path / "snapshots").iterdir()) == [f"snap_0000{i}.bin" for i in range(3)]
