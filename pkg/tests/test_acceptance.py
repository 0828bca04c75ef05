"""End-to-end acceptance checks, one test per criterion.

Each test prints (and records for the terminal summary) a single
``criterion k: PASS|FAIL`` line with the measured quantities, then asserts.
"""

import json
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from smoothlab.cli import main
from smoothlab.escape import EscapeFunction, choose_scales, eval_a0, escape_samples, verify_escape
from smoothlab.flow import StepPolicy, flow, flow_to, sample_energy_shell
from smoothlab.harness import wavepacket
from smoothlab.multiplier import (
    AngularMultiplier,
    Hp_A_jk,
    SmoothingMultiplier,
    lagrange_identity_check,
    log_samples,
    verify_angular_symbol_bound,
    verify_smoothing_symbol_bound,
)
from smoothlab.propagator import PropagatorConfig, manufactured_forcing, solve
from smoothlab.specs import make_spec
from smoothlab.weyl import (
    AliasingWarning,
    GridFunction,
    GridSpec,
    apply_P,
    commutator_residual,
    dense_D,
    dense_P,
    is_hermitian,
    weyl_quantize_dense,
)


def record(k, ok, detail, started):
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.perf_counter() - started:.1f} s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def test_criterion_01_lagrange_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = np.inf
    for n in (2, 3):
        scale = np.exp(rng.uniform(-3, 3, size=(10**6, 1)))
        x = rng.normal(size=(10**6, n)) * scale
        xi = rng.normal(size=(10**6, n)) * scale[::-1]
        lhs, rhs = lagrange_identity_check(x, xi)
        worst = min(worst, float(np.min(lhs - rhs)) / float(np.max(np.maximum(lhs, rhs))))
    ok = worst >= -1e-12 and time.perf_counter() - t0 < 10
    assert record(1, ok, f"min (lhs - rhs)/max scale = {worst:.2e} over 2 x 10^6 pairs", t0)


def test_criterion_02_flow():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    flat = make_spec("flat", n=2)
    x0, xi0 = sample_energy_shell(flat, 20, 3.0, rng)
    tr = flow(flat, x0, 10.0, StepPolicy(dt=1e-2, normalized=False), xi0=xi0)
    line_err = float(np.max(np.abs(tr.x - (x0 + 2.0 * tr.times[:, None, None] * xi0))))
    pert = make_spec("perturbed_flat", n=2)
    x1, xi1 = sample_energy_shell(pert, 20, 3.0, rng)
    drift = flow(pert, x1, 10.0, StepPolicy(dt=1e-2), xi0=xi1).energy_drift
    ref = flow_to(pert, x1, xi1, 1.0, order=4, substeps=2000)[0]
    errs = [np.max(np.abs(flow_to(pert, x1, xi1, 1.0, order=2, substeps=k)[0] - ref)) for k in (50, 100, 200)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = line_err <= 1e-9 and drift < 1e-8 and all(3.5 <= r <= 4.5 for r in ratios)
    assert record(2, ok, f"straight-line error {line_err:.1e}, p drift {drift:.1e}, "
                         f"halving ratios {ratios[0]:.3f}/{ratios[1]:.3f}", t0)


def test_criterion_03_escape_function():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("flat", "perturbed_flat"):
        spec = make_spec(name, n=2)
        R, M = choose_scales(spec, np.random.default_rng(0))
        esc = EscapeFunction(spec, R=R, M=M)
        x, xi = escape_samples(spec, 1000, 3 * M, np.random.default_rng(1))
        rep = verify_escape(esc, x, xi)
        far_x, far_xi = escape_samples(spec, 1000, 6 * M, np.random.default_rng(2))
        far = np.linalg.norm(far_x, axis=-1) >= 2 * M
        exact = bool(np.array_equal(esc(far_x[far], far_xi[far]), eval_a0(far_x[far], far_xi[far])))
        c = rep.constants
        ok &= rep.passed and c["C2"] > 0 and c["usable_fraction"] >= 0.95 and exact
        parts.append(f"{name}: M={M:g} C2={c['C2']:.3f} usable={c['usable_fraction']:.3f} a=a0 far out: {exact}")
    ok &= time.perf_counter() - t0 < 300
    assert record(3, ok, "; ".join(parts), t0)


def test_criterion_04_multiplier_inequality():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, m in (("flat", 2), ("perturbed_flat", 2), ("flat", 4), ("perturbed_flat", 4)):
        kw = {"potential": "quartic", "m": 4} if m == 4 else {}
        spec = make_spec(name, n=2, **kw)
        R, M = choose_scales(spec, np.random.default_rng(0))
        mult = SmoothingMultiplier(EscapeFunction(spec, R=R, M=M))
        x, xi = log_samples(2, 10**4, spec.m, np.random.default_rng(2))
        rep = verify_smoothing_symbol_bound(mult, x, xi)
        c = rep.constants
        good = rep.passed and c["max_relative_discrepancy"] < 1e-4
        ok &= good
        parts.append(f"{name} m={m}: C={c['C']:.3g} C'={c['Cprime']:.3g} (budget {c['budget_Cprime']:.3g}) "
                     f"sup|A6|={c['A6_sup']:.3g} decomposition {c['max_relative_discrepancy']:.1e}")
    ok &= time.perf_counter() - t0 < 300
    assert record(4, ok, "; ".join(parts), t0)


def test_criterion_05_angular_multiplier():
    t0 = time.perf_counter()
    spec = make_spec("perturbed_flat(0.1, 1)", n=2)
    R, M = choose_scales(spec, np.random.default_rng(0))
    x, xi = log_samples(2, 10**4, 2, np.random.default_rng(3))
    rep = verify_angular_symbol_bound(AngularMultiplier(EscapeFunction(spec, R=R, M=M)), x, xi, sigma0=1.0)
    c = rep.constants
    flat = make_spec("flat", n=2)
    rng = np.random.default_rng(4)
    fx, fxi = rng.normal(size=(10**4, 2)) * 30, rng.normal(size=(10**4, 2)) * 30
    flat_zero = bool(np.all(Hp_A_jk(flat, fx, fxi, 0, 1) == 0.0) and np.all(Hp_A_jk(flat, fx, fxi, 1, 0) == 0.0))
    ok = rep.passed and c["C0"] > 0 and flat_zero and c["max_relative_discrepancy"] < 1e-4 \
        and time.perf_counter() - t0 < 300
    assert record(5, ok, f"C0={c['C0']:.3f}, flat H_p A_jk identically 0: {flat_zero}, "
                         f"I1+I2 vs direct {c['max_relative_discrepancy']:.1e}", t0)


def test_criterion_06_quantization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    apply_err = 0.0
    for name in ("harmonic", "quartic", "perturbed_flat"):
        spec = make_spec(name, n=1)
        grid = GridSpec(1, 128, 4.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            P = dense_P(spec, grid, 0.0)
            for _ in range(3):
                v = rng.normal(size=128) + 1j * rng.normal(size=128)
                ref = P @ v
                got = apply_P(spec, 0.0, GridFunction(grid, v)).values
                apply_err = max(apply_err, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    grid = GridSpec(1, 128, 8.0)
    x = grid.x1d
    g = np.exp(-x**2 / 2)
    D2 = dense_D(grid) @ dense_D(grid)
    Kxx = weyl_quantize_dense(lambda X, XI: X[..., 0] ** 2, grid)
    Kxxi = weyl_quantize_dense(lambda X, XI: X[..., 0] * XI[..., 0], grid)
    comm = max(float(np.max(np.abs((D2 @ Kxx - Kxx @ D2) @ g + 2 * g - 4 * x * x * g))),
               float(np.max(np.abs((D2 @ Kxxi - Kxxi @ D2) @ g + 2j * (D2 @ g)))))
    herm = all(is_hermitian(weyl_quantize_dense(q, grid, collar=True, oversample=4), 1e-10) for q in (
        lambda X, XI: np.sin(X[..., 0]) * XI[..., 0] + X[..., 0] ** 2,
        lambda X, XI: X[..., 0] * XI[..., 0] / np.sqrt(1 + XI[..., 0] ** 2)))
    spec = make_spec("quartic", n=1)
    R, M = choose_scales(spec, np.random.default_rng(0))
    mult = SmoothingMultiplier(EscapeFunction(spec, R=R, M=M))
    norms = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        for N in (64, 128, 256):
            norms.append(commutator_residual(spec, mult, GridSpec(1, N, 4.0)).norm)
    growth = max(norms[1] / norms[0], norms[2] / norms[1])
    ok = apply_err < 1e-10 and comm < 1e-8 and herm and growth < 1.5 and time.perf_counter() - t0 < 180
    assert record(6, ok, f"apply_P vs dense {apply_err:.1e}, quadratic commutators {comm:.1e}, "
                         f"Hermitian: {herm}, residual norms {', '.join(f'{v:.3g}' for v in norms)} "
                         f"(growth {growth:.2f}x)", t0)


def test_criterion_07_propagator():
    t0 = time.perf_counter()
    spec = make_spec("quartic", n=1)
    grid = GridSpec(1, 128, 4.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        sol = solve(spec, PropagatorConfig(dt=1e-3, stride=1000), wavepacket(grid, 0.5, 0.5, 4.0), 1.0)
        drift = max(abs(v - 1.0) for v in sol.norms)
        x = grid.x1d
        prof = np.exp(-x**2) * (1 + 0.5j * x)

        def ustar(t):
            return GridFunction(grid, np.exp(-2j * t) * np.cos(3 * t) * prof)

        def dustar(t):
            return GridFunction(grid, np.exp(-2j * t) * (-2j * np.cos(3 * t) - 3 * np.sin(3 * t)) * prof)

        f = manufactured_forcing(spec, ustar, dustar)
        errs = [(solve(spec, PropagatorConfig(dt=dt, tol=1e-13), ustar(0.0), 0.4, forcing=f).final - ustar(0.4)).norm()
                for dt in (0.02, 0.01, 0.005)]
    orders = [float(np.log2(a / b)) for a, b in zip(errs, errs[1:])]
    ok = len(sol.norms) == 1001 and drift < 1e-6 and all(abs(o - 2) <= 0.3 for o in orders) \
        and time.perf_counter() - t0 < 180
    assert record(7, ok, f"norm drift over 1000 steps {drift:.1e}, observed orders "
                         f"{orders[0]:.3f}/{orders[1]:.3f}", t0)


WEIGHTED_INI = """[experiment]
kind = smoothing-thm1
seed = 0

[spec]
spec = quartic
n = 1
T = 1.0

[grid]
N = 256
L = 8

[propagator]
dt = 2.5e-4
stride = 40

[multiplier]
nu = 0.1
"""

ANGULAR_INI = """[experiment]
kind = smoothing-thm2
seed = 0

[spec]
spec = perturbed_flat
potential = quartic
m = 4
n = 2
T = 1.0

[grid]
N = 128
L = 6

[propagator]
dt = 2e-3
stride = 25

[ensemble]
gaussians = 4
omegas = 4, 8
directions = 3
random_fields = 2
forced = true

[multiplier]
nu = 0.1
"""


def _run(tmp, name, text, outdir):
    ini = tmp / f"{name}.ini"
    ini.write_text(text)
    t0 = time.perf_counter()
    code = main(["run", str(ini), "--outdir", str(tmp / outdir)])
    (path,) = list((tmp / outdir / ("smoothing-thm1" if "thm1" in text else "smoothing-thm2")).iterdir())
    return code, path, time.perf_counter() - t0


@pytest.fixture(scope="module")
def weighted_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("weighted")
    return tmp, _run(tmp, "weighted", WEIGHTED_INI, "first")


def test_criterion_08_weighted_smoothing(weighted_run):
    t0 = time.perf_counter()
    _, (code, path, elapsed) = weighted_run
    rep = json.loads((path / "summary.json").read_text())["reports"][0]
    c = rep["constants"]
    strata = c["C_by_omega"]
    ok = code == 0 and rep["passed"] and np.isfinite(float(c["C_emp"])) and float(c["flatness"]) < 2 \
        and float(c["control_inflation"]) >= 2 and elapsed < 1200
    assert record(8, ok, f"C_emp={float(c['C_emp']):.3f}, C(8)={strata['8']:.3f} C(16)={strata['16']:.3f} "
                         f"C(32)={strata['32']:.3f}, flatness {float(c['flatness']):.3f}, "
                         f"control inflation {float(c['control_inflation']):.2f}x", t0 - elapsed)


def test_criterion_09_angular_smoothing(tmp_path):
    t0 = time.perf_counter()
    code, path, elapsed = _run(tmp_path, "angular", ANGULAR_INI, "out")
    rep = json.loads((path / "summary.json").read_text())["reports"][0]
    c = rep["constants"]
    header = (path / "report.csv").read_text().splitlines()[0].split(",")
    rows = [line.split(",") for line in (path / "report.csv").read_text().splitlines()[1:]]
    lhs = np.array([float(r[header.index("lhs")]) for r in rows])
    both = "rhs_nu" in header and "rhs_sigma0" in header
    ok = code == 0 and rep["passed"] and bool(np.all(np.isfinite(lhs))) and both \
        and np.isfinite(float(c["C_emp_nu"])) and np.isfinite(float(c["C_emp_sigma0"])) \
        and c["forced_members"] == 1 and elapsed < 2700
    assert record(9, ok, f"{len(rows)} members, C_emp (nu weight)={float(c['C_emp_nu']):.3f}, "
                         f"C_emp (sigma0 weight)={float(c['C_emp_sigma0']):.3f}, "
                         f"max angular/dominating ratio {float(c['max_lhs_ratio']):.3f}", t0)


def test_criterion_10_determinism(weighted_run):
    t0 = time.perf_counter()
    tmp, (_, first, _) = weighted_run
    _, second, _ = _run(tmp, "weighted", WEIGHTED_INI, "second")
    same = (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()
    assert record(10, same, f"report.csv byte-identical across reruns: {same}", t0)
