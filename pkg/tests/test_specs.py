import numpy as np
import pytest

from smoothlab.flow import StepPolicy, flow
from smoothlab.specs import (
    build_checkerboard_potential,
    checkerboard_potential,
    make_spec,
    parse_spec_name,
    partition_residual,
    trapping_metric,
)
from smoothlab.symbols import HamiltonianSpec, eval_p


def test_dyadic_partition_sums_to_one(rng):
    x = rng.normal(size=(2000, 2)) * np.exp(rng.uniform(-3, 8, size=(2000, 1)))
    assert np.max(np.abs(partition_residual(x))) < 1e-12


def test_checkerboard_bounds(rng):
    V = checkerboard_potential(4)
    x = rng.normal(size=(4000, 2)) * np.exp(rng.uniform(-2, 6, size=(4000, 1)))
    r2 = np.sum(x * x, axis=-1)
    v = V(0.0, x)
    assert np.all(v >= -r2 - 1e-9)
    assert np.all(v <= r2**2 + 1e-9)
    # takes values near -|x|^2 arbitrarily far out, so no lower bound c|x|^m
    odd = np.array([[0.95 * 2.0**k, 0.0] for k in (3, 5, 7)])
    assert np.allclose(V(0.0, odd), -np.sum(odd**2, axis=-1))
    assert build_checkerboard_potential(4).arity == "t,x"
    with pytest.raises(ValueError):
        checkerboard_potential(1.5)


@pytest.mark.parametrize("name,base,args", [("flat", "flat", []), ("checkerboard(6)", "checkerboard", [6.0]),
                                            ("perturbed_flat(0.2, sigma0=2)", "perturbed_flat", [0.2, 2.0])])
def test_name_parsing(name, base, args):
    assert parse_spec_name(name) == (base, args)


def test_make_spec_variants():
    s = make_spec("perturbed_flat(0.2, 2)", n=2)
    assert s.params["eps"] == 0.2 and s.params["sigma0"] == 2.0
    q = make_spec("quartic", n=1)
    assert q.m == 4 and q.V(0.0, np.array([[2.0]]))[0] == 16.0
    assert make_spec("flat", potential="power", m=3).V(0.0, np.array([[2.0]]))[0] == pytest.approx(8.0)
    with pytest.raises(ValueError):
        make_spec("nonsense")
    with pytest.raises(ValueError):
        make_spec("flat(")


def test_trapping_metric_has_circular_geodesic():
    spec = HamiltonianSpec(n=2, m=2, metric=trapping_metric(2, r0=1.0), name="trap")
    x0 = np.array([1.0, 0.0])
    d = np.array([0.0, 1.0])
    xi0 = d / np.sqrt(eval_p(spec, x0, d))
    tr = flow(spec, x0, 6.0, StepPolicy(dt=1e-2), xi0=xi0)
    r = np.linalg.norm(tr.x, axis=-1)
    assert np.max(np.abs(r - 1.0)) < 1e-5
