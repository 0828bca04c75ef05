"""Phase-space points, symbols, and the problem data defining ``P``.

Conventions: positions and frequencies are arrays whose last axis has length
``n``; every symbol evaluator is vectorised over the leading axes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fitting import EstimateReport

ARITIES = ("x", "x,xi", "t,x", "t,x,xi")


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(x, xi)`` of the cotangent bundle."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if x.ndim != 1 or x.shape != xi.shape:
            raise ValueError(f"x and xi must be vectors of equal length, got {x.shape} and {xi.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("PhasePoint components must be finite")
        x.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self):
        return self.x.size

    def __iter__(self):
        yield self.x
        yield self.xi


def japanese_bracket(v):
    """``(1 + |v|^2)^(1/2)`` taken over the last axis; scalars are 1-vectors."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.sqrt(1.0 + v * v)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


def fd_step(z, order=1):
    """Per-axis centred-difference step: ``max(1e-5, 1e-5 |z|)``, widened for order 3."""
    h = np.maximum(1e-5, 1e-5 * np.abs(z))
    return h * 100.0 if order >= 3 else h


def _fd(f, z, orders, h):
    """Nested centred differences of ``f(z)`` for a multi-index ``orders``."""
    orders = list(orders)
    for i, k in enumerate(orders):
        if k > 0:
            break
    else:
        return f(z)
    sub = orders.copy()
    sub[i] -= 1
    e = np.zeros(z.shape[-1])
    e[i] = 1.0
    hi = h[..., i]
    zp = z + hi[..., None] * e
    zm = z - hi[..., None] * e
    return (_fd(f, zp, sub, h) - _fd(f, zm, sub, h)) / (2.0 * hi)


def fd_derivative(f, z, orders):
    """Mixed partial derivative of ``f`` at ``z`` (last axis = variables).

    Orders up to 2 use the plain step policy; order 3 uses a widened step with
    one Richardson extrapolation to cancel the leading truncation error.
    """
    z = np.asarray(z, dtype=float)
    total = int(sum(orders))
    h = fd_step(z, total)
    if total < 3:
        return _fd(f, z, orders, h)
    d1 = _fd(f, z, orders, h)
    d2 = _fd(f, z, orders, h / 2.0)
    return (4.0 * d2 - d1) / 3.0


class SymbolFn:
    """An evaluable symbol with derivative access.

    Parameters
    ----------
    func : callable
        Evaluator taking the arguments named by ``arity``.
    arity : str
        One of ``"x"``, ``"x,xi"``, ``"t,x"``, ``"t,x,xi"``.
    derivative : callable, optional
        ``derivative(alpha, beta, *args)`` returning ``d^beta_x d^alpha_xi``
        of the symbol, or ``None`` to fall back to finite differences.
    """

    def __init__(self, func: Callable, arity: str = "x,xi", derivative: Optional[Callable] = None, name: str = ""):
        if arity not in ARITIES:
            raise ValueError(f"unknown arity {arity!r}")
        self.func = func
        self.arity = arity
        self._derivative = derivative
        self.name = name or getattr(func, "__name__", "symbol")

    def __repr__(self):
        return f"SymbolFn({self.name}, arity={self.arity!r})"

    def __call__(self, *args):
        return self.func(*args)

    @property
    def has_xi(self):
        return "xi" in self.arity

    @property
    def has_t(self):
        return self.arity.startswith("t")

    def derivative(self, alpha, beta, *args):
        """``d^beta_x d^alpha_xi`` of the symbol at the given arguments."""
        alpha = tuple(int(a) for a in alpha)
        beta = tuple(int(b) for b in beta)
        if self._derivative is not None:
            val = self._derivative(alpha, beta, *args)
            if val is not None:
                return val
        if sum(alpha) and not self.has_xi:
            return np.zeros(np.shape(args[-1])[:-1])
        t = args[0] if self.has_t else None
        x = np.asarray(args[1] if self.has_t else args[0], dtype=float)
        n = x.shape[-1]
        if self.has_xi:
            xi = np.asarray(args[-1], dtype=float)
            z = np.concatenate([x, xi], axis=-1)

            def f(zz):
                return self.func(*((t,) if self.has_t else ()), zz[..., :n], zz[..., n:])

            orders = tuple(beta) + tuple(alpha)
        else:
            z = x

            def f(zz):
                return self.func(*((t,) if self.has_t else ()), zz)

            orders = tuple(beta)
        return fd_derivative(f, z, orders)


@dataclass(frozen=True)
class MetricField:
    """Inverse metric ``g^{jk}(x)`` with optional analytic gradient.

    ``value(x)`` returns shape ``(..., n, n)``; ``grad(x)`` returns
    ``(..., n, n, n)`` with the derivative index last.
    """

    value: Callable
    grad: Optional[Callable] = None
    name: str = "metric"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return self.grad(x)
        n = x.shape[-1]
        h = fd_step(x, 1)
        out = []
        for l in range(n):
            e = np.zeros(n)
            e[l] = 1.0
            hl = h[..., l][..., None, None]
            out.append((self.value(x + h[..., l:l + 1] * e) - self.value(x - h[..., l:l + 1] * e)) / (2 * hl))
        return np.stack(out, axis=-1)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Coefficients of ``P = sum (D_j - a_j) g^{jk} (D_k - a_k) + V``.

    ``potential(t, x)`` and ``magnetic(t, x)`` (shape ``(..., n)``) may be
    ``None`` for vanishing terms.
    """

    n: int
    m: float
    metric: MetricField
    potential: Optional[Callable] = None
    magnetic: Optional[Callable] = None
    T: float = 1.0
    delta: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension n must be 1 or 2 (3 allowed for symbol checks), got {self.n}")
        if not self.m >= 2:
            raise ValueError(f"growth exponent m must satisfy m >= 2 (structure assumption on V), got m={self.m}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if not self.delta > 0:
            raise ValueError(f"ellipticity constant must be positive, got {self.delta}")

    def V(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.potential is None:
            return np.zeros(x.shape[:-1])
        return self.potential(t, x)

    def A(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.magnetic is None:
            return np.zeros(x.shape)
        return self.magnetic(t, x)

    def validate(self, rng=None, samples=2000, radius=50.0):
        """Sampled checks of symmetry, reality, and ellipticity; returns dict of residuals."""
        rng = np.random.default_rng(0) if rng is None else rng
        x = rng.uniform(-radius, radius, size=(samples, self.n))
        xi = rng.normal(size=(samples, self.n))
        g = self.metric(x)
        sym = float(np.max(np.abs(g - np.swapaxes(g, -1, -2))))
        p = eval_p(self, x, xi)
        ell = float(np.min(p - self.delta * np.sum(xi * xi, axis=-1)))
        vals = [g, self.V(0.0, x), self.A(0.0, x)]
        real = all(np.isrealobj(v) for v in vals)
        return {"symmetry": sym, "ellipticity_margin": ell, "real": real,
                "ok": sym <= 1e-12 and ell >= -1e-12 and real}


def _check_dims(spec, x, xi):
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.shape[-1] != spec.n or xi.shape[-1] != spec.n:
        raise ValueError(f"phase point dimension {x.shape[-1]}/{xi.shape[-1]} does not match spec.n={spec.n}")
    return x, xi


def eval_p(spec, x, xi=None):
    """Principal symbol ``p(x, xi) = g^{jk}(x) xi_j xi_k``.

    Accepts either ``(x, xi)`` arrays or a single :class:`PhasePoint`.
    """
    if isinstance(x, PhasePoint):
        x, xi = x
    x, xi = _check_dims(spec, x, xi)
    g = spec.metric(x)
    return np.einsum("...jk,...j,...k->...", g, xi, xi)


def hamilton_field(spec, x, xi):
    """Return ``(dp/dxi, -dp/dx)``, the bicharacteristic velocity."""
    g = spec.metric(x)
    dg = spec.metric.gradient(x)
    xdot = 2.0 * np.einsum("...jk,...k->...j", g, xi)
    xidot = -np.einsum("...jkl,...j,...k->...l", dg, xi, xi)
    return xdot, xidot


def multi_indices(n, order):
    """All ``(alpha, beta)`` pairs in ``N^n x N^n`` with ``|alpha| + |beta| <= order``."""
    out = []
    for total in range(order + 1):
        for combo in itertools.product(range(total + 1), repeat=2 * n):
            if sum(combo) == total:
                out.append((combo[n:], combo[:n]))
    return out


def _shell_samples(n, radii, rng, count):
    """Random vectors with norms in the dyadic shells ``[r, 2r)``."""
    out = []
    for r in radii:
        d = rng.normal(size=(count, n))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        rad = r * (1.0 + rng.uniform(size=(count, 1)))
        out.append(d * rad)
    return np.stack(out)  # (len(radii), count, n)


def seminorm_check(q, weight, order=2, n=1, x_radii=None, xi_radii=None, rng=None, count=24, growth=2.0):
    """Empirical ``S(M, g)`` seminorms of a symbol over dyadic shells.

    For each ``(alpha, beta)`` with ``|alpha| + |beta| <= order`` the ratio
    ``|d^beta_x d^alpha_xi q| / (M <x>^-|beta| <xi>^-|alpha|)`` is maximised in
    each dyadic ``|x|`` shell (over all ``|xi|`` shells) and in each ``|xi|``
    shell.  The check fails when one of these shell constants grows by more
    than ``growth`` between consecutive shells.

    Parameters
    ----------
    q : SymbolFn
        Symbol of arity ``"x,xi"`` (or ``"x"``).
    weight : callable
        ``M(x, xi)``.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    x_radii = np.asarray(x_radii if x_radii is not None else 2.0 ** np.arange(0, 8), dtype=float)
    xi_radii = np.asarray(xi_radii if xi_radii is not None else 2.0 ** np.arange(0, 8), dtype=float)
    X = _shell_samples(n, x_radii, rng, count)  # (Rx, c, n)
    XI = _shell_samples(n, xi_radii, rng, count)  # (Rxi, c, n)
    # full product grid: (Rx, Rxi, c, n) pairing sample i of each shell
    x = np.broadcast_to(X[:, None], (len(x_radii), len(xi_radii), count, n))
    xi = np.broadcast_to(XI[None, :], (len(x_radii), len(xi_radii), count, n))
    M = np.asarray(weight(x, xi), dtype=float)
    bx = japanese_bracket(x)
    bxi = japanese_bracket(xi)
    idx = multi_indices(n, order)
    if not q.has_xi:
        idx = [(a, b) for a, b in idx if sum(a) == 0]

    cols = {"alpha": [], "beta": [], "shell_axis": [], "shell_radius": [], "constant": []}
    worst = 0.0
    failed = []
    for alpha, beta in idx:
        args = (x, xi) if q.has_xi else (x,)
        d = np.asarray(q.derivative(alpha, beta, *args), dtype=float)
        if not np.all(np.isfinite(d)):
            raise FloatingPointError(f"non-finite derivative for alpha={alpha}, beta={beta}")
        ratio = np.abs(d) / (M * bx ** (-sum(beta)) * bxi ** (-sum(alpha)))
        per_x = ratio.max(axis=(1, 2))
        per_xi = ratio.max(axis=(0, 2))
        tiny = 1e-8 * max(float(ratio.max()), 1e-300)
        for axis, consts, radii in (("x", per_x, x_radii), ("xi", per_xi, xi_radii)):
            for r, c in zip(radii, consts):
                cols["alpha"].append(str(tuple(alpha)))
                cols["beta"].append(str(tuple(beta)))
                cols["shell_axis"].append(axis)
                cols["shell_radius"].append(float(r))
                cols["constant"].append(float(c))
            grow = (consts[1:] > growth * consts[:-1]) & (consts[1:] > tiny)
            if np.any(grow):
                failed.append((tuple(alpha), tuple(beta), axis))
        worst = max(worst, float(ratio.max()))
    rep = EstimateReport(
        experiment=f"seminorm:{q.name}",
        columns={k: np.asarray(v) for k, v in cols.items()},
        constants={"max_constant": worst, "growth_threshold": growth, "order": order},
        passed=not failed,
        environment={"x_radii": x_radii, "xi_radii": xi_radii, "count": count},
    )
    if failed:
        rep.notes.append(f"unbounded growth in {failed}")
    return rep


def metric_decay_check(spec, radii=None, rng=None, count=64):
    """Trend check of ``<x> |grad g^{jk}(x)|`` across dyadic radii.

    The limit ``grad g = o(|x|^-1)`` cannot be certified from samples; we
    report the per-shell maxima and pass when the value over the two outermost
    shells is non-increasing.
    """
    rng = np.random.default_rng(7) if rng is None else rng
    radii = np.asarray(radii if radii is not None else 2.0 ** np.arange(0, 12), dtype=float)
    X = _shell_samples(spec.n, radii, rng, count)
    dg = spec.metric.gradient(X)
    val = japanese_bracket(X) * np.sqrt(np.sum(dg * dg, axis=(-3, -2, -1)))
    per = val.max(axis=1)
    passed = bool(per[-1] <= per[-2] * (1 + 1e-12) + 1e-300)
    return EstimateReport(
        experiment=f"metric_decay:{spec.name}",
        columns={"radius": radii, "bracket_x_grad_g": per},
        constants={"outer_ratio": float(per[-1] / per[-2]) if per[-2] > 0 else 0.0},
        passed=passed,
    )
