"""Multiplier symbols for the smoothing estimates and their Hamiltonian derivatives.

Two constructions are provided.  ``SmoothingMultiplier`` switches between the
odd and even parts of the escape function through ``psi0(theta)`` and
``psi1(theta)``; its derivative along the flow splits into six terms
``A1..A6``.  ``AngularMultiplier`` normalises the escape function by
``D = 1 + a^2 + sum A_jk^2`` and splits into ``I1 + I2``.  Both totals are
checked against direct differencing of ``lambda`` along the flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cutoffs import CutoffFamily
from .escape import EscapeFunction, hamiltonian_derivative
from .fitting import EstimateReport, fit_lower_bound
from .symbols import eval_p, hamilton_field, japanese_bracket

# flow-time step of the direct differencing oracle; the psi switches make
# lambda steep; at 1e-3 the 4th-order stencil error reaches 1e-3 relative
DIRECT_STEP = 6.25e-5

# ------------------------------------------------------------- angular symbols


def A_jk(x, xi, j, k):
    """``(x_j xi_k - x_k xi_j) / <xi>``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return (x[..., j] * xi[..., k] - x[..., k] * xi[..., j]) / japanese_bracket(xi)


def l_jk(x, xi, j, k):
    """``(x_j xi_k - x_k xi_j) / (<x> <xi>)``."""
    return A_jk(x, xi, j, k) / japanese_bracket(x)


def A_squared_sum(x, xi):
    """``sum_{j,k} A_jk^2`` over all ordered pairs."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    total = np.zeros(x.shape[:-1])
    for j in range(n):
        for k in range(n):
            if j != k:
                total = total + A_jk(x, xi, j, k) ** 2
    return total


def Hp_A_jk(spec, x, xi, j, k):
    """``{p, A_jk}`` from the Hamilton field; vanishes exactly for the flat metric."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xd, xid = hamilton_field(spec, x, xi)
    bxi = japanese_bracket(xi)
    num = (xd[..., j] * xi[..., k] - xd[..., k] * xi[..., j]) + (x[..., j] * xid[..., k] - x[..., k] * xid[..., j])
    L = x[..., j] * xi[..., k] - x[..., k] * xi[..., j]
    return num / bxi - L * np.sum(xi * xid, axis=-1) / bxi**3


def lagrange_identity_check(x, xi):
    """Return ``((x.xi)^2 + sum_{j,k} (x_j xi_k - x_k xi_j)^2, |x|^2 |xi|^2)``.

    The double sum counts each pair twice, so ``lhs - rhs`` equals the single
    sum and is nonnegative.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.shape != xi.shape:
        raise ValueError("x and xi must have equal shapes")
    n = x.shape[-1]
    cross = np.zeros(x.shape[:-1])
    for j in range(n):
        for k in range(n):
            cross = cross + (x[..., j] * xi[..., k] - x[..., k] * xi[..., j]) ** 2
    lhs = np.sum(x * xi, axis=-1) ** 2 + cross
    rhs = np.sum(x * x, axis=-1) * np.sum(xi * xi, axis=-1)
    return lhs, rhs


# ---------------------------------------------------------------- shared parts


def _scalar_bracket(a):
    """Elementwise ``(1 + a^2)^(1/2)`` for scalar-valued symbols."""
    a = np.asarray(a, dtype=float)
    return np.sqrt(1.0 + a * a)


def _bracket_x_power_rate(x, xdot, s):
    """``H_p <x>^s = s <x>^(s-2) x.xdot``."""
    return s * japanese_bracket(x) ** (s - 2.0) * np.sum(x * xdot, axis=-1)


def eval_theta_r(esc, x, xi):
    """``(theta, r) = (a/<x>, <x>^(m/2)/sqrt(p))``; raises where ``p = 0``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p = eval_p(esc.spec, x, xi)
    if np.any(p <= 0):
        raise ValueError("r is undefined where p = 0; multiply by chi(r) = 0 first")
    theta = esc(x, xi) / japanese_bracket(x)
    r = japanese_bracket(x) ** (esc.spec.m / 2.0) / np.sqrt(p)
    return theta, r


@dataclass
class _Support:
    """Quantities shared by both multipliers on ``supp chi(r)``."""

    sel: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    p: np.ndarray
    bx: np.ndarray
    r: np.ndarray
    chi: np.ndarray
    dchi: np.ndarray
    pw: np.ndarray
    xdot: np.ndarray
    flags: np.ndarray


def _support(esc, m, chi, dchi, x, xi):
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    x, xi = np.broadcast_arrays(x, xi)
    p = eval_p(esc.spec, x, xi)
    bx = japanese_bracket(x)
    with np.errstate(divide="ignore"):
        r = np.where(p > 0, bx ** (m / 2.0) / np.sqrt(np.where(p > 0, p, 1.0)), np.inf)
    c = np.where(np.isfinite(r), chi(np.where(np.isfinite(r), r, 0.0)), 0.0)
    sel = c > 0
    xs, xis = x[sel], xi[sel]
    ps = p[sel]
    xdot, _ = hamilton_field(esc.spec, xs, xis)
    return _Support(sel, xs, xis, ps, bx[sel], r[sel], c[sel], dchi(r[sel]),
                    ps ** (1.0 / m - 0.5), xdot, np.zeros(ps.shape, dtype=bool))


def _Hp_chi_r(sup, m):
    """``H_p chi(r) = chi'(r) H_p <x>^(m/2) / sqrt(p)``."""
    return sup.dchi * _bracket_x_power_rate(sup.x, sup.xdot, m / 2.0) / np.sqrt(sup.p)


def _scatter(shape, sel, values):
    out = np.zeros(shape)
    out[sel] = values
    return out


# ------------------------------------------------------------- weighted smoothing multiplier


@dataclass
class SmoothingMultiplier:
    """``-lambda = (theta psi0(theta) - (M0 - <a>^-nu) psi1(theta)) p^(1/m - 1/2) chi(r)``."""

    esc: EscapeFunction
    cutoffs: CutoffFamily = field(default_factory=CutoffFamily)
    nu: float = 0.1
    M0: float = 4.0
    m: float = None

    def __post_init__(self):
        if self.m is None:
            self.m = self.esc.spec.m
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.M0 < 2:
            raise ValueError("M0 must be at least 2")

    @property
    def spec(self):
        return self.esc.spec

    def _sup(self, x, xi):
        return _support(self.esc, self.m, CutoffFamily.chi_unit, CutoffFamily.dchi_unit, x, xi)

    def _bracket_term(self, a, bx):
        cf = self.cutoffs
        theta = a / bx
        return theta * cf.psi0(theta) - (self.M0 - _scalar_bracket(a) ** (-self.nu)) * cf.psi1(theta)

    def __call__(self, x, xi):
        """``lambda(x, xi)``; zero off ``supp chi(r)`` without evaluating ``r``-powers there."""
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        sup = self._sup(x, xi)
        if not np.any(sup.sel):
            return np.zeros(x.shape[:-1])
        a = self.esc(sup.x, sup.xi)
        neg = self._bracket_term(a, sup.bx) * sup.pw * sup.chi
        return _scatter(x.shape[:-1], sup.sel, -neg)

    def decompose(self, x, xi):
        """Return ``{"A1": ..., ..., "A6": ..., "total": ...}`` with ``total = -H_p lambda``."""
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        shape = x.shape[:-1]
        sup = self._sup(x, xi)
        keys = ("A1", "A2", "A3", "A4", "A5", "A6")
        if not np.any(sup.sel):
            out = {k: np.zeros(shape) for k in keys}
            out["total"] = np.zeros(shape)
            out["flags"] = np.zeros(shape, dtype=bool)
            return out
        cf, nu, M0 = self.cutoffs, self.nu, self.M0
        a, Hpa, flags = self.esc.values_and_Hp(sup.x, sup.xi)
        bx, pw, chi = sup.bx, sup.pw, sup.chi
        theta = a / bx
        Hp_bx_inv = _bracket_x_power_rate(sup.x, sup.xdot, -1.0)
        Hp_theta = Hpa / bx + a * Hp_bx_inv
        ba = _scalar_bracket(a)
        Hp_ba_nu = -nu * ba ** (-2.0 - nu) * a * Hpa
        terms = {
            "A1": Hp_bx_inv * pw * a * cf.psi0(theta) * chi,
            "A2": Hpa / bx * pw * cf.psi0(theta) * chi,
            "A3": pw * a / bx * cf.dpsi0(theta) * Hp_theta * chi,
            "A4": pw * Hp_ba_nu * cf.psi1(theta) * chi,
            "A5": -pw * (M0 - ba ** (-nu)) * Hp_theta * cf.dpsi1(theta) * chi,
            "A6": self._bracket_term(a, bx) * pw * _Hp_chi_r(sup, self.m),
        }
        out = {k: _scatter(shape, sup.sel, v) for k, v in terms.items()}
        out["total"] = sum(out[k] for k in keys)
        out["flags"] = _scatter(shape, sup.sel, flags).astype(bool)
        return out

    def Hp_direct(self, x, xi, h=DIRECT_STEP):
        """``H_p lambda`` by differencing ``lambda`` along the flow."""
        return hamiltonian_derivative(self.spec, self.__call__, x, xi, h)

    def weight(self, x, xi):
        """``<x>^(-1-nu) (|xi|^2 + |x|^m)^(1/m)``."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return japanese_bracket(x) ** (-1.0 - self.nu) * (
            np.sum(xi * xi, axis=-1) + np.sum(x * x, axis=-1) ** (self.m / 2.0)) ** (1.0 / self.m)

    def sup_bound(self, x, xi):
        """Pointwise bound ``(2 eps + M0) p^(1/m - 1/2) chi(r)``."""
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        sup = self._sup(x, xi)
        return _scatter(x.shape[:-1], sup.sel, (2 * self.cutoffs.eps + self.M0) * sup.pw)


# ------------------------------------------------------------- angular multiplier


@dataclass
class AngularMultiplier:
    """``-lambda = a D^(-1/2) p^(1/m - 1/2) chi(r)`` with ``D = 1 + a^2 + sum A_jk^2``.

    ``chi`` equals 1 on ``[0, 1]`` and 0 on ``[2, inf)``.
    """

    esc: EscapeFunction
    m: float = None

    def __post_init__(self):
        if self.m is None:
            self.m = self.esc.spec.m

    @property
    def spec(self):
        return self.esc.spec

    def _sup(self, x, xi):
        return _support(self.esc, self.m, CutoffFamily.theta_cut, CutoffFamily.dtheta_cut, x, xi)

    def eval_D(self, x, xi, a=None):
        a = self.esc(x, xi) if a is None else a
        return 1.0 + a * a + A_squared_sum(x, xi)

    def __call__(self, x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        sup = self._sup(x, xi)
        if not np.any(sup.sel):
            return np.zeros(x.shape[:-1])
        a = self.esc(sup.x, sup.xi)
        D = self.eval_D(sup.x, sup.xi, a)
        return _scatter(x.shape[:-1], sup.sel, -a / np.sqrt(D) * sup.pw * sup.chi)

    def decompose(self, x, xi):
        """Return ``I1``, ``I2``, their ``total = -H_p lambda`` and the ingredients."""
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        shape = x.shape[:-1]
        n = x.shape[-1]
        sup = self._sup(x, xi)
        names = ("I1", "I2", "total", "D", "sumA2", "sum_A_HpA")
        if not np.any(sup.sel):
            out = {k: np.zeros(shape) for k in names}
            out["flags"] = np.zeros(shape, dtype=bool)
            return out
        a, Hpa, flags = self.esc.values_and_Hp(sup.x, sup.xi)
        sumA2 = A_squared_sum(sup.x, sup.xi)
        sAH = np.zeros_like(a)
        for j in range(n):
            for k in range(n):
                if j != k:
                    sAH += A_jk(sup.x, sup.xi, j, k) * Hp_A_jk(self.spec, sup.x, sup.xi, j, k)
        D = 1.0 + a * a + sumA2
        HpD = 2.0 * a * Hpa + 2.0 * sAH
        I1 = D ** (-1.5) * (D * Hpa - 0.5 * a * HpD) * sup.pw * sup.chi
        I2 = sup.pw * a * D ** (-0.5) * _Hp_chi_r(sup, self.m)
        vals = {"I1": I1, "I2": I2, "total": I1 + I2, "D": D, "sumA2": sumA2, "sum_A_HpA": sAH}
        out = {k: _scatter(shape, sup.sel, v) for k, v in vals.items()}
        out["flags"] = _scatter(shape, sup.sel, flags).astype(bool)
        out["support"] = sup.sel
        return out

    def Hp_direct(self, x, xi, h=DIRECT_STEP):
        return hamiltonian_derivative(self.spec, self.__call__, x, xi, h)


# ------------------------------------------------------------------- sampling


def log_samples(n, count, m, rng, x_decades=(-2.0, 2.0), rel_xi_decades=(-1.0, 4.0)):
    """Log-spaced sample of phase space straddling ``supp chi(r)``.

    ``|x|`` is log-uniform over ``x_decades``; ``|xi| = <x>^(m/2) 10^u`` with
    ``u`` uniform over ``rel_xi_decades``; directions are uniform.
    """
    ux = rng.normal(size=(count, n))
    ux /= np.linalg.norm(ux, axis=-1, keepdims=True)
    ud = rng.normal(size=(count, n))
    ud /= np.linalg.norm(ud, axis=-1, keepdims=True)
    rx = 10.0 ** rng.uniform(*x_decades, size=(count, 1))
    x = ux * rx
    u = rng.uniform(*rel_xi_decades, size=(count, 1))
    xi = ud * japanese_bracket(x)[:, None] ** (m / 2.0) * 10.0**u
    return x, xi


def relative_discrepancy(a, b, floor=1.0):
    """``|a - b| / max(|b|, floor)`` elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


# ---------------------------------------------------------- inequality checks


def _coords(x, xi):
    return {**{f"x{i + 1}": x[:, i] for i in range(x.shape[1])},
            **{f"xi{i + 1}": xi[:, i] for i in range(xi.shape[1])}}


def verify_smoothing_symbol_bound(mult, x, xi, direct=True, h=None):
    """Fit ``-H_p lambda >= C <x>^(-1-nu) (|xi|^2 + |x|^m)^(1/m) - C'``.

    The lower bound of ``A4`` (``A4 >= C3 <x>^(-1-nu)(|xi| + <x>^(m/2))^(2/m)
    psi(|theta|) chi(r) - C3'``) and the pair bound ``A3 + A5 >= -C6`` are
    fitted alongside.
    """
    dec = mult.decompose(x, xi)
    total = dec["total"]
    usable = ~dec["flags"]
    lead = mult.weight(x, xi)
    fit = fit_lower_bound(total[usable], lead[usable])
    cols = {**_coords(x, xi), **{k: dec[k] for k in ("A1", "A2", "A3", "A4", "A5", "A6")},
            "minus_Hp_lambda": total, "weight": lead, "usable": usable}
    consts = {**fit.as_dict("C"), "usable_fraction": float(np.mean(usable))}
    if direct:
        d = -mult.Hp_direct(x, xi, DIRECT_STEP if h is None else h)
        rel = relative_discrepancy(total, d)
        cols["minus_Hp_lambda_direct"] = d
        cols["relative_discrepancy"] = rel
        consts["max_relative_discrepancy"] = float(np.max(rel[usable]))
    # auxiliary fits
    bx = japanese_bracket(x)
    xin = np.linalg.norm(xi, axis=-1)
    w4 = bx ** (-1.0 - mult.nu) * (xin + bx ** (mult.m / 2.0)) ** (2.0 / mult.m)
    nz = (dec["A4"] != 0) & usable
    fit4 = fit_lower_bound(dec["A4"][nz], w4[nz]) if np.any(nz) else None
    consts["A4_C3"] = fit4.C if fit4 else float("nan")
    consts["A4_C3prime"] = fit4.slacks["Cprime"] if fit4 else float("nan")
    consts["A3_plus_A5_min"] = float(np.min(dec["A3"] + dec["A5"]))
    consts["A6_sup"] = float(np.max(np.abs(dec["A6"])))
    worst = fit.worst_index
    rep = EstimateReport(
        experiment=f"multiplier_smoothing:{mult.spec.name}:m={mult.m:g}",
        columns=cols,
        constants=consts,
        passed=fit.passed,
        environment={"nu": mult.nu, "M0": mult.M0, "eps": mult.cutoffs.eps, "R": mult.esc.R, "M": mult.esc.M},
        notes=[f"worst sample: x={x[worst].tolist()}, xi={xi[worst].tolist()}"],
    )
    return rep


def verify_angular_symbol_bound(mult2, x, xi, sigma0=1.0, direct=True, h=None):
    """Fit ``-H_p lambda >= C0 <x>^-3 W sum A_jk^2 - C1 <x>^(-1-sigma0) W - C2``,
    ``W = (|xi| + <x>^(m/2))^(2/m)``, plus the bounds on ``H_p A_jk``, ``D`` and ``I2``.
    """
    n = x.shape[-1]
    if n < 2:
        raise ValueError("the angular inequality is vacuous for n = 1 (all A_jk vanish)")
    dec = mult2.decompose(x, xi)
    usable = ~dec["flags"]
    total = dec["total"]
    bx = japanese_bracket(x)
    xin = np.linalg.norm(xi, axis=-1)
    W = (xin + bx ** (mult2.m / 2.0)) ** (2.0 / mult2.m)
    lead = bx**-3.0 * W * A_squared_sum(x, xi)
    w1 = bx ** (-1.0 - sigma0) * W
    fit = fit_lower_bound(total[usable], lead[usable], slacks={"C1": w1[usable], "C2": np.ones(int(usable.sum()))})
    cols = {**_coords(x, xi), "I1": dec["I1"], "I2": dec["I2"], "minus_Hp_lambda": total,
            "lead": lead, "w1": w1, "D": dec["D"], "usable": usable}
    consts = {**fit.as_dict("C0"), "usable_fraction": float(np.mean(usable))}
    if direct:
        d = -mult2.Hp_direct(x, xi, DIRECT_STEP if h is None else h)
        rel = relative_discrepancy(total, d)
        cols["minus_Hp_lambda_direct"] = d
        cols["relative_discrepancy"] = rel
        consts["max_relative_discrepancy"] = float(np.max(rel[usable]))
    # |H_p A_jk| <= C |xi| <x>^-sigma0
    hpa = np.zeros(len(x))
    for j in range(n):
        for k in range(n):
            if j != k:
                hpa = np.maximum(hpa, np.abs(Hp_A_jk(mult2.spec, x, xi, j, k)))
    ratio = hpa / np.maximum(xin * bx ** (-sigma0), 1e-300)
    consts["HpA_constant"] = float(np.max(ratio))
    cols["HpA_ratio"] = ratio
    supp = dec["support"] & usable
    if np.any(supp):
        Dr = dec["D"][supp] / bx[supp] ** 2
        consts["D_C3"] = float(np.min(Dr))
        consts["D_C4"] = float(np.max(Dr))
        consts["I2_sup"] = float(np.max(np.abs(dec["I2"][supp])))
    return EstimateReport(
        experiment=f"multiplier_angular:{mult2.spec.name}:m={mult2.m:g}",
        columns=cols,
        constants=consts,
        passed=fit.passed,
        environment={"sigma0": sigma0, "R": mult2.esc.R, "M": mult2.esc.M},
    )
