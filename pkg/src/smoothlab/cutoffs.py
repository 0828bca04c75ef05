"""Smooth cutoff functions built from the exp(-1/t) bump.

Every cutoff here is an exact C-infinity switch with closed-form first and
second derivatives, so Hamiltonian derivatives of composite symbols can be
assembled analytically and cross-checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _bump(s):
    """exp(-1/s) for s > 0, zero otherwise."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_step(s):
    """Increasing C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    f0 = _bump(s)
    f1 = _bump(1.0 - s)
    return f0 / (f0 + f1)


def smooth_step_deriv(s, order=1):
    """First or second derivative of :func:`smooth_step`."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 0) & (s < 1)
    if not np.any(inside):
        return out
    u = s[inside]
    v = 1.0 - u
    f, g = np.exp(-1.0 / u), np.exp(-1.0 / v)
    df, dg = f / u**2, g / v**2  # d/du f(u), d/dv g(v)
    den = f + g
    # S = f/(f+g); with g = g(1-u): S' = (df*g + f*dg)/den^2
    num1 = df * g + f * dg
    if order == 1:
        out[inside] = num1 / den**2
        return out
    if order != 2:
        raise ValueError("order must be 1 or 2")
    d2f = f * (1.0 - 2.0 * u) / u**4
    d2g = g * (1.0 - 2.0 * v) / v**4
    # d/du of num1, remembering d/du g(1-u) = -dg
    dnum1 = d2f * g - df * dg + df * dg - f * d2g
    dden = df - dg
    out[inside] = dnum1 / den**2 - 2.0 * num1 * dden / den**3
    return out


def ramp_down(t, lo, hi):
    """Smooth switch equal to 1 on (-inf, lo] and 0 on [hi, inf)."""
    return 1.0 - smooth_step((np.asarray(t, dtype=float) - lo) / (hi - lo))


def ramp_down_deriv(t, lo, hi, order=1):
    scale = 1.0 / (hi - lo)
    return -smooth_step_deriv((np.asarray(t, dtype=float) - lo) * scale, order) * scale**order


@dataclass(frozen=True)
class CutoffFamily:
    """The cutoffs used by the multiplier constructions.

    Parameters
    ----------
    eps : float
        Support parameter of the switch ``psi``: ``supp psi`` lies in
        ``[eps, inf)`` and ``psi = 1`` on ``[2 eps, inf)``.
    """

    eps: float = 0.125

    def __post_init__(self):
        if not (self.eps > 0 and np.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps}")

    # psi and the derived odd/even pair
    def psi(self, t):
        return smooth_step((np.asarray(t, dtype=float) - self.eps) / self.eps)

    def dpsi(self, t, order=1):
        return smooth_step_deriv((np.asarray(t, dtype=float) - self.eps) / self.eps, order) / self.eps**order

    def psi0(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 - self.psi(t) - self.psi(-t)

    def psi1(self, t):
        t = np.asarray(t, dtype=float)
        return self.psi(-t) - self.psi(t)

    def dpsi0(self, t):
        t = np.asarray(t, dtype=float)
        return -np.sign(t) * self.dpsi(np.abs(t))

    def dpsi1(self, t):
        return -self.dpsi(np.abs(np.asarray(t, dtype=float)))

    # chi on the half line: 1 on [0, 1/2], 0 on [1, inf)
    @staticmethod
    def chi_unit(t):
        return ramp_down(t, 0.5, 1.0)

    @staticmethod
    def dchi_unit(t, order=1):
        return ramp_down_deriv(t, 0.5, 1.0, order)

    # theta: 1 on [0, 1], 0 on [2, inf)
    @staticmethod
    def theta_cut(t):
        return ramp_down(t, 1.0, 2.0)

    @staticmethod
    def dtheta_cut(t, order=1):
        return ramp_down_deriv(t, 1.0, 2.0, order)
