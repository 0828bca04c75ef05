"""Shipped metrics, potentials and named problem specifications."""

from __future__ import annotations

import re

import numpy as np

from .cutoffs import ramp_down
from .symbols import HamiltonianSpec, MetricField, SymbolFn, japanese_bracket

# --------------------------------------------------------------------- metrics


def flat_metric(n):
    eye = np.eye(n)

    def value(x):
        return np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()

    def grad(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    return MetricField(value, grad, name="flat")


def conformal_metric(n, c, dc, name, params=None):
    """``g^{jk} = c(x) delta_jk`` with ``dc`` the gradient of ``c``."""
    eye = np.eye(n)

    def value(x):
        return c(x)[..., None, None] * eye

    def grad(x):
        return eye[..., None] * dc(x)[..., None, None, :]

    return MetricField(value, grad, name=name, params=dict(params or {}))


def perturbed_flat_metric(n, eps=0.1, sigma0=1.0):
    """``g^{jk} = (1 + eps <x>^-sigma0) delta_jk``."""

    def c(x):
        return 1.0 + eps * japanese_bracket(x) ** (-sigma0)

    def dc(x):
        return (-eps * sigma0 * japanese_bracket(x) ** (-sigma0 - 2.0))[..., None] * x

    return conformal_metric(n, c, dc, "perturbed_flat", {"eps": eps, "sigma0": sigma0})


def anisotropic_metric(n, eps=0.1, sigma0=1.0):
    """``g^{jk} = delta_jk + eps <x>^-sigma0 B_jk`` with a fixed symmetric ``B``.

    Not rotation invariant, so angular symbols are not conserved by its flow.
    """
    B = np.array([[1.0, 0.5], [0.5, -0.5]])[:n, :n] if n <= 2 else np.diag(np.linspace(1, -0.5, n))
    eye = np.eye(n)

    def value(x):
        w = eps * japanese_bracket(x) ** (-sigma0)
        return eye + w[..., None, None] * B

    def grad(x):
        dw = (-eps * sigma0 * japanese_bracket(x) ** (-sigma0 - 2.0))[..., None] * x
        return B[..., None] * dw[..., None, None, :]

    return MetricField(value, grad, name="anisotropic", params={"eps": eps, "sigma0": sigma0, "B": B.tolist()})


def trapping_metric(n=2, r0=1.0, gap=1.5):
    """Conformal metric with a stable circular geodesic on ``|x| = r0``.

    ``c(r) = 1 + A exp(-(r - r0 - gap)^2)`` with ``A`` fixed by the balance
    condition ``r c'(r) = 2 c(r)`` at ``r = r0``.
    """
    r1 = r0 + gap
    if r0 * gap <= 1:
        raise ValueError("need r0 * gap > 1 for a circular geodesic")
    A = 1.0 / (np.exp(-gap * gap) * (r0 * gap - 1.0))

    def c(x):
        r = np.sqrt(np.sum(x * x, axis=-1))
        return 1.0 + A * np.exp(-(r - r1) ** 2)

    def dc(x):
        r = np.sqrt(np.sum(x * x, axis=-1))
        dr = -2.0 * A * (r - r1) * np.exp(-(r - r1) ** 2)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r[..., None] > 0, (dr / safe)[..., None] * x, 0.0)

    return conformal_metric(n, c, dc, "trap", {"r0": r0, "gap": gap, "A": A})


# ------------------------------------------------------------------ potentials


def power_potential(m):
    def V(t, x):
        r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
        return r2 ** (m / 2.0)

    return V


def dyadic_partition(r_lo=0.5, r_hi=0.9):
    """Return ``(psi, phi)`` with ``psi(x) + sum_j phi(2^-j x) = 1``.

    ``psi`` is supported in ``|x| <= r_hi < 1`` and ``phi`` in
    ``1/2 <= |x| <= 2 r_hi``; the sum telescopes.
    """

    def h(r):
        return ramp_down(r, r_lo, r_hi)

    def psi(x):
        return h(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def phi(x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return h(r / 2.0) - h(r)

    return psi, phi


def _n_shells(x):
    rmax = float(np.max(np.linalg.norm(np.asarray(x, dtype=float), axis=-1), initial=1.0))
    return int(np.ceil(np.log2(max(rmax, 1.0)))) + 3


def partition_residual(x):
    """``psi(x) + sum_j phi(2^-j x) - 1`` summed term by term."""
    psi, phi = dyadic_partition()
    x = np.asarray(x, dtype=float)
    total = psi(x)
    for j in range(_n_shells(x)):
        total = total + phi(x / 2.0**j)
    return total - 1.0


def checkerboard_potential(m):
    """Potential alternating ``|x|^m`` (even dyadic shells) and ``-|x|^2`` (odd shells).

    It lies in ``S(<x>^m, g)`` and is bounded below by ``-|x|^2`` but has no
    lower bound of the form ``C|x|^m`` at infinity.
    """
    if not m >= 2:
        raise ValueError(f"checkerboard potential needs m >= 2, got {m}")
    _, phi = dyadic_partition()

    def V(t, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        even = np.zeros(x.shape[:-1])
        odd = np.zeros(x.shape[:-1])
        for j in range(_n_shells(x)):
            term = phi(x / 2.0**j)
            if j % 2 == 0:
                even += term
            else:
                odd += term
        return r2 ** (m / 2.0) * even - r2 * odd

    return V


def build_checkerboard_potential(m):
    """The checkerboard potential wrapped as a ``(t, x)`` symbol."""
    return SymbolFn(checkerboard_potential(m), arity="t,x", name=f"checkerboard({m:g})")


# -------------------------------------------------------------------- registry

SPEC_NAMES = {
    "flat": "flat metric, V = 0 (m = 2)",
    "harmonic": "flat metric, V = |x|^2 (m = 2)",
    "quartic": "flat metric, V = |x|^4 (m = 4)",
    "checkerboard(m)": "flat metric, dyadic checkerboard potential of order m",
    "perturbed_flat(eps, sigma0)": "g = (1 + eps <x>^-sigma0) I, V = 0 (m = 2)",
    "anisotropic(eps, sigma0)": "g = I + eps <x>^-sigma0 B, V = 0 (m = 2)",
    "trap(r0)": "conformal metric with a circular geodesic at |x| = r0 (n = 2)",
}

METRICS = ("flat", "perturbed_flat", "anisotropic", "trap")
POTENTIALS = ("zero", "harmonic", "quartic", "power", "checkerboard")


def make_metric(name, n, eps=0.1, sigma0=1.0, r0=1.0):
    if name == "flat":
        return flat_metric(n), 1.0
    if name == "perturbed_flat":
        return perturbed_flat_metric(n, eps, sigma0), min(1.0, 1.0 + eps)
    if name == "anisotropic":
        B = np.array([[1.0, 0.5], [0.5, -0.5]])[:n, :n]
        lam = np.abs(np.linalg.eigvalsh(B)).max()
        return anisotropic_metric(n, eps, sigma0), 1.0 - abs(eps) * lam
    if name == "trap":
        return trapping_metric(n, r0), 1.0
    raise ValueError(f"unknown metric {name!r}; choose from {METRICS}")


def make_potential(name, m):
    if name in (None, "zero"):
        return None
    if name == "harmonic":
        return power_potential(2)
    if name == "quartic":
        return power_potential(4)
    if name == "power":
        return power_potential(m)
    if name == "checkerboard":
        return checkerboard_potential(m)
    raise ValueError(f"unknown potential {name!r}; choose from {POTENTIALS}")


_DEFAULTS = {
    "flat": ("flat", "zero", 2.0),
    "harmonic": ("flat", "harmonic", 2.0),
    "quartic": ("flat", "quartic", 4.0),
    "checkerboard": ("flat", "checkerboard", 4.0),
    "perturbed_flat": ("perturbed_flat", "zero", 2.0),
    "anisotropic": ("anisotropic", "zero", 2.0),
    "trap": ("trap", "zero", 2.0),
}


def make_spec(name="flat", n=1, m=None, potential=None, eps=0.1, sigma0=1.0, r0=1.0, T=1.0, magnetic=None):
    """Build a :class:`HamiltonianSpec` from a shipped name.

    ``name`` may carry arguments, e.g. ``"checkerboard(4)"`` or
    ``"perturbed_flat(0.1, 1)"``; explicit keywords override the defaults,
    and ``potential`` swaps the potential of the named metric.
    """
    base, args = parse_spec_name(name)
    if base not in _DEFAULTS:
        raise ValueError(f"unknown spec {name!r}; available: {sorted(SPEC_NAMES)}")
    metric_name, pot_name, m_default = _DEFAULTS[base]
    if base == "checkerboard" and args:
        m_default = args[0]
    if base in ("perturbed_flat", "anisotropic") and args:
        eps = args[0]
        if len(args) > 1:
            sigma0 = args[1]
    if base == "trap" and args:
        r0 = args[0]
    if potential is not None:
        pot_name = potential
    m = float(m if m is not None else m_default)
    if pot_name == "quartic" and m != 4:
        pot_name = "power"
    metric, delta = make_metric(metric_name, n, eps, sigma0, r0)
    params = {"name": name, "metric": metric_name, "potential": pot_name, "m": m, "n": n,
              "eps": eps, "sigma0": sigma0}
    if metric_name == "trap":
        params["r0"] = r0
    return HamiltonianSpec(n=n, m=m, metric=metric, potential=make_potential(pot_name, m), magnetic=magnetic,
                           T=T, delta=delta, name=base, params=params)


_NAME_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(([^)]*)\))?\s*$")


def parse_spec_name(name):
    match = _NAME_RE.match(name)
    if not match:
        raise ValueError(f"malformed spec name {name!r}")
    base, argtext = match.groups()
    args = []
    if argtext:
        for tok in argtext.split(","):
            tok = tok.strip()
            if "=" in tok:
                tok = tok.split("=", 1)[1]
            args.append(float(tok))
    return base, args
