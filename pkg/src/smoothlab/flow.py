"""Bicharacteristic flow of the principal symbol and the non-trapping probe."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .symbols import PhasePoint, eval_p, hamilton_field

# Yoshida triple-jump weights for a symmetric 4th-order composition
_TJ1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_TJ0 = 1.0 - 2.0 * _TJ1


class FlowError(RuntimeError):
    """Integration failure; ``partial`` holds the trajectory computed so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class StepPolicy:
    """Time stepping of the implicit midpoint rule.

    ``dt`` is measured on the energy shell ``p = 1``; with ``normalized`` the
    actual step is ``dt / sqrt(p)`` so that steps cover a fixed fraction of the
    local wavelength at any frequency.
    """

    dt: float = 1e-2
    order: int = 4
    tol: float = 1e-12
    max_iter: int = 50
    max_halvings: int = 8
    normalized: bool = True


def midpoint_step(spec, x, xi, dt, tol=1e-12, max_iter=50):
    """One implicit midpoint step by fixed-point iteration.

    Returns ``(x1, xi1, converged)`` with a per-sample convergence mask.
    ``dt`` may be a scalar or an array over the batch axes.
    """
    dt = np.asarray(dt, dtype=float)[..., None]
    vx, vxi = hamilton_field(spec, x, xi)
    x1 = x + dt * vx
    xi1 = xi + dt * vxi
    conv = np.zeros(x.shape[:-1], dtype=bool)
    for _ in range(max_iter):
        vx, vxi = hamilton_field(spec, 0.5 * (x + x1), 0.5 * (xi + xi1))
        xn = x + dt * vx
        xin = xi + dt * vxi
        scale = 1.0 + np.abs(xn).max(axis=-1) + np.abs(xin).max(axis=-1)
        err = np.maximum(np.abs(xn - x1).max(axis=-1), np.abs(xin - xi1).max(axis=-1)) / scale
        x1, xi1 = xn, xin
        conv = err <= tol
        if np.all(conv):
            break
    return x1, xi1, conv


def composed_step(spec, x, xi, dt, policy=StepPolicy(), _depth=0):
    """Symmetric step of order 2 (plain midpoint) or 4 (triple jump).

    A stalled fixed-point iteration triggers two half steps, recursively up
    to ``policy.max_halvings`` times.
    """
    if policy.order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    weights = (1.0,) if policy.order == 2 else (_TJ1, _TJ0, _TJ1)
    xs, xis = x, xi
    for w in weights:
        xn, xin, conv = midpoint_step(spec, xs, xis, w * dt, policy.tol, policy.max_iter)
        if not np.all(conv):
            if _depth >= policy.max_halvings:
                raise FlowError("fixed-point iteration stalled after repeated step halving")
            half = np.asarray(dt) / 2.0
            xa, xia = composed_step(spec, x, xi, half, policy, _depth + 1)
            return composed_step(spec, xa, xia, half, policy, _depth + 1)
        xs, xis = xn, xin
    return xs, xis


@dataclass
class FlowTrajectory:
    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    p: np.ndarray

    @property
    def energy_drift(self):
        p0 = self.p[0]
        return float(np.max(np.abs(self.p - p0) / np.where(p0 > 0, p0, 1.0)))

    @property
    def end(self):
        return self.x[-1], self.xi[-1]

    def to_csv(self, path):
        """Columns ``t, x1..xn, xi1..xin, p``; single trajectories only."""
        if self.x.ndim != 2:
            raise ValueError("CSV dump supports a single trajectory")
        n = self.x.shape[-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"xi{i + 1}" for i in range(n)] + ["p"])
            for k in range(len(self.times)):
                w.writerow([repr(float(v)) for v in
                            (self.times[k], *self.x[k], *self.xi[k], self.p[k])])


def flow(spec, rho0, t_end, policy=StepPolicy(), xi0=None, store=True):
    """Integrate ``x' = dp/dxi, xi' = -dp/dx`` from ``rho0`` to ``t_end``.

    ``rho0`` is a :class:`PhasePoint` or a position array (with ``xi0``);
    batches are integrated in lockstep with a common step.  ``t_end`` may be
    negative.
    """
    if isinstance(rho0, PhasePoint):
        x, xi = rho0
    else:
        x, xi = np.asarray(rho0, dtype=float), np.asarray(xi0, dtype=float)
    x = np.array(x, dtype=float)
    xi = np.array(xi, dtype=float)
    p0 = eval_p(spec, x, xi)
    dt = policy.dt
    if policy.normalized:
        pmax = float(np.max(p0))
        if pmax > 0:
            dt = dt / np.sqrt(pmax)
    nsteps = int(np.ceil(abs(t_end) / dt - 1e-9)) if t_end != 0 else 0
    h = t_end / nsteps if nsteps else 0.0
    times = [0.0]
    xs, xis, ps = [x], [xi], [p0]
    for k in range(nsteps):
        try:
            x, xi = composed_step(spec, x, xi, h, policy)
        except FlowError as err:
            partial = FlowTrajectory(np.array(times), np.array(xs), np.array(xis), np.array(ps))
            raise FlowError(str(err), partial) from None
        if store or k == nsteps - 1:
            times.append((k + 1) * h)
            xs.append(x)
            xis.append(xi)
            ps.append(eval_p(spec, x, xi))
    return FlowTrajectory(np.array(times), np.array(xs), np.array(xis), np.array(ps))


def flow_to(spec, x, xi, t, order=4, substeps=1, tol=1e-13):
    """End point of the flow after time ``t`` (no storage); ``t`` may be per-sample."""
    t = np.asarray(t, dtype=float)
    pol = StepPolicy(order=order, tol=tol)
    h = t / substeps
    for _ in range(substeps):
        x, xi = composed_step(spec, x, xi, h, pol)
    return x, xi


def sample_energy_shell(spec, count, radius, rng, x_center=None):
    """Points on ``S* = {p = 1}``: uniform positions in a ball, uniform directions."""
    n = spec.n
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    u = rng.normal(size=(count, n))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    x = u * radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
    if x_center is not None:
        x = x + x_center
    xi = d / np.sqrt(eval_p(spec, x, d))[:, None]
    return x, xi


@dataclass
class TrappingVerdict:
    status: str
    escape_time: Optional[float]
    max_radius: float


@dataclass
class ProbeResult:
    verdicts: list
    non_trapping: bool
    t_K: Optional[float]
    counts: dict = field(default_factory=dict)


def nontrapping_probe(spec, x, xi, t_max=1e3, R_esc=20.0, policy=StepPolicy(), return_radius=1e-2, min_return_time=1.0):
    """Classify samples of ``S*`` as escaped, trapped, or inconclusive.

    Each sample is integrated until ``|x(t)| > R_esc`` (escaped) or ``t_max``;
    samples still bounded at ``t_max`` count as trapped when the orbit came
    back within ``return_radius`` of its starting point after
    ``min_return_time``, and as inconclusive otherwise.
    """
    x = np.array(x, dtype=float)
    xi = np.array(xi, dtype=float)
    B = x.shape[0]
    x0, xi0 = x.copy(), xi.copy()
    status = np.array(["running"] * B, dtype=object)
    esc_t = np.full(B, np.nan)
    rmax = np.linalg.norm(x, axis=-1)
    returned = np.zeros(B, dtype=bool)
    active = np.ones(B, dtype=bool)
    dt = policy.dt
    t = 0.0
    nsteps = int(np.ceil(t_max / dt))
    for k in range(nsteps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        try:
            xn, xin = composed_step(spec, x[idx], xi[idx], dt, policy)
        except FlowError:
            # isolate failures one by one
            xn, xin = x[idx].copy(), xi[idx].copy()
            for j, s in enumerate(idx):
                try:
                    a, b = composed_step(spec, x[s:s + 1], xi[s:s + 1], dt, policy)
                    xn[j], xin[j] = a[0], b[0]
                except FlowError:
                    status[s] = "inconclusive"
                    active[s] = False
        x[idx], xi[idx] = xn, xin
        t = (k + 1) * dt
        r = np.linalg.norm(x[idx], axis=-1)
        rmax[idx] = np.maximum(rmax[idx], r)
        out = r > R_esc
        esc_idx = idx[out & active[idx]]
        status[esc_idx] = "escaped"
        esc_t[esc_idx] = t
        active[esc_idx] = False
        if t >= min_return_time:
            d = np.maximum(np.abs(x[idx] - x0[idx]).max(axis=-1), np.abs(xi[idx] - xi0[idx]).max(axis=-1))
            returned[idx] |= d < return_radius
    for s in np.flatnonzero(active):
        status[s] = "trapped" if returned[s] else "inconclusive"
    verdicts = [TrappingVerdict(str(status[s]), None if np.isnan(esc_t[s]) else float(esc_t[s]), float(rmax[s]))
                for s in range(B)]
    escaped = status == "escaped"
    counts = {k: int(np.sum(status == k)) for k in ("escaped", "trapped", "inconclusive")}
    t_K = float(np.nanmax(esc_t)) if np.any(escaped) else None
    return ProbeResult(verdicts, bool(np.all(escaped)), t_K, counts)
